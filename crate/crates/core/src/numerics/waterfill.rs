use crate::{Error, Real, Result};

/// Water-filling power allocation `v_i = (ν − σ²/h_i)⁺` with `Σ v_i = budget`.
///
/// Non-positive gains receive no power. The water level is found by walking
/// the sorted active set, which gives the exact level rather than a bisection
/// estimate.
pub fn water_filling<T: Real>(gains: &[T], budget: T, noise: T) -> Result<Vec<T>> {
    if gains.is_empty() {
        return Err(Error::Empty("water-filling gains"));
    }
    if !(budget > T::zero()) || !(noise > T::zero()) {
        return Err(Error::Precondition(
            "water-filling needs positive budget and noise".into(),
        ));
    }
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > T::zero()).collect();
    if order.is_empty() {
        return Err(Error::Degenerate("all water-filling gains are zero"));
    }
    order.sort_by(|&a, &b| {
        gains[b]
            .partial_cmp(&gains[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    // Largest k with ν_k = (P + Σ_{i≤k} σ²/h_i)/k > σ²/h_k.
    let mut level = T::zero();
    let mut floor_sum = T::zero();
    for (k, &i) in order.iter().enumerate() {
        let floor = noise / gains[i];
        let candidate = (budget + floor_sum + floor) / T::from_usize_lossy(k + 1);
        if candidate > floor {
            floor_sum += floor;
            level = candidate;
        } else {
            break;
        }
    }
    Ok(gains
        .iter()
        .map(|&h| {
            if h > T::zero() {
                (level - noise / h).max(T::zero())
            } else {
                T::zero()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_gains_split_evenly() {
        let v = water_filling::<f64>(&[1.0, 1.0], 3.0, 0.5).unwrap();
        assert!((v[0] - 1.5).abs() < 1e-14 && (v[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn single_gain_takes_everything() {
        let v = water_filling::<f64>(&[0.2], 7.0, 1.0).unwrap();
        assert!((v[0] - 7.0).abs() < 1e-14);
    }

    #[test]
    fn weak_mode_below_water() {
        // two-channel closed form: second mode joins only if P > σ²/h₂ − σ²/h₁
        let v = water_filling::<f64>(&[1.0, 1e-6], 1.0, 1.0).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-14);
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn two_channel_both_active() {
        // ν = (P + 1/h1 + 1/h2)/2 = (4 + 1 + 2)/2 = 3.5
        let v = water_filling::<f64>(&[1.0, 0.5], 4.0, 1.0).unwrap();
        assert!((v[0] - 2.5).abs() < 1e-14 && (v[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(
            water_filling::<f64>(&[], 1.0, 1.0),
            Err(Error::Empty(_))
        ));
    }

    proptest! {
        #[test]
        fn allocations_sum_to_budget(
            gains in proptest::collection::vec(1e-4f64..10.0, 1..12),
            budget in 1e-3f64..100.0,
            noise in 1e-3f64..10.0,
        ) {
            let v = water_filling(&gains, budget, noise).unwrap();
            let total: f64 = v.iter().sum();
            prop_assert!((total - budget).abs() <= 1e-9 * budget.max(1.0));
            prop_assert!(v.iter().all(|&x| x >= 0.0));
            // common water level across active modes
            let levels: Vec<f64> = v.iter().zip(&gains)
                .filter(|(x, _)| **x > 0.0)
                .map(|(x, h)| x + noise / h)
                .collect();
            for l in &levels {
                prop_assert!((l - levels[0]).abs() <= 1e-9 * levels[0]);
            }
        }
    }
}
