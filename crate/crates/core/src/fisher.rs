//! Fisher information, the posterior CRB and its upper bound, point and
//! expected CRBs, achievable rate and beampatterns.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{
    angle_domain, rx_deriv_norm_sqr, steering_tx, steering_tx_deriv, ChannelMatrix,
    GaussianMixture, SystemConfig, TargetEnvironment,
};
use crate::numerics::{
    hermitian_evd, integrate_scalar, is_hermitian, log_det_hpd, trace_product, QuadratureSpec,
};
use crate::{CMatrix, CVector, Error, Real, Result};

/// Prior-averaged matrices entering the Fisher information.
///
/// `a1 = ∫‖ḃ‖² a aᴴ p`, `a2 = N_r ∫ ȧ ȧᴴ p`, `a3 = N_r ∫ ȧ aᴴ p`,
/// `a4 = N_r ∫ a aᴴ p`; `fp11 = Σ p_k/σ_k² − rho` is the prior Fisher
/// information.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrices<T: Real> {
    pub a1: CMatrix<T>,
    pub a2: CMatrix<T>,
    pub a3: CMatrix<T>,
    pub a4: CMatrix<T>,
    pub rho: T,
    pub fp11: T,
    /// Prior mass captured on the integration domain.
    pub prior_mass: T,
}

impl<T: Real> SensingMatrices<T> {
    pub fn n_tx(&self) -> usize {
        self.a1.nrows()
    }

    /// `a1 + a2`.
    pub fn a12(&self) -> CMatrix<T> {
        &self.a1 + &self.a2
    }

    /// The three traces `(tr((A₁+A₂)W), tr(A₃W), tr(A₄W))` that the exact
    /// bound depends on.
    pub fn traces(&self, w: &CMatrix<T>) -> (T, Complex<T>, T) {
        let u = trace_product(&self.a1, w).re + trace_product(&self.a2, w).re;
        let c = trace_product(&self.a3, w);
        let v = trace_product(&self.a4, w).re;
        (u, c, v)
    }
}

/// Transmit covariance `W`: Hermitian and PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance<T: Real> {
    w: CMatrix<T>,
}

impl<T: Real> Covariance<T> {
    /// Checks Hermitian symmetry (1e-10) and `λ_min ≥ −1e-9 λ_max`.
    pub fn new(w: CMatrix<T>) -> Result<Self> {
        let tol = T::lit(1e-10).max(T::lit(256.0) * T::eps());
        if !is_hermitian(&w, tol) {
            return Err(Error::NotHermitian(f64::NAN));
        }
        let evd = hermitian_evd(&w)?;
        let max = evd.values[0].max(T::zero());
        let min = evd.values[evd.values.len() - 1];
        let psd_tol = T::lit(1e-9).max(T::lit(64.0) * T::eps());
        if min < -psd_tol * max.max(T::tiny()) {
            return Err(Error::NotPositiveDefinite(min.to_f64_lossy()));
        }
        Ok(Self { w })
    }

    /// As [`Covariance::new`] plus `tr W ≤ P (1 + 1e-9)`.
    pub fn with_budget(w: CMatrix<T>, power: T) -> Result<Self> {
        let c = Self::new(w)?;
        let tol = T::lit(1e-9).max(T::lit(64.0) * T::eps());
        if c.trace() > power * (T::one() + tol) {
            return Err(Error::Precondition(format!(
                "trace {:?} exceeds power budget {:?}",
                c.trace(),
                power
            )));
        }
        Ok(c)
    }

    pub(crate) fn from_matrix_unchecked(w: CMatrix<T>) -> Self {
        Self { w }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            w: CMatrix::zeros(n, n),
        }
    }

    /// `(P/N_t) I`.
    pub fn isotropic(n: usize, power: T) -> Self {
        let s = power / T::from_usize_lossy(n);
        Self {
            w: CMatrix::identity(n, n).map(|z| z * s),
        }
    }

    /// `P v vᴴ / ‖v‖²`.
    pub fn rank_one(v: &CVector<T>, power: T) -> Self {
        let n2 = v.iter().fold(T::zero(), |a, z| a + z.norm_sqr());
        let s = power / n2;
        Self {
            w: (v * v.adjoint()).map(|z| z * s),
        }
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.w
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.w
    }

    pub fn trace(&self) -> T {
        self.w.diagonal().iter().fold(T::zero(), |a, z| a + z.re)
    }

    pub fn n_tx(&self) -> usize {
        self.w.nrows()
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            w: self.w.map(|z| z * s),
        }
    }
}

/// Integrates the four sensing matrices and the prior Fisher term.
pub fn compute_sensing_matrices<T: Real>(
    prior: &GaussianMixture<T>,
    cfg: &SystemConfig<T>,
    quad: &QuadratureSpec<T>,
) -> Result<SensingMatrices<T>> {
    cfg.validate()?;
    let n = cfg.n_tx;
    let nr = T::from_usize_lossy(cfg.n_rx);
    let zeros = || vec![CMatrix::<T>::zeros(n, n); 4];
    let mats: Vec<CMatrix<T>> = integrate_scalar(
        |theta: T| {
            let p = prior.pdf(theta);
            if p == T::zero() {
                return zeros();
            }
            let a = steering_tx(theta, cfg);
            let ad = steering_tx_deriv(theta, cfg);
            let bd2 = rx_deriv_norm_sqr(theta, cfg);
            let aa = &a * a.adjoint();
            let w1 = bd2 * p;
            let wr = nr * p;
            vec![
                aa.map(|z| z * w1),
                (&ad * ad.adjoint()).map(|z| z * wr),
                (&ad * a.adjoint()).map(|z| z * wr),
                aa.map(|z| z * wr),
            ]
        },
        angle_domain(),
        quad,
    )?;
    let scalars: Vec<T> = integrate_scalar(
        |theta: T| {
            let p = prior.pdf(theta);
            if p == T::zero() {
                return vec![T::zero(), T::zero()];
            }
            let (_, spread) = prior.score_and_spread(theta);
            vec![p * spread, p]
        },
        angle_domain(),
        quad,
    )?;
    let rho = scalars[0];
    let fp11 = prior.weighted_inverse_variance() - rho;
    let mut it = mats.into_iter();
    Ok(SensingMatrices {
        a1: it.next().unwrap(),
        a2: it.next().unwrap(),
        a3: it.next().unwrap(),
        a4: it.next().unwrap(),
        rho,
        fp11,
        prior_mass: scalars[1],
    })
}

/// The Schur-complement objective `tr((A₁+A₂)W) − |tr(A₃W)|²/tr(A₄W)`; zero when
/// `tr(A₄W) = 0`.
pub fn schur_objective<T: Real>(w: &CMatrix<T>, m: &SensingMatrices<T>) -> T {
    let (u, c, v) = m.traces(w);
    if v <= T::zero() {
        return T::zero();
    }
    u - c.norm_sqr() / v
}

fn is_zero<T: Real>(w: &CMatrix<T>) -> bool {
    w.iter().all(|z| z.norm_sqr() == T::zero())
}

fn prior_only<T: Real>(m: &SensingMatrices<T>) -> Result<T> {
    if m.fp11 > T::zero() {
        Ok(T::one() / m.fp11)
    } else {
        Err(Error::InfiniteBound(
            "no observation and no prior information",
        ))
    }
}

/// Exact posterior CRB of the azimuth.
///
/// `W = 0` (no radiated power) returns the prior-only limit `1/fp11`.
pub fn pcrb<T: Real>(
    w: &Covariance<T>,
    m: &SensingMatrices<T>,
    env: &TargetEnvironment<T>,
    symbols: usize,
) -> Result<T> {
    let (u, c, v) = m.traces(w.matrix());
    if is_zero(w.matrix()) || v <= T::zero() {
        return prior_only(m);
    }
    let info = m.fp11 + env.fisher_scale(symbols) * (u - c.norm_sqr() / v);
    if !(info > T::zero()) {
        return Err(Error::InfiniteBound(
            "total Fisher information is not positive",
        ));
    }
    Ok(T::one() / info)
}

/// Upper bound `1/(fp11 + 2|α|²L/σ_s² · tr(A₁W))` on the exact PCRB.
pub fn pcrb_upper<T: Real>(
    w: &Covariance<T>,
    m: &SensingMatrices<T>,
    env: &TargetEnvironment<T>,
    symbols: usize,
) -> Result<T> {
    if is_zero(w.matrix()) {
        return prior_only(m);
    }
    let t1 = trace_product(&m.a1, w.matrix()).re;
    let info = m.fp11 + env.fisher_scale(symbols) * t1;
    if !(info > T::zero()) {
        return Err(Error::InfiniteBound(
            "total Fisher information is not positive",
        ));
    }
    Ok(T::one() / info)
}

/// Deterministic-angle CRB at `θ`.
pub fn crb_point<T: Real>(
    theta: T,
    w: &Covariance<T>,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
    symbols: usize,
) -> Result<T> {
    let a = steering_tx(theta, cfg);
    let gain = quad_form(w.matrix(), &a);
    let denom = rx_deriv_norm_sqr(theta, cfg) * gain * env.fisher_scale(symbols);
    if !(denom > T::zero()) {
        return Err(Error::InfiniteBound("no radiated power toward the angle"));
    }
    Ok(T::one() / denom)
}

/// Prior average of [`crb_point`].
pub fn crb_expected<T: Real>(
    w: &Covariance<T>,
    prior: &GaussianMixture<T>,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
    quad: &QuadratureSpec<T>,
    symbols: usize,
) -> Result<T> {
    let singular = std::cell::Cell::new(false);
    let v: T = integrate_scalar(
        |theta: T| {
            let p = prior.pdf(theta);
            if p == T::zero() {
                return T::zero();
            }
            match crb_point(theta, w, env, cfg, symbols) {
                Ok(c) if c.is_finite() => c * p,
                _ => {
                    singular.set(true);
                    T::zero()
                }
            }
        },
        angle_domain(),
        quad,
    )?;
    if singular.get() {
        return Err(Error::QuadratureAccuracy {
            previous: f64::INFINITY,
            last: f64::INFINITY,
        });
    }
    Ok(v)
}

/// `log₂ det(I + H W Hᴴ / σ_c²)` in bits/s/Hz.
pub fn rate<T: Real>(w: &Covariance<T>, h: &ChannelMatrix<T>, noise: T) -> T {
    rate_matrix(w.matrix(), &h.entries, noise)
}

pub(crate) fn rate_matrix<T: Real>(w: &CMatrix<T>, h: &CMatrix<T>, noise: T) -> T {
    let inv = T::one() / noise;
    let m = CMatrix::<T>::identity(h.nrows(), h.nrows()) + (h * w * h.adjoint()).map(|z| z * inv);
    let ld = match log_det_hpd(&m) {
        Some(v) => v,
        None => match hermitian_evd(&crate::numerics::hermitian_part(&m)) {
            Ok(evd) => evd
                .values
                .iter()
                .fold(T::zero(), |a, &x| a + x.max(T::tiny()).ln()),
            Err(_) => T::lit(f64::NAN),
        },
    };
    (ld / T::ln_2()).max(T::zero())
}

/// Radiated power `a(θ)ᴴ W a(θ)` on a grid of angles.
pub fn beampattern<T: Real>(w: &Covariance<T>, grid: &[T], cfg: &SystemConfig<T>) -> Vec<T> {
    grid.iter()
        .map(|&t| quad_form(w.matrix(), &steering_tx(t, cfg)).max(T::zero()))
        .collect()
}

/// `vᴴ M v` (real part).
pub fn quad_form<T: Real>(m: &CMatrix<T>, v: &CVector<T>) -> T {
    v.dotc(&(m * v)).re
}

/// The 3×3 real Fisher information over `(θ, Re α, Im α)` assembled from the
/// sensing matrices, including the prior term.
pub fn fisher_matrix<T: Real>(
    w: &Covariance<T>,
    m: &SensingMatrices<T>,
    env: &TargetEnvironment<T>,
    symbols: usize,
) -> DMatrix<T> {
    let (u, c, v) = m.traces(w.matrix());
    let l = T::from_usize_lossy(symbols);
    let k = T::lit(2.0) * l / env.noise_sense_w;
    let a = env.alpha;
    // J_θα = k · Re{ conj(α) c · [1, j] }
    let x = a.conj() * c;
    let j_ta = DVector::from_vec(vec![k * x.re, -k * x.im]);
    let mut f = DMatrix::<T>::zeros(3, 3);
    f[(0, 0)] = k * a.norm_sqr() * u + m.fp11;
    f[(0, 1)] = j_ta[0];
    f[(1, 0)] = j_ta[0];
    f[(0, 2)] = j_ta[1];
    f[(2, 0)] = j_ta[1];
    f[(1, 1)] = k * v;
    f[(2, 2)] = k * v;
    f
}

/// Serialisable summary of the bounds for one design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport<T> {
    pub pcrb: T,
    pub pcrb_upper: T,
    pub crb_expected: T,
    pub rate: T,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{steering_rx, steering_rx_deriv, MixtureComponent};
    use crate::testutil::{scenario_cfg, scenario_env, scenario_prior};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn env(cfg: &SystemConfig<f64>) -> TargetEnvironment<f64> {
        scenario_env(cfg)
    }

    fn random_psd(n: usize, power: f64, rng: &mut ChaCha8Rng) -> Covariance<f64> {
        let rank = rng.random_range(1..=n);
        let g = CMatrix::<f64>::from_fn(n, rank, |_, _| {
            Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let w = &g * g.adjoint();
        let tr: f64 = w.diagonal().iter().map(|z| z.re).sum();
        Covariance::new(w.map(|z| z * (power / tr))).unwrap()
    }

    /// Independent route: integrate the per-angle Fisher matrix built from
    /// the derivatives of the noiseless echo mean, then invert.
    fn pcrb_by_full_inverse(
        w: &Covariance<f64>,
        prior: &GaussianMixture<f64>,
        cfg: &SystemConfig<f64>,
        env: &TargetEnvironment<f64>,
    ) -> f64 {
        let quad = QuadratureSpec::default();
        let wm = w.matrix();
        let l = cfg.symbols as f64;
        let k = 2.0 * l / env.noise_sense_w;
        let alpha = env.alpha;
        let entries: Vec<f64> = integrate_scalar(
            |t: f64| {
                let p = prior.pdf(t);
                let a = steering_tx(t, cfg);
                let ad = steering_tx_deriv(t, cfg);
                let b = steering_rx(t, cfg);
                let bd = steering_rx_deriv(t, cfg);
                // derivative directions of α b aᴴ with respect to θ, Re α, Im α
                let d_theta = (&bd * a.adjoint() + &b * ad.adjoint()).map(|z| z * alpha);
                let d_re = &b * a.adjoint();
                let d_im = (&b * a.adjoint()).map(|z| z * Complex::new(0.0, 1.0));
                let ds = [d_theta, d_re, d_im];
                let mut out = Vec::with_capacity(9);
                for i in 0..3 {
                    for j in 0..3 {
                        let v = trace_product(&(ds[i].adjoint() * &ds[j]), wm).re;
                        out.push(k * v * p);
                    }
                }
                out
            },
            angle_domain(),
            &quad,
        )
        .unwrap();
        let mut f = nalgebra::Matrix3::<f64>::from_row_slice(&entries);
        // prior Fisher via the score, by quadrature of (∂ ln p)² p
        let fp: f64 = integrate_scalar(
            |t: f64| {
                let h = 1e-6;
                let s = (prior.ln_pdf(t + h) - prior.ln_pdf(t - h)) / (2.0 * h);
                s * s * prior.pdf(t)
            },
            angle_domain(),
            &quad,
        )
        .unwrap();
        f[(0, 0)] += fp;
        f.try_inverse().unwrap()[(0, 0)]
    }

    #[test]
    fn single_component_has_no_rho() {
        let prior = GaussianMixture::single(0.3, 0.01).unwrap();
        let m =
            compute_sensing_matrices(&prior, &scenario_cfg(4), &QuadratureSpec::default()).unwrap();
        assert!(m.rho.abs() < 1e-15);
        assert!((m.fp11 - 100.0).abs() < 1e-6 * 100.0);
    }

    #[test]
    fn single_antenna_matrices() {
        let prior = scenario_prior();
        let cfg = scenario_cfg(1);
        let m = compute_sensing_matrices(&prior, &cfg, &QuadratureSpec::default()).unwrap();
        assert!(m.a2[(0, 0)].norm_sqr() < 1e-28);
        assert!(m.a3[(0, 0)].norm_sqr() < 1e-28);
        assert!((m.a4[(0, 0)].re - 12.0 * m.prior_mass).abs() < 1e-9);
        assert!((m.prior_mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scenario_prior_fisher_bounds() {
        let prior = scenario_prior();
        let m = compute_sensing_matrices(&prior, &scenario_cfg(10), &QuadratureSpec::default())
            .unwrap();
        assert!(m.fp11 > 0.0);
        assert!(m.fp11 <= prior.weighted_inverse_variance());
        // a1, a2, a4 Hermitian PSD; tr(a4) = N_r N_t · mass
        for a in [&m.a1, &m.a2, &m.a4] {
            let evd = hermitian_evd(a).unwrap();
            assert!(evd.values[evd.values.len() - 1] >= -1e-10 * evd.values[0]);
        }
        let tr4: f64 = m.a4.diagonal().iter().map(|z| z.re).sum();
        assert!((tr4 - 120.0 * m.prior_mass).abs() < 1e-9 * tr4);
    }

    #[test]
    fn fp11_matches_score_quadrature() {
        let prior = scenario_prior();
        let m =
            compute_sensing_matrices(&prior, &scenario_cfg(2), &QuadratureSpec::default()).unwrap();
        let fp: f64 = integrate_scalar(
            |t: f64| {
                let (s, _) = prior.score_and_spread(t);
                s * s * prior.pdf(t)
            },
            angle_domain(),
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!((fp - m.fp11).abs() < 1e-6 * m.fp11);
    }

    #[test]
    fn zero_covariance_is_prior_only() {
        let prior = scenario_prior();
        let cfg = scenario_cfg(4);
        let m = compute_sensing_matrices(&prior, &cfg, &QuadratureSpec::default()).unwrap();
        let z = Covariance::zero(4);
        let e = env(&cfg);
        assert_eq!(pcrb(&z, &m, &e, 25).unwrap(), 1.0 / m.fp11);
        assert_eq!(pcrb_upper(&z, &m, &e, 25).unwrap(), 1.0 / m.fp11);
    }

    #[test]
    fn zero_covariance_without_prior_information_errors() {
        let mut m = compute_sensing_matrices(
            &scenario_prior(),
            &scenario_cfg(2),
            &QuadratureSpec::default(),
        )
        .unwrap();
        m.fp11 = 0.0;
        let cfg = scenario_cfg(2);
        assert!(matches!(
            pcrb(&Covariance::zero(2), &m, &env(&cfg), 25),
            Err(Error::InfiniteBound(_))
        ));
    }

    #[test]
    fn isotropic_pcrb_matches_full_inverse() {
        let prior = scenario_prior();
        let cfg = scenario_cfg(10);
        let e = env(&cfg);
        let m = compute_sensing_matrices(&prior, &cfg, &QuadratureSpec::default()).unwrap();
        let w = Covariance::isotropic(10, 1.0);
        let direct = pcrb(&w, &m, &e, 25).unwrap();
        let oracle = pcrb_by_full_inverse(&w, &prior, &cfg, &e);
        assert!(direct > 0.0 && direct.is_finite());
        assert!(
            (direct - oracle).abs() < 1e-9 * oracle,
            "{direct} vs {oracle}"
        );
        // and the 3×3 assembled from traces agrees too
        let f = fisher_matrix(&w, &m, &e, 25);
        let inv = f.try_inverse().unwrap();
        assert!((inv[(0, 0)] - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn scaling_power_never_increases_pcrb() {
        let prior = scenario_prior();
        let cfg = scenario_cfg(6);
        let e = env(&cfg);
        let m = compute_sensing_matrices(&prior, &cfg, &QuadratureSpec::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let w = random_psd(6, 1.0, &mut rng);
            let base = pcrb(&w, &m, &e, 25).unwrap();
            for c in [1.5, 3.0, 10.0] {
                assert!(pcrb(&w.scaled(c), &m, &e, 25).unwrap() <= base * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn upper_bound_dominates_and_crb_chain() {
        let prior = scenario_prior();
        let cfg = scenario_cfg(6);
        let e = env(&cfg);
        let quad = QuadratureSpec::default();
        let m = compute_sensing_matrices(&prior, &cfg, &quad).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let w = random_psd(6, 1.0, &mut rng);
            let p = pcrb(&w, &m, &e, 25).unwrap();
            let u = pcrb_upper(&w, &m, &e, 25).unwrap();
            let c = crb_expected(&w, &prior, &e, &cfg, &quad, 25).unwrap();
            assert!(u >= p * (1.0 - 1e-12));
            assert!(c >= u * (1.0 - 1e-10));
        }
    }

    #[test]
    fn rank_one_sensing_beam_is_nearly_tight() {
        let prior = scenario_prior();
        let cfg = scenario_cfg(10);
        let e = env(&cfg);
        let m = compute_sensing_matrices(&prior, &cfg, &QuadratureSpec::default()).unwrap();
        let top = hermitian_evd(&m.a1).unwrap().top_vector();
        let w = Covariance::rank_one(&top, 1.0);
        let ratio = pcrb_upper(&w, &m, &e, 25).unwrap() / pcrb(&w, &m, &e, 25).unwrap();
        // recorded value at the default scenario: 1.2266
        println!("upper/exact ratio for the top-eigenvector beam: {ratio}");
        assert!((ratio - 1.2266).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn pcrb_depends_only_on_three_traces() {
        let prior = scenario_prior();
        let cfg = scenario_cfg(3);
        let e = env(&cfg);
        let m = compute_sensing_matrices(&prior, &cfg, &QuadratureSpec::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = random_psd(3, 1.0, &mut rng);
        let (u, c, v) = m.traces(w.matrix());
        let expected = 1.0 / (m.fp11 + e.fisher_scale(25) * (u - c.norm_sqr() / v));
        assert!((pcrb(&w, &m, &e, 25).unwrap() - expected).abs() < 1e-15 * expected);
    }

    #[test]
    fn crb_point_scaling_and_isotropic_closed_form() {
        let cfg = scenario_cfg(8);
        let e = env(&cfg);
        let w = Covariance::isotropic(8, 1.0);
        let base = crb_point(0.0, &w, &e, &cfg, 25).unwrap();
        let closed = 1.0 / (e.fisher_scale(25) * rx_deriv_norm_sqr(0.0, &cfg) * 1.0);
        assert!((base - closed).abs() < 1e-12 * closed);
        let scaled = crb_point(0.0, &w.scaled(4.0), &e, &cfg, 25).unwrap();
        assert!((scaled - base / 4.0).abs() < 1e-12 * base);
        // blows up toward endfire
        assert!(crb_point(FRAC_PI_2 - 1e-6, &w, &e, &cfg, 25).unwrap() > 1e9 * base);
    }

    #[test]
    fn crb_point_without_power_errors() {
        let cfg = scenario_cfg(4);
        let e = env(&cfg);
        assert!(matches!(
            crb_point(0.1, &Covariance::zero(4), &e, &cfg, 25),
            Err(Error::InfiniteBound(_))
        ));
    }

    #[test]
    fn narrow_prior_expected_crb_matches_point() {
        let cfg = scenario_cfg(6);
        let e = env(&cfg);
        let prior = GaussianMixture::single(0.4, 1e-6).unwrap();
        let quad = QuadratureSpec::default();
        let w = Covariance::isotropic(6, 1.0).scaled(0.7);
        let expected = crb_expected(&w, &prior, &e, &cfg, &quad, 25).unwrap();
        let point = crb_point(0.4, &w, &e, &cfg, 25).unwrap();
        assert!((expected / point - 1.0).abs() < 1e-3);
    }

    #[test]
    fn dispersed_modes_widen_the_prior_gap() {
        let cfg = scenario_cfg(6);
        let e = env(&cfg);
        let quad = QuadratureSpec::default();
        let w = Covariance::isotropic(6, 1.0);
        let mut gaps = Vec::new();
        for sep in [0.05, 0.3, 0.6] {
            let prior = GaussianMixture::new(vec![
                MixtureComponent {
                    weight: 0.5,
                    mean: -sep,
                    variance: 1e-2,
                },
                MixtureComponent {
                    weight: 0.5,
                    mean: sep,
                    variance: 1e-2,
                },
            ])
            .unwrap();
            let m = compute_sensing_matrices(&prior, &cfg, &quad).unwrap();
            let gap = crb_expected(&w, &prior, &e, &cfg, &quad, 25).unwrap()
                - pcrb(&w, &m, &e, 25).unwrap();
            gaps.push(gap);
        }
        assert!(gaps[0] < gaps[1] && gaps[1] < gaps[2], "{gaps:?}");
    }

    #[test]
    fn rate_examples() {
        let h = ChannelMatrix::new(CMatrix::from_element(1, 1, Complex::new(0.6, 0.8))).unwrap();
        assert_eq!(rate(&Covariance::zero(1), &h, 0.5), 0.0);
        let w = Covariance::new(CMatrix::from_element(1, 1, Complex::new(3.0, 0.0))).unwrap();
        assert!((rate(&w, &h, 0.5) - (1.0f64 + 3.0 / 0.5).log2()).abs() < 1e-14);
    }

    #[test]
    fn rate_with_water_filling_on_diagonal_channel() {
        let gains = [2.0, 1.0, 0.25];
        let h = CMatrix::<f64>::from_diagonal(&DVector::from_iterator(
            3,
            gains.iter().map(|g: &f64| Complex::new(g.sqrt(), 0.0)),
        ));
        let alloc = crate::numerics::water_filling(&gains, 2.0, 1.0).unwrap();
        let w = CMatrix::from_diagonal(&DVector::from_iterator(
            3,
            alloc.iter().map(|&v| Complex::new(v, 0.0)),
        ));
        let expected: f64 = alloc
            .iter()
            .zip(&gains)
            .map(|(v, g)| (1.0 + v * g).log2())
            .sum();
        let r = rate(
            &Covariance::new(w).unwrap(),
            &ChannelMatrix::new(h).unwrap(),
            1.0,
        );
        assert!((r - expected).abs() < 1e-12);
    }

    #[test]
    fn beampattern_examples() {
        let cfg = scenario_cfg(8);
        let grid: Vec<f64> = (0..50).map(|i| -1.5 + 0.06 * i as f64).collect();
        let flat = beampattern(&Covariance::isotropic(8, 2.0), &grid, &cfg);
        assert!(flat.iter().all(|p| (p - 2.0).abs() < 1e-12));
        let steer = steering_tx(0.3, &cfg);
        let w = Covariance::rank_one(&steer, 2.0);
        let peak = beampattern(&w, &[0.3], &cfg)[0];
        assert!((peak - 16.0).abs() < 1e-10);
        assert!(beampattern(&w, &grid, &cfg)
            .iter()
            .all(|p| *p <= peak + 1e-10));
    }

    #[test]
    fn covariance_validation() {
        let mut w = CMatrix::<f64>::identity(2, 2);
        w[(0, 0)] = Complex::new(-1.0, 0.0);
        assert!(Covariance::new(w).is_err());
        assert!(Covariance::with_budget(CMatrix::<f64>::identity(2, 2), 1.0).is_err());
        assert!(Covariance::with_budget(CMatrix::<f64>::identity(2, 2), 2.0).is_ok());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn cauchy_schwarz_on_traces(seed in 0u64..10_000) {
            let prior = scenario_prior();
            let cfg = scenario_cfg(4);
            let m = cached_matrices(&prior, &cfg);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_psd(4, 1.0, &mut rng);
            let t2 = trace_product(&m.a2, w.matrix()).re;
            let (_, c, v) = m.traces(w.matrix());
            let scale = t2 * v;
            proptest::prop_assert!(t2 * v - c.norm_sqr() >= -1e-10 * scale.max(1.0));
        }
    }

    fn cached_matrices(
        prior: &GaussianMixture<f64>,
        cfg: &SystemConfig<f64>,
    ) -> SensingMatrices<f64> {
        use std::sync::OnceLock;
        static CACHE: OnceLock<SensingMatrices<f64>> = OnceLock::new();
        CACHE
            .get_or_init(|| {
                compute_sensing_matrices(prior, cfg, &QuadratureSpec::default()).unwrap()
            })
            .clone()
    }

    #[test]
    fn single_precision_bounds() {
        let cfg = SystemConfig::<f32> {
            n_tx: 4,
            n_rx: 6,
            n_user: 2,
            symbols: 10,
            power_w: 1.0,
            noise_comm_w: 1.0,
            noise_sense_w: 1.0,
            spacing_over_lambda: 0.5,
            bs_height_m: 0.0,
            target_range_m: 10.0,
        };
        let prior = GaussianMixture::<f32>::single(0.2, 0.01).unwrap();
        let quad = QuadratureSpec::<f32> {
            rel_tol: 1e-4,
            ..Default::default()
        };
        let m = compute_sensing_matrices(&prior, &cfg, &quad).unwrap();
        let e = TargetEnvironment::<f32>::from_normalized_snr(1.0, &cfg).unwrap();
        let w = Covariance::<f32>::isotropic(4, 1.0);
        let p = pcrb(&w, &m, &e, 10).unwrap();
        let u = pcrb_upper(&w, &m, &e, 10).unwrap();
        assert!(p > 0.0 && u >= p * (1.0 - 1e-5));
    }
}
