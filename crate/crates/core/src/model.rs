//! Physical model: ULA steering vectors, geometry, the Gaussian-mixture angle
//! prior, the sensing environment and the Rician user channel.
//!
//! Angles are in radians and powers are linear (watts) everywhere in this
//! module; dB conversion happens at the configuration boundary.

use nalgebra::{Complex, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::numerics::{numerical_rank, reduced_svd, RANK_TOL};
use crate::{CMatrix, CVector, Error, Real, Result};

/// Lower end of the azimuth domain, inclusive.
pub fn angle_lo<T: Real>() -> T {
    -T::frac_pi_2()
}

/// Upper end of the azimuth domain, exclusive.
pub fn angle_hi<T: Real>() -> T {
    T::frac_pi_2()
}

pub fn angle_domain<T: Real>() -> (T, T) {
    (angle_lo(), angle_hi())
}

pub fn in_domain<T: Real>(theta: T) -> bool {
    theta >= angle_lo() && theta < angle_hi()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig<T> {
    /// Transmit antennas.
    pub n_tx: usize,
    /// Receive (sensing) antennas.
    pub n_rx: usize,
    /// User antennas.
    pub n_user: usize,
    /// Symbols per sensing block.
    pub symbols: usize,
    pub power_w: T,
    pub noise_comm_w: T,
    pub noise_sense_w: T,
    pub spacing_over_lambda: T,
    pub bs_height_m: T,
    pub target_range_m: T,
}

impl<T: Real> SystemConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 || self.n_user == 0 || self.symbols == 0 {
            return Err(Error::InvalidConfig(
                "antenna counts and symbol count must be positive".into(),
            ));
        }
        for (name, v) in [
            ("power_w", self.power_w),
            ("noise_comm_w", self.noise_comm_w),
            ("noise_sense_w", self.noise_sense_w),
            ("spacing_over_lambda", self.spacing_over_lambda),
            ("target_range_m", self.target_range_m),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.bs_height_m < T::zero() {
            return Err(Error::InvalidGeometry("negative BS height".into()));
        }
        if self.bs_height_m > self.target_range_m {
            return Err(Error::InvalidGeometry(format!(
                "BS height {:?} exceeds target range {:?}",
                self.bs_height_m, self.target_range_m
            )));
        }
        Ok(())
    }

    /// `cos φ = sqrt(r² − h_B²)/r` for the known target elevation.
    pub fn cos_elevation(&self) -> T {
        let r = self.target_range_m;
        let h = self.bs_height_m;
        ((r * r - h * h).max(T::zero())).sqrt() / r
    }

    /// Phase slope `π (d/λ) cos φ` shared by all steering vectors.
    fn phase_scale(&self) -> T {
        T::pi() * self.spacing_over_lambda * self.cos_elevation()
    }
}

/// Entry `n` (1-based) is `exp(−j k (N − 2n + 1) sin θ)` with `k = π (d/λ) cos φ`.
pub fn ula_steering<T: Real>(n: usize, theta: T, phase_scale: T) -> CVector<T> {
    let s = theta.sin();
    DVector::from_fn(n, |i, _| {
        let offset = T::from_usize_lossy(n) - T::lit(2.0) * T::from_usize_lossy(i + 1) + T::one();
        let phase = -phase_scale * offset * s;
        Complex::new(phase.cos(), phase.sin())
    })
}

/// Derivative of [`ula_steering`] with respect to `θ`.
pub fn ula_steering_deriv<T: Real>(n: usize, theta: T, phase_scale: T) -> CVector<T> {
    let s = theta.sin();
    let c = theta.cos();
    DVector::from_fn(n, |i, _| {
        let offset = T::from_usize_lossy(n) - T::lit(2.0) * T::from_usize_lossy(i + 1) + T::one();
        let phase = -phase_scale * offset * s;
        let a = Complex::new(phase.cos(), phase.sin());
        // d/dθ exp(jφ(θ)) = j φ'(θ) exp(jφ(θ))
        a * Complex::new(T::zero(), -phase_scale * offset * c)
    })
}

/// Transmit steering vector `a(θ)`.
pub fn steering_tx<T: Real>(theta: T, cfg: &SystemConfig<T>) -> CVector<T> {
    ula_steering(cfg.n_tx, theta, cfg.phase_scale())
}

/// Receive steering vector `b(θ)`.
pub fn steering_rx<T: Real>(theta: T, cfg: &SystemConfig<T>) -> CVector<T> {
    ula_steering(cfg.n_rx, theta, cfg.phase_scale())
}

pub fn steering_tx_deriv<T: Real>(theta: T, cfg: &SystemConfig<T>) -> CVector<T> {
    ula_steering_deriv(cfg.n_tx, theta, cfg.phase_scale())
}

pub fn steering_rx_deriv<T: Real>(theta: T, cfg: &SystemConfig<T>) -> CVector<T> {
    ula_steering_deriv(cfg.n_rx, theta, cfg.phase_scale())
}

/// `‖ḃ(θ)‖²` in closed form: `k² cos²θ Σ_m (N_r − 2m + 1)²`.
pub fn rx_deriv_norm_sqr<T: Real>(theta: T, cfg: &SystemConfig<T>) -> T {
    let n = cfg.n_rx;
    let sum_sq = T::from_usize_lossy(n * (n * n - 1)) / T::lit(3.0);
    let k = cfg.phase_scale();
    let c = theta.cos();
    k * k * c * c * sum_sq
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent<T> {
    pub weight: T,
    pub mean: T,
    pub variance: T,
}

/// Gaussian-mixture prior on the target azimuth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "Vec<MixtureComponent<T>>",
    into = "Vec<MixtureComponent<T>>"
)]
pub struct GaussianMixture<T: Real> {
    components: Vec<MixtureComponent<T>>,
}

impl<T: Real> TryFrom<Vec<MixtureComponent<T>>> for GaussianMixture<T> {
    type Error = Error;
    fn try_from(c: Vec<MixtureComponent<T>>) -> Result<Self> {
        Self::new(c)
    }
}

impl<T: Real> From<GaussianMixture<T>> for Vec<MixtureComponent<T>> {
    fn from(g: GaussianMixture<T>) -> Self {
        g.components
    }
}

impl<T: Real> GaussianMixture<T> {
    /// Validates weights (sum to one within 1e-12), means and variances.
    /// Weights are never renormalised.
    pub fn new(components: Vec<MixtureComponent<T>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidPrior(
                "at least one component required".into(),
            ));
        }
        let mut total = T::zero();
        for (k, c) in components.iter().enumerate() {
            if !(c.weight >= T::zero() && c.weight <= T::one()) {
                return Err(Error::InvalidPrior(format!("weight {k} outside [0, 1]")));
            }
            if !(c.variance > T::zero()) || !c.variance.is_finite() {
                return Err(Error::InvalidPrior(format!(
                    "variance {k} must be positive"
                )));
            }
            if !in_domain(c.mean) {
                return Err(Error::InvalidPrior(format!(
                    "mean {k} outside [-pi/2, pi/2)"
                )));
            }
            total += c.weight;
        }
        let tol = T::lit(1e-12).max(T::lit(16.0) * T::eps());
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidPrior(format!(
                "weights sum to {:?}, not 1",
                total
            )));
        }
        Ok(Self { components })
    }

    pub fn from_parts(weights: &[T], means: &[T], variances: &[T]) -> Result<Self> {
        if weights.len() != means.len() || means.len() != variances.len() {
            return Err(Error::InvalidPrior(
                "component lists differ in length".into(),
            ));
        }
        Self::new(
            weights
                .iter()
                .zip(means)
                .zip(variances)
                .map(|((&weight, &mean), &variance)| MixtureComponent {
                    weight,
                    mean,
                    variance,
                })
                .collect(),
        )
    }

    /// A single Gaussian component.
    pub fn single(mean: T, variance: T) -> Result<Self> {
        Self::new(vec![MixtureComponent {
            weight: T::one(),
            mean,
            variance,
        }])
    }

    pub fn components(&self) -> &[MixtureComponent<T>] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `ln(p_k f_k(θ))` per component (`-inf` for zero weight).
    pub fn log_weighted_components(&self, theta: T) -> Vec<T> {
        let half_ln_2pi = T::lit(0.5) * T::two_pi().ln();
        self.components
            .iter()
            .map(|c| {
                if c.weight == T::zero() {
                    return T::lit(f64::NEG_INFINITY);
                }
                let d = theta - c.mean;
                c.weight.ln()
                    - half_ln_2pi
                    - T::lit(0.5) * c.variance.ln()
                    - d * d / (T::lit(2.0) * c.variance)
            })
            .collect()
    }

    /// `ln p_Θ(θ)` by log-sum-exp.
    pub fn ln_pdf(&self, theta: T) -> T {
        log_sum_exp(&self.log_weighted_components(theta))
    }

    /// Mixture density `p_Θ(θ)`.
    pub fn pdf(&self, theta: T) -> T {
        self.ln_pdf(theta).exp()
    }

    /// Score `∂ ln p_Θ/∂θ` and the responsibility-weighted variance of the
    /// per-component scores, i.e. the integrand of the ρ term divided by
    /// the density.
    pub fn score_and_spread(&self, theta: T) -> (T, T) {
        let logs = self.log_weighted_components(theta);
        let m = logs.iter().copied().fold(logs[0], |a, b| a.max(b));
        let mut norm = T::zero();
        let mut mean = T::zero();
        let mut second = T::zero();
        for (c, l) in self.components.iter().zip(&logs) {
            let r = (*l - m).exp();
            let d = (theta - c.mean) / c.variance;
            norm += r;
            mean += r * d;
            second += r * d * d;
        }
        mean /= norm;
        second /= norm;
        (-mean, (second - mean * mean).max(T::zero()))
    }

    /// `Σ_k p_k / σ_k²`.
    pub fn weighted_inverse_variance(&self) -> T {
        self.components
            .iter()
            .fold(T::zero(), |a, c| a + c.weight / c.variance)
    }

    /// Draws an angle: component by weight, then Gaussian, redrawn until it
    /// falls inside [−π/2, π/2).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        loop {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = self.components.len() - 1;
            for (k, c) in self.components.iter().enumerate() {
                acc += c.weight.to_f64_lossy();
                if u < acc {
                    chosen = k;
                    break;
                }
            }
            let c = &self.components[chosen];
            let z: f64 = rng.sample(StandardNormal);
            let theta = c.mean + c.variance.sqrt() * T::lit(z);
            if in_domain(theta) {
                return theta;
            }
        }
    }

    /// Highest-density component mean refined by a local search; used as the
    /// prior mode.
    pub fn mode(&self) -> T {
        let mut best = self.components[0].mean;
        let mut best_val = self.ln_pdf(best);
        for c in &self.components[1..] {
            let v = self.ln_pdf(c.mean);
            if v > best_val {
                best = c.mean;
                best_val = v;
            }
        }
        best
    }
}

pub(crate) fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(xs[0], |a, b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    let s = xs.iter().fold(T::zero(), |a, &x| a + (x - m).exp());
    m + s.ln()
}

/// Draws one angle from the prior.
pub fn gm_sample<T: Real, R: Rng + ?Sized>(prior: &GaussianMixture<T>, rng: &mut R) -> T {
    prior.sample(rng)
}

pub fn gm_pdf<T: Real>(theta: T, prior: &GaussianMixture<T>) -> T {
    prior.pdf(theta)
}

/// Round-trip reflection coefficient and sensing noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetEnvironment<T> {
    pub alpha: Complex<T>,
    pub noise_sense_w: T,
}

impl<T: Real> TargetEnvironment<T> {
    pub fn new(alpha: Complex<T>, noise_sense_w: T) -> Result<Self> {
        if !(alpha.norm_sqr() > T::zero()) {
            return Err(Error::InvalidConfig(
                "reflection coefficient must be nonzero".into(),
            ));
        }
        if !(noise_sense_w > T::zero()) {
            return Err(Error::InvalidConfig(
                "sensing noise must be positive".into(),
            ));
        }
        Ok(Self {
            alpha,
            noise_sense_w,
        })
    }

    /// Builds `α` (zero phase) from the normalised receive SNR `P|α|²L/σ_s²`.
    pub fn from_normalized_snr(snr: T, cfg: &SystemConfig<T>) -> Result<Self> {
        if !(snr > T::zero()) {
            return Err(Error::InvalidConfig("SNR must be positive".into()));
        }
        let mag2 = snr * cfg.noise_sense_w / (cfg.power_w * T::from_usize_lossy(cfg.symbols));
        Self::new(Complex::new(mag2.sqrt(), T::zero()), cfg.noise_sense_w)
    }

    /// `|α|² L / σ_s²`.
    pub fn snr_factor(&self, symbols: usize) -> T {
        self.alpha.norm_sqr() * T::from_usize_lossy(symbols) / self.noise_sense_w
    }

    /// `P |α|² L / σ_s²`.
    pub fn normalized_snr(&self, cfg: &SystemConfig<T>) -> T {
        cfg.power_w * self.snr_factor(cfg.symbols)
    }

    /// Observation information scale `2|α|²L/σ_s²`.
    pub fn fisher_scale(&self, symbols: usize) -> T {
        T::lit(2.0) * self.snr_factor(symbols)
    }
}

/// BS–user channel `H` (`N_u × N_t`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix<T: Real> {
    pub entries: CMatrix<T>,
}

impl<T: Real> ChannelMatrix<T> {
    pub fn new(entries: CMatrix<T>) -> Result<Self> {
        if entries
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::InvalidConfig(
                "channel has non-finite entries".into(),
            ));
        }
        if entries.iter().all(|z| z.norm_sqr() == T::zero()) {
            return Err(Error::ZeroChannel);
        }
        Ok(Self { entries })
    }

    pub fn n_user(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.entries.ncols()
    }

    /// Numerical rank with the crate-wide singular value threshold.
    pub fn rank(&self) -> Result<usize> {
        let svd = reduced_svd(&self.entries)?;
        Ok(numerical_rank(
            svd.singular_values.as_slice(),
            T::lit(RANK_TOL),
        ))
    }
}

/// Rician user-channel geometry and fading parameters (linear units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserGeometry<T> {
    /// Rician factor `K_c`.
    pub rician_k: T,
    /// Reference path loss `β₀` at 1 m.
    pub ref_loss: T,
    /// Path-loss exponent.
    pub exponent: T,
    pub user_range_m: T,
    pub user_height_m: T,
    /// User azimuth `θ_U`.
    pub user_angle: T,
}

impl<T: Real> UserGeometry<T> {
    pub fn validate(&self, cfg: &SystemConfig<T>) -> Result<()> {
        if !(self.user_range_m > T::zero())
            || self.user_range_m < (self.user_height_m - cfg.bs_height_m).abs()
        {
            return Err(Error::InvalidGeometry(format!(
                "user range {:?} shorter than height difference",
                self.user_range_m
            )));
        }
        if self.rician_k < T::zero() || !(self.ref_loss > T::zero()) {
            return Err(Error::InvalidConfig(
                "Rician factor must be nonnegative and reference loss positive".into(),
            ));
        }
        Ok(())
    }

    /// Path loss `β_c = β₀ / r_U^{α_c}`.
    pub fn path_loss(&self) -> T {
        self.ref_loss / self.user_range_m.powf(self.exponent)
    }

    /// `cos φ_U` for the user elevation.
    pub fn cos_elevation(&self, cfg: &SystemConfig<T>) -> T {
        let dh = self.user_height_m - cfg.bs_height_m;
        let r = self.user_range_m;
        ((r * r - dh * dh).max(T::zero())).sqrt() / r
    }

    /// Deterministic LoS component `b_U(θ_U) a(θ_U)^H`.
    pub fn los_component(&self, cfg: &SystemConfig<T>) -> CMatrix<T> {
        let k = T::pi() * cfg.spacing_over_lambda * self.cos_elevation(cfg);
        let a = ula_steering(cfg.n_tx, self.user_angle, k);
        let b = ula_steering(cfg.n_user, self.user_angle, k);
        &b * a.adjoint()
    }
}

/// `H = sqrt(β_c/(K_c+1)) (sqrt(K_c) H_LoS + H_NLoS)` with i.i.d. CN(0, 1) NLoS.
pub fn rician_channel<T: Real, R: Rng + ?Sized>(
    cfg: &SystemConfig<T>,
    geometry: &UserGeometry<T>,
    rng: &mut R,
) -> Result<ChannelMatrix<T>> {
    cfg.validate()?;
    geometry.validate(cfg)?;
    let los = geometry.los_component(cfg);
    let half = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let nlos = CMatrix::<T>::from_fn(cfg.n_user, cfg.n_tx, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(T::lit(re) * half, T::lit(im) * half)
    });
    let k = geometry.rician_k;
    let scale = (geometry.path_loss() / (k + T::one())).sqrt();
    let los_w = k.sqrt();
    let h = (los.map(|z| z * los_w) + nlos).map(|z| z * scale);
    ChannelMatrix::new(h)
}
