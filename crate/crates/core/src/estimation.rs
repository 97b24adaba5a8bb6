//! Monte Carlo ground truth: echo generation, MAP/MLE angle estimation with
//! the reflection coefficient profiled out, and empirical MSE.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fisher::Covariance;
use crate::model::{
    angle_lo, in_domain, steering_rx, steering_tx, GaussianMixture, SystemConfig, TargetEnvironment,
};
use crate::numerics::psd_sqrt;
use crate::{CMatrix, CVector, Error, Real, Result, C};

/// Received block together with the transmitted block and the ground truth.
#[derive(Debug, Clone)]
pub struct EchoObservation<T: Real> {
    /// `N_r × L`.
    pub y: CMatrix<T>,
    /// `N_t × L`.
    pub x: CMatrix<T>,
    pub theta: T,
    pub alpha: C<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialBatch<T> {
    pub trials: usize,
    pub seed: u64,
    pub mse: T,
    pub estimates: Vec<T>,
    pub truths: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Map,
    Mle,
}

/// Uniform grid over `[−π/2, π/2)` followed by golden-section refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub points: usize,
    pub refine_tol: T,
}

impl<T: Real> Default for GridSpec<T> {
    fn default() -> Self {
        Self {
            points: 2048,
            refine_tol: T::lit(1e-5),
        }
    }
}

fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> C<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C::new(T::lit(re), T::lit(im)) * T::lit(std::f64::consts::FRAC_1_SQRT_2)
}

/// `L` i.i.d. `CN(0, W)` columns, `W^{1/2} G` with standard complex normal `G`.
pub fn gen_signals<T: Real, R: Rng + ?Sized>(
    w: &Covariance<T>,
    symbols: usize,
    rng: &mut R,
) -> Result<CMatrix<T>> {
    let n = w.n_tx();
    let root = psd_sqrt(w.matrix())?;
    let g = CMatrix::<T>::from_fn(n, symbols, |_, _| complex_normal(rng));
    Ok(root * g)
}

/// `Y = α b(θ) a(θ)ᴴ X + N` with `N` i.i.d. `CN(0, σ_s²)`.
pub fn gen_echo<T: Real, R: Rng + ?Sized>(
    x: &CMatrix<T>,
    theta: T,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
    rng: &mut R,
) -> Result<EchoObservation<T>> {
    if !in_domain(theta) {
        return Err(Error::Precondition("angle outside [-pi/2, pi/2)".into()));
    }
    if x.nrows() != cfg.n_tx {
        return Err(Error::InvalidConfig(
            "signal block must have Nt rows".into(),
        ));
    }
    let a = steering_tx(theta, cfg);
    let b = steering_rx(theta, cfg);
    let sd = env.noise_sense_w.sqrt();
    let mut y = (&b * (a.adjoint() * x)).map(|z| z * env.alpha);
    for z in y.iter_mut() {
        *z += complex_normal::<T, _>(rng) * sd;
    }
    Ok(EchoObservation {
        y,
        x: x.clone(),
        theta,
        alpha: env.alpha,
    })
}

/// Least-squares reflection coefficient for a hypothesised angle.
pub fn profile_alpha<T: Real>(
    y: &CMatrix<T>,
    x: &CMatrix<T>,
    theta: T,
    cfg: &SystemConfig<T>,
) -> Result<C<T>> {
    let a = steering_tx(theta, cfg);
    let b = steering_rx(theta, cfg);
    let xa = x.adjoint() * &a;
    let excite = xa.norm_squared();
    if !(excite > T::zero()) {
        return Err(Error::Degenerate(
            "no excitation along the hypothesised angle",
        ));
    }
    let num = b.dotc(&(y * xa));
    Ok(num / (b.norm_squared() * excite))
}

/// `ln f(Y | θ, α) = −N_r L ln(π σ_s²) − ‖Y − α b aᴴ X‖²/σ_s²`.
pub fn log_likelihood<T: Real>(
    y: &CMatrix<T>,
    x: &CMatrix<T>,
    theta: T,
    alpha: C<T>,
    noise: T,
    cfg: &SystemConfig<T>,
) -> T {
    let a = steering_tx(theta, cfg);
    let b = steering_rx(theta, cfg);
    let r = y - (&b * (a.adjoint() * x)).map(|z| z * alpha);
    let n = T::from_usize_lossy(y.nrows() * y.ncols());
    -n * (T::pi() * noise).ln() - r.norm_squared() / noise
}

/// Sufficient statistics of the likelihood with `α` concentrated out:
/// `Z = Y Xᴴ`, `R = X Xᴴ`.
struct Concentrated<T: Real> {
    z: CMatrix<T>,
    r: CMatrix<T>,
    y2: T,
    noise: T,
}

impl<T: Real> Concentrated<T> {
    fn new(obs: &EchoObservation<T>, noise: T) -> Self {
        Self {
            z: &obs.y * obs.x.adjoint(),
            r: &obs.x * obs.x.adjoint(),
            y2: obs.y.norm_squared(),
            noise,
        }
    }

    /// `−(‖Y‖² − |bᴴZa|²/(‖b‖² aᴴRa))/σ_s²`; zero excitation leaves `‖Y‖²`.
    fn eval(&self, a: &CVector<T>, b: &CVector<T>) -> T {
        let excite = a.dotc(&(&self.r * a)).re;
        let explained = if excite > T::zero() {
            b.dotc(&(&self.z * a)).norm_sqr() / (b.norm_squared() * excite)
        } else {
            T::zero()
        };
        -(self.y2 - explained) / self.noise
    }
}

/// Steering vectors at the search grid, shared by all trials of a batch.
pub struct SearchGrid<T: Real> {
    spec: GridSpec<T>,
    thetas: Vec<T>,
    tx: Vec<CVector<T>>,
    rx: Vec<CVector<T>>,
}

impl<T: Real> SearchGrid<T> {
    pub fn new(spec: GridSpec<T>, cfg: &SystemConfig<T>) -> Result<Self> {
        if spec.points < 2 || !(spec.refine_tol > T::zero()) {
            return Err(Error::InvalidConfig(
                "search grid needs at least two points and a positive tolerance".into(),
            ));
        }
        let step = T::pi() / T::from_usize_lossy(spec.points);
        let thetas: Vec<T> = (0..spec.points)
            .map(|i| angle_lo::<T>() + step * T::from_usize_lossy(i))
            .collect();
        Ok(Self {
            tx: thetas.iter().map(|&t| steering_tx(t, cfg)).collect(),
            rx: thetas.iter().map(|&t| steering_rx(t, cfg)).collect(),
            thetas,
            spec,
        })
    }

    fn step(&self) -> T {
        T::pi() / T::from_usize_lossy(self.spec.points)
    }

    /// Grid argmax (first maximum wins), then golden-section on the two
    /// neighbouring cells; the refined point replaces the grid point only
    /// if it is strictly better.
    fn argmax<F: Fn(T) -> T, G: Fn(usize) -> T>(&self, f: F, on_grid: G) -> T {
        let mut best = 0;
        let mut best_val = on_grid(0);
        for i in 1..self.thetas.len() {
            let v = on_grid(i);
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        let h = self.step();
        let lo = (self.thetas[best] - h).max(angle_lo());
        let hi = self.thetas[best] + h;
        let (t, v) = golden_section(&f, lo, hi, self.spec.refine_tol);
        if v > best_val && in_domain(t) {
            t
        } else {
            self.thetas[best]
        }
    }
}

/// Maximises a unimodal `f` on `[lo, hi]`; returns the final midpoint and
/// its value.
fn golden_section<T: Real, F: Fn(T) -> T>(f: &F, mut lo: T, mut hi: T, tol: T) -> (T, T) {
    let r = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = (lo + hi) / T::lit(2.0);
    (mid, f(mid))
}

fn estimate<T: Real>(
    obs: &EchoObservation<T>,
    prior: Option<&GaussianMixture<T>>,
    noise: T,
    cfg: &SystemConfig<T>,
    grid: &SearchGrid<T>,
) -> T {
    let stats = Concentrated::new(obs, noise);
    let log_prior = |t: T| prior.map_or(T::zero(), |p| p.ln_pdf(t));
    grid.argmax(
        |t| stats.eval(&steering_tx(t, cfg), &steering_rx(t, cfg)) + log_prior(t),
        |i| stats.eval(&grid.tx[i], &grid.rx[i]) + log_prior(grid.thetas[i]),
    )
}

/// `argmax_θ ln f(Y | θ, α̂(θ)) + ln p_Θ(θ)`.
pub fn map_estimate<T: Real>(
    obs: &EchoObservation<T>,
    prior: &GaussianMixture<T>,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
    grid: &SearchGrid<T>,
) -> T {
    estimate(obs, Some(prior), env.noise_sense_w, cfg, grid)
}

/// `argmax_θ ln f(Y | θ, α̂(θ))`; a flat likelihood returns the lower edge.
pub fn mle_estimate<T: Real>(
    obs: &EchoObservation<T>,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
    grid: &SearchGrid<T>,
) -> T {
    estimate(obs, None, env.noise_sense_w, cfg, grid)
}

/// Random source of trial `k`: the batch seed with stream `k`, so results do
/// not depend on the number of workers.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Empirical MSE of a fixed design with `θ` drawn from the prior.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_mse<T: Real>(
    design: &Covariance<T>,
    estimator: Estimator,
    env: &TargetEnvironment<T>,
    prior: &GaussianMixture<T>,
    cfg: &SystemConfig<T>,
    grid: &GridSpec<T>,
    trials: usize,
    seed: u64,
) -> Result<TrialBatch<T>> {
    monte_carlo_mse_with(
        |_, _| Ok(design.clone()),
        estimator,
        env,
        prior,
        cfg,
        grid,
        trials,
        seed,
    )
}

/// As [`monte_carlo_mse`] with a per-trial design `design(θ, rng)`, used by
/// the known-angle benchmarks.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_mse_with<T, D>(
    design: D,
    estimator: Estimator,
    env: &TargetEnvironment<T>,
    prior: &GaussianMixture<T>,
    cfg: &SystemConfig<T>,
    grid: &GridSpec<T>,
    trials: usize,
    seed: u64,
) -> Result<TrialBatch<T>>
where
    T: Real,
    D: Fn(T, &mut ChaCha8Rng) -> Result<Covariance<T>> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidConfig(
            "at least one trial is required".into(),
        ));
    }
    let search = SearchGrid::new(*grid, cfg)?;
    let results: Vec<Result<(T, T)>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(seed, k);
            let theta = prior.sample(&mut rng);
            let w = design(theta, &mut rng)?;
            let x = gen_signals(&w, cfg.symbols, &mut rng)?;
            let obs = gen_echo(&x, theta, env, cfg, &mut rng)?;
            let est = match estimator {
                Estimator::Map => map_estimate(&obs, prior, env, cfg, &search),
                Estimator::Mle => mle_estimate(&obs, env, cfg, &search),
            };
            Ok((theta, est))
        })
        .collect();
    let mut truths = Vec::with_capacity(trials);
    let mut estimates = Vec::with_capacity(trials);
    let mut sum = T::zero();
    for r in results {
        let (t, e) = r?;
        sum += (e - t) * (e - t);
        truths.push(t);
        estimates.push(e);
    }
    Ok(TrialBatch {
        trials,
        seed,
        mse: sum / T::from_usize_lossy(trials),
        estimates,
        truths,
    })
}
