//! Genie-aided baselines: the transmit design is optimised for a known
//! (exact or perturbed) target angle by minimising the point CRB under the
//! same rate and power constraints.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fisher::{crb_point, Covariance, SensingMatrices};
use crate::model::{
    angle_domain, in_domain, rx_deriv_norm_sqr, steering_tx, steering_tx_deriv, ChannelMatrix,
    GaussianMixture, SystemConfig, TargetEnvironment,
};
use crate::numerics::QuadratureRule;
use crate::solver_suboptimal::solve_p4;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkMode {
    /// Benchmark 1: the realised angle is known exactly.
    Exact,
    /// Benchmark 2: only `θ̃ ~ N(θ, σ_e²)` is known.
    Inexact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec<T> {
    pub mode: BenchmarkMode,
    pub theta_known: T,
    /// `σ_e²`; zero in exact mode.
    pub perturb_variance: T,
}

impl<T: Real> BenchmarkSpec<T> {
    pub fn exact(theta: T) -> Self {
        Self {
            mode: BenchmarkMode::Exact,
            theta_known: theta,
            perturb_variance: T::zero(),
        }
    }

    pub fn inexact(theta: T, perturb_variance: T) -> Result<Self> {
        let s = Self {
            mode: BenchmarkMode::Inexact,
            theta_known: theta,
            perturb_variance,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !in_domain(self.theta_known) {
            return Err(Error::InvalidConfig(
                "known angle outside [-pi/2, pi/2)".into(),
            ));
        }
        if !(self.perturb_variance >= T::zero()) || !self.perturb_variance.is_finite() {
            return Err(Error::InvalidConfig(
                "perturbation variance must be finite and nonnegative".into(),
            ));
        }
        if self.mode == BenchmarkMode::Exact && self.perturb_variance != T::zero() {
            return Err(Error::InvalidConfig(
                "exact mode requires zero perturbation variance".into(),
            ));
        }
        Ok(())
    }
}

/// Sensing matrices of a point-mass prior at `θ`, with no prior information
/// (`fp11 = ρ = 0`).
pub fn point_mass_matrices<T: Real>(theta: T, cfg: &SystemConfig<T>) -> SensingMatrices<T> {
    let nr = T::from_usize_lossy(cfg.n_rx);
    let a = steering_tx(theta, cfg);
    let ad = steering_tx_deriv(theta, cfg);
    let bd2 = rx_deriv_norm_sqr(theta, cfg);
    let aa = &a * a.adjoint();
    SensingMatrices {
        a1: aa.map(|z| z * bd2),
        a2: (&ad * ad.adjoint()).map(|z| z * nr),
        a3: (&ad * a.adjoint()).map(|z| z * nr),
        a4: aa.map(|z| z * nr),
        rho: T::zero(),
        fp11: T::zero(),
        prior_mass: T::one(),
    }
}

/// Point-CRB-optimal design for a given angle. The point CRB depends on `W`
/// only through `a(θ)ᴴWa(θ)`, so this is the upper-bound problem with the
/// point-mass `A₁`.
pub fn design_for_angle<T: Real>(
    theta: T,
    h: &ChannelMatrix<T>,
    cfg: &SystemConfig<T>,
    env: &TargetEnvironment<T>,
    rbar: T,
) -> Result<Covariance<T>> {
    let m = point_mass_matrices(theta, cfg);
    Ok(solve_p4(&m, h, env, cfg, rbar)?.w)
}

/// Design of one benchmark realisation; inexact mode draws `θ̃` from `rng`.
pub fn solve_known_angle<T: Real, R: Rng + ?Sized>(
    spec: &BenchmarkSpec<T>,
    h: &ChannelMatrix<T>,
    cfg: &SystemConfig<T>,
    env: &TargetEnvironment<T>,
    rbar: T,
    rng: &mut R,
) -> Result<Covariance<T>> {
    spec.validate()?;
    let theta = match spec.mode {
        BenchmarkMode::Exact => spec.theta_known,
        BenchmarkMode::Inexact => {
            let z: f64 = rng.sample(StandardNormal);
            spec.theta_known + spec.perturb_variance.sqrt() * T::lit(z)
        }
    };
    design_for_angle(theta, h, cfg, env, rbar)
}

/// Windowed composite Gauss–Legendre rule used for the expected CRBs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkQuadrature<T> {
    /// Half-width of each component window in standard deviations.
    pub window_sigmas: T,
    /// Panel width in standard deviations of the narrowest component.
    pub panel_sigmas: T,
    pub nodes_per_panel: usize,
}

impl<T: Real> Default for BenchmarkQuadrature<T> {
    fn default() -> Self {
        Self {
            window_sigmas: T::lit(8.0),
            panel_sigmas: T::lit(2.0),
            nodes_per_panel: 8,
        }
    }
}

impl<T: Real> BenchmarkQuadrature<T> {
    /// Rule over the union of `mean ± window·σ` windows, optionally clipped
    /// to the angle domain.
    fn rule(&self, comps: &[(T, T)], clip: bool) -> QuadratureRule<T> {
        let mut windows: Vec<(T, T, T)> = comps
            .iter()
            .map(|&(mean, sd)| {
                let half = self.window_sigmas * sd;
                let (mut lo, mut hi) = (mean - half, mean + half);
                if clip {
                    let (dlo, dhi) = angle_domain();
                    lo = lo.max(dlo);
                    hi = hi.min(dhi);
                }
                (lo, hi, sd)
            })
            .collect();
        windows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut merged: Vec<(T, T, T)> = Vec::new();
        for w in windows {
            match merged.last_mut() {
                Some(last) if w.0 <= last.1 => {
                    last.1 = last.1.max(w.1);
                    last.2 = last.2.min(w.2);
                }
                _ => merged.push(w),
            }
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (lo, hi, sd) in merged {
            let panels = ((hi - lo) / (self.panel_sigmas * sd))
                .ceil()
                .to_f64_lossy()
                .max(1.0) as usize;
            let r = QuadratureRule::composite(lo, hi, panels, self.nodes_per_panel);
            nodes.extend(r.nodes);
            weights.extend(r.weights);
        }
        QuadratureRule { nodes, weights }
    }
}

fn prior_rule<T: Real>(
    prior: &GaussianMixture<T>,
    q: &BenchmarkQuadrature<T>,
) -> QuadratureRule<T> {
    let comps: Vec<(T, T)> = prior
        .components()
        .iter()
        .map(|c| (c.mean, c.variance.sqrt()))
        .collect();
    q.rule(&comps, true)
}

/// `+∞` for a design with no radiated power toward an angle.
fn crb_or_inf<T: Real>(
    theta: T,
    w: &Covariance<T>,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
) -> T {
    crb_point(theta, w, env, cfg, cfg.symbols).unwrap_or(T::lit(f64::INFINITY))
}

/// Benchmark 1 expected CRB `E_θ[CRB(θ; W*(θ))]`, one design per node.
pub fn expected_crb_exact<T: Real>(
    prior: &GaussianMixture<T>,
    h: &ChannelMatrix<T>,
    cfg: &SystemConfig<T>,
    env: &TargetEnvironment<T>,
    rbar: T,
    quad: &BenchmarkQuadrature<T>,
) -> Result<T> {
    let rule = prior_rule(prior, quad);
    let terms: Vec<Result<T>> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(&theta, &wt)| {
            let w = design_for_angle(theta, h, cfg, env, rbar)?;
            Ok(wt * prior.pdf(theta) * crb_or_inf(theta, &w, env, cfg))
        })
        .collect();
    terms.into_iter().try_fold(T::zero(), |acc, t| Ok(acc + t?))
}

/// Benchmark 2 expected CRB `E_θ E_θ̃[CRB(θ; W*(θ̃))]` with
/// `θ̃ ~ N(θ, σ_e²)`.
///
/// The order of integration is swapped so that designs are only needed at
/// the `θ̃` nodes; the outer windows follow the prior convolved with the
/// perturbation. `+∞` when some design has a null inside the prior support.
pub fn expected_crb_inexact<T: Real>(
    prior: &GaussianMixture<T>,
    h: &ChannelMatrix<T>,
    cfg: &SystemConfig<T>,
    env: &TargetEnvironment<T>,
    rbar: T,
    perturb_variance: T,
    quad: &BenchmarkQuadrature<T>,
) -> Result<T> {
    if !(perturb_variance >= T::zero()) || !perturb_variance.is_finite() {
        return Err(Error::InvalidConfig(
            "perturbation variance must be finite and nonnegative".into(),
        ));
    }
    if perturb_variance == T::zero() {
        return expected_crb_exact(prior, h, cfg, env, rbar, quad);
    }
    let inner = prior_rule(prior, quad);
    let inner_pdf: Vec<T> = inner.nodes.iter().map(|&t| prior.pdf(t)).collect();
    let conv: Vec<(T, T)> = prior
        .components()
        .iter()
        .map(|c| (c.mean, (c.variance + perturb_variance).sqrt()))
        .collect();
    let outer = quad.rule(&conv, false);
    let norm = T::one() / (T::two_pi() * perturb_variance).sqrt();
    let half_inv = T::lit(0.5) / perturb_variance;
    let terms: Vec<Result<T>> = outer
        .nodes
        .par_iter()
        .zip(&outer.weights)
        .map(|(&tt, &wo)| {
            let w = design_for_angle(tt, h, cfg, env, rbar)?;
            let mut acc = T::zero();
            for ((&theta, &wi), &p) in inner.nodes.iter().zip(&inner.weights).zip(&inner_pdf) {
                let d = tt - theta;
                let k = norm * (-d * d * half_inv).exp();
                let joint = p * k;
                if joint > T::zero() {
                    acc += wi * joint * crb_or_inf(theta, &w, env, cfg);
                }
            }
            Ok(wo * acc)
        })
        .collect();
    terms.into_iter().try_fold(T::zero(), |acc, t| Ok(acc + t?))
}
