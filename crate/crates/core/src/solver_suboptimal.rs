//! Minimisation of the PCRB upper bound: maximise `tr(A₁W)` subject to the
//! rate and power constraints.
//!
//! For fixed multipliers `(β, μ)` the Lagrangian is maximised in closed form
//! by a water-filling over the eigenmodes of `H Q^{-1/2}` with
//! `Q = (μI − A₁)/β`; the multipliers are located by a two-dimensional
//! ellipsoid method on the dual function.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fisher::{pcrb, pcrb_upper, rate, rate_matrix, Covariance, SensingMatrices};
use crate::model::{ChannelMatrix, SystemConfig, TargetEnvironment};
use crate::numerics::{
    hermitian_evd, hermitian_part, reduced_svd, trace_product, HermitianEvd, RANK_TOL,
};
use crate::solver_optimal::{capacity_waterfilling, check_feasibility, rank_diagnostics};
use crate::{CMatrix, CVector, Error, Real, Result};

/// Lagrange multipliers of the rate (`beta`) and power (`mu`) constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualPoint<T> {
    pub beta: T,
    pub mu: T,
}

impl<T: Real> DualPoint<T> {
    pub fn new(beta: T, mu: T) -> Result<Self> {
        if !(beta > T::zero()) || !beta.is_finite() || !mu.is_finite() {
            return Err(Error::Precondition(format!(
                "dual point needs finite beta > 0 (got {beta:?}, {mu:?})"
            )));
        }
        Ok(Self { beta, mu })
    }
}

/// Which part of the two-branch solution produced the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Rate constraint inactive: `P s₁ s₁ᴴ`.
    SensingOnly,
    /// Rate constraint active: closed form at the ellipsoid multipliers.
    Dual,
    /// `R̄` at the capacity: the capacity-achieving covariance.
    Capacity,
}

#[derive(Debug, Clone)]
pub struct SolveResult<T: Real> {
    pub w: Covariance<T>,
    pub rate: T,
    pub pcrb: T,
    pub pcrb_upper: T,
    /// Multipliers for the dual branch; `None` otherwise.
    pub dual: Option<DualPoint<T>>,
    /// `g(β, μ) − tr(A₁W)`; zero outside the dual branch.
    pub dual_gap: T,
    /// `R̄ − rate`, positive when the rate falls short.
    pub rate_residual: T,
    /// `tr W − P`.
    pub power_residual: T,
    pub rank_w: usize,
    pub iterations: usize,
    pub branch: Branch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipsoidSettings<T> {
    /// Stop once the largest semi-axis falls below this.
    pub radius_tol: T,
    /// Stop once both primal residuals (bits, normalised power) fall below this.
    pub residual_tol: T,
    /// Rate shortfall tolerated for the returned design.
    pub rate_tol: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for EllipsoidSettings<T> {
    fn default() -> Self {
        Self {
            radius_tol: T::lit(1e-7),
            residual_tol: T::lit(1e-10),
            rate_tol: T::lit(1e-9),
            max_iterations: 20_000,
        }
    }
}

fn top_eigen<T: Real>(a: &CMatrix<T>) -> Result<HermitianEvd<T>> {
    hermitian_evd(&hermitian_part(a))
}

/// `P s₁ s₁ᴴ` with `s₁` the principal eigenvector of `A₁`.
pub fn sensing_only_upper<T: Real>(m: &SensingMatrices<T>, power: T) -> Result<Covariance<T>> {
    let evd = top_eigen(&m.a1)?;
    if !(evd.values[0] > T::zero()) {
        return Err(Error::Degenerate("A1 has no positive eigenvalue"));
    }
    Ok(Covariance::rank_one(&evd.top_vector(), power))
}

/// `Q = (μ I − A₁)/β`.
pub fn build_q<T: Real>(dual: &DualPoint<T>, m: &SensingMatrices<T>) -> Result<CMatrix<T>> {
    let lambda1 = top_eigen(&m.a1)?.values[0];
    if !(dual.mu > lambda1) {
        return Err(Error::Precondition(format!(
            "mu {:?} must exceed the largest eigenvalue {:?} of A1",
            dual.mu, lambda1
        )));
    }
    let n = m.n_tx();
    let inv_beta = T::one() / dual.beta;
    Ok((CMatrix::<T>::identity(n, n).map(|z| z * dual.mu) - &m.a1).map(|z| z * inv_beta))
}

/// Maximiser of the Lagrangian for a fixed dual point, given the spectrum of
/// `A₁`; `Q^{-1/2} = V diag(√(β/(μ − λᵢ))) Vᴴ`.
fn lagrangian_maximiser<T: Real>(
    a1: &HermitianEvd<T>,
    g: &CMatrix<T>,
    noise: T,
    beta: T,
    mu: T,
) -> Result<CMatrix<T>> {
    let q_inv_sqrt = a1.map_spectrum(|l| (beta / (mu - l)).sqrt());
    let svd = reduced_svd(&(g * &q_inv_sqrt))?;
    let level = T::one() / T::ln_2();
    let n = q_inv_sqrt.nrows();
    let mut inner = CMatrix::<T>::zeros(n, n);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let h = s * s;
        if h > T::zero() {
            let v = level - noise / h;
            if v > T::zero() {
                let col = svd.v.column(i);
                inner += (col * col.adjoint()).map(|z| z * v);
            }
        }
    }
    Ok(hermitian_part(&(&q_inv_sqrt * inner * &q_inv_sqrt)))
}

/// Closed-form maximiser of the Lagrangian at `dual`:
/// `W = Q^{-1/2} Ṽ diag((1/ln2 − σ_c²/h̃ᵢ)⁺) Ṽᴴ Q^{-1/2}`.
pub fn inner_solution<T: Real>(
    dual: &DualPoint<T>,
    m: &SensingMatrices<T>,
    h: &ChannelMatrix<T>,
    noise: T,
) -> Result<Covariance<T>> {
    let a1 = top_eigen(&m.a1)?;
    if !(dual.mu > a1.values[0]) {
        return Err(Error::Precondition(
            "mu must exceed the largest eigenvalue of A1".into(),
        ));
    }
    let w = lagrangian_maximiser(&a1, &h.entries, noise, dual.beta, dual.mu)?;
    Ok(Covariance::from_matrix_unchecked(w))
}

/// Dual function `g(β, μ) = max_W tr(A₁W) + β(rate − R̄) − μ(tr W − P)`.
pub fn dual_function<T: Real>(
    dual: &DualPoint<T>,
    m: &SensingMatrices<T>,
    h: &ChannelMatrix<T>,
    cfg: &SystemConfig<T>,
    rbar: T,
) -> Result<T> {
    let w = inner_solution(dual, m, h, cfg.noise_comm_w)?;
    Ok(lagrangian(&m.a1, &w, h, cfg, rbar, dual))
}

fn lagrangian<T: Real>(
    a1: &CMatrix<T>,
    w: &Covariance<T>,
    h: &ChannelMatrix<T>,
    cfg: &SystemConfig<T>,
    rbar: T,
    dual: &DualPoint<T>,
) -> T {
    trace_product(a1, w.matrix()).re + dual.beta * (rate(w, h, cfg.noise_comm_w) - rbar)
        - dual.mu * (w.trace() - cfg.power_w)
}

/// Two-dimensional central-cut ellipsoid `{x : (x − c)ᵀ E⁻¹ (x − c) ≤ 1}`.
struct Ellipsoid<T: Real> {
    center: [T; 2],
    shape: DMatrix<T>,
}

impl<T: Real> Ellipsoid<T> {
    fn new(center: [T; 2], radius: T) -> Self {
        Self {
            center,
            shape: DMatrix::<T>::identity(2, 2) * (radius * radius),
        }
    }

    /// Keeps the half `gᵀ(x − c) ≤ 0`.
    fn cut(&mut self, g: [T; 2]) {
        let g = DVector::from_column_slice(&g);
        let eg = &self.shape * &g;
        let denom = g.dot(&eg);
        if !(denom > T::zero()) {
            return;
        }
        let gt = eg / denom.sqrt();
        let three = T::lit(3.0);
        self.center[0] -= gt[0] / three;
        self.center[1] -= gt[1] / three;
        let shape =
            (&self.shape - (&gt * gt.transpose()) * (T::lit(2.0) / three)) * (T::lit(4.0) / three);
        self.shape = (&shape + shape.transpose()) * T::lit(0.5);
    }

    fn radius(&self) -> T {
        let (a, b, d) = (self.shape[(0, 0)], self.shape[(0, 1)], self.shape[(1, 1)]);
        let half_tr = (a + d) * T::lit(0.5);
        let disc = ((a - d) * (a - d) * T::lit(0.25) + b * b).sqrt();
        (half_tr + disc).max(T::zero()).sqrt()
    }
}

/// PCRB-upper-bound-optimal covariance under rate and power constraints.
pub fn solve_p4<T: Real>(
    m: &SensingMatrices<T>,
    h: &ChannelMatrix<T>,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
    rbar: T,
) -> Result<SolveResult<T>> {
    solve_p4_with(m, h, env, cfg, rbar, &EllipsoidSettings::default())
}

pub fn solve_p4_with<T: Real>(
    m: &SensingMatrices<T>,
    h: &ChannelMatrix<T>,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
    rbar: T,
    settings: &EllipsoidSettings<T>,
) -> Result<SolveResult<T>> {
    cfg.validate()?;
    let n = cfg.n_tx;
    if m.n_tx() != n || h.n_tx() != n {
        return Err(Error::InvalidConfig(format!(
            "dimension mismatch: config Nt={n}, sensing {}, channel {}",
            m.n_tx(),
            h.n_tx()
        )));
    }
    if !(rbar >= T::zero()) {
        return Err(Error::Precondition(
            "rate target must be nonnegative".into(),
        ));
    }
    let power = cfg.power_w;
    let noise = cfg.noise_comm_w;
    let (r_max, w_cap) = capacity_waterfilling(h, power, noise)?;
    if !check_feasibility(rbar, r_max) {
        return Err(Error::Infeasible {
            rbar: rbar.to_f64_lossy(),
            r_max: r_max.to_f64_lossy(),
        });
    }

    let w_s = sensing_only_upper(m, power)?;
    if rate(&w_s, h, noise) >= rbar {
        return finish(
            m,
            h,
            env,
            cfg,
            rbar,
            w_s,
            None,
            T::zero(),
            0,
            Branch::SensingOnly,
        );
    }
    if rbar >= r_max - T::lit(1e-9) * r_max.max(T::one()) {
        return finish(
            m,
            h,
            env,
            cfg,
            rbar,
            w_cap,
            None,
            T::zero(),
            0,
            Branch::Capacity,
        );
    }

    // Normalised instance: Ã₁ = A₁/λ₁, W̃ = W/P, G̃ = H √P/σ_c, unit noise.
    let a1 = top_eigen(&m.a1)?;
    let lambda1 = a1.values[0];
    let a1n = HermitianEvd {
        values: a1.values.map(|l| l / lambda1),
        vectors: a1.vectors.clone(),
    };
    let a1n_mat = m.a1.map(|z| z / lambda1);
    let g = h.entries.map(|z| z * (power / noise).sqrt());
    let eps = T::lit(1e-9);

    let mut ell = Ellipsoid::new([T::one(), T::lit(3.0)], T::lit(1.415e6));
    let mut best: Option<(T, CMatrix<T>, DualPoint<T>)> = None;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        iterations += 1;
        let [beta, mu] = ell.center;
        if !(beta > T::zero()) {
            ell.cut([-T::one(), T::zero()]);
            continue;
        }
        if !(mu > T::one() + eps) {
            ell.cut([T::zero(), -T::one()]);
            continue;
        }
        let w = lagrangian_maximiser(&a1n, &g, T::one(), beta, mu)?;
        let tr = w.diagonal().iter().fold(T::zero(), |a, z| a + z.re);
        let r = rate_matrix(&w, &g, T::one());
        let (dr, dp) = (r - rbar, T::one() - tr);

        if tr > T::zero() {
            // project onto the power boundary; scaling changes the rate, so
            // the candidate is kept only if it still meets the target
            let ws = w.map(|z| z / tr);
            let rs = rate_matrix(&ws, &g, T::one());
            if rs >= rbar - settings.rate_tol {
                let obj = trace_product(&a1n_mat, &ws).re;
                if best.as_ref().is_none_or(|(b, _, _)| obj > *b) {
                    best = Some((obj, ws, DualPoint { beta, mu }));
                }
            }
        }
        if dr.abs() <= settings.residual_tol && dp.abs() <= settings.residual_tol {
            break;
        }
        ell.cut([dr, dp]);
        if ell.radius() <= settings.radius_tol {
            break;
        }
    }
    let (_, ws, dual_n) = best.ok_or(Error::SolverFailure {
        reason: "ellipsoid search found no design meeting the rate target".into(),
        residual: ell.radius().to_f64_lossy(),
    })?;
    let w = Covariance::from_matrix_unchecked(hermitian_part(&ws.map(|z| z * power)));
    let dual = DualPoint {
        beta: dual_n.beta * lambda1 * power,
        mu: dual_n.mu * lambda1,
    };
    let g_val = dual_function(&dual, m, h, cfg, rbar)?;
    let gap = g_val - trace_product(&m.a1, w.matrix()).re;
    finish(
        m,
        h,
        env,
        cfg,
        rbar,
        w,
        Some(dual),
        gap,
        iterations,
        Branch::Dual,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Real>(
    m: &SensingMatrices<T>,
    h: &ChannelMatrix<T>,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
    rbar: T,
    w: Covariance<T>,
    dual: Option<DualPoint<T>>,
    dual_gap: T,
    iterations: usize,
    branch: Branch,
) -> Result<SolveResult<T>> {
    let r = rate(&w, h, cfg.noise_comm_w);
    let (rank_w, _) = rank_diagnostics(&w, T::lit(RANK_TOL))?;
    Ok(SolveResult {
        rate: r,
        pcrb: pcrb(&w, m, env, cfg.symbols)?,
        pcrb_upper: pcrb_upper(&w, m, env, cfg.symbols)?,
        dual,
        dual_gap,
        rate_residual: rbar - r,
        power_residual: w.trace() - cfg.power_w,
        rank_w,
        iterations,
        branch,
        w,
    })
}

/// Rank-one closed form for a single-antenna user at a given dual point:
/// `W = Q⁻¹h (h̃ − σ_c² ln2)⁺ / (ln2 · h̃²) hᴴQ⁻¹` with `h̃ = hᴴQ⁻¹h`.
///
/// This is the general maximiser specialised to `H = hᴴ`; the noise power
/// enters through `h/σ_c`.
pub fn miso_closed_form<T: Real>(
    dual: &DualPoint<T>,
    m: &SensingMatrices<T>,
    h_vec: &CVector<T>,
    noise: T,
) -> Result<Covariance<T>> {
    let q = build_q(dual, m)?;
    let q_inv = q.try_inverse().ok_or(Error::Decomposition("Q inverse"))?;
    let x = &q_inv * h_vec;
    let ht = h_vec.dotc(&x).re;
    let ln2 = T::ln_2();
    let s = (ht - noise * ln2).max(T::zero()) / (ln2 * ht * ht);
    Ok(Covariance::from_matrix_unchecked(hermitian_part(
        &(&x * x.adjoint()).map(|z| z * s),
    )))
}

/// Single-antenna user (`H = hᴴ`): `P s s̃ᴴ` with `s̃` the principal
/// eigenvector of `A₁ + η hhᴴ`, `η ≥ 0` bisected so the rate holds with
/// equality.
pub fn solve_p4_miso<T: Real>(
    m: &SensingMatrices<T>,
    h_vec: &CVector<T>,
    cfg: &SystemConfig<T>,
    rbar: T,
) -> Result<Covariance<T>> {
    let n = cfg.n_tx;
    if h_vec.len() != n || m.n_tx() != n {
        return Err(Error::InvalidConfig(
            "MISO channel length must equal Nt".into(),
        ));
    }
    let h2 = h_vec.iter().fold(T::zero(), |a, z| a + z.norm_sqr());
    if !(h2 > T::zero()) {
        return Err(Error::ZeroChannel);
    }
    let power = cfg.power_w;
    let noise = cfg.noise_comm_w;
    let r_max = (T::one() + power * h2 / noise).log2();
    if !check_feasibility(rbar, r_max) {
        return Err(Error::Infeasible {
            rbar: rbar.to_f64_lossy(),
            r_max: r_max.to_f64_lossy(),
        });
    }
    // required |sᴴh|² for unit-norm s
    let need = (T::lit(2.0).powf(rbar) - T::one()) * noise / power;
    let gain = |s: &CVector<T>| s.dotc(h_vec).norm_sqr();
    let s1 = top_eigen(&m.a1)?.top_vector();
    if gain(&s1) >= need {
        return Ok(Covariance::rank_one(&s1, power));
    }
    if need >= h2 * (T::one() - T::lit(1e-12)) {
        return Ok(Covariance::rank_one(h_vec, power));
    }
    // normalised pencil Ã₁ + η ĥĥᴴ keeps η of order one
    let lambda1 = top_eigen(&m.a1)?.values[0];
    let a1n = m.a1.map(|z| z / lambda1);
    let hh = (h_vec * h_vec.adjoint()).map(|z| z / h2);
    let steer = |eta: T| -> Result<CVector<T>> {
        Ok(top_eigen(&(&a1n + hh.map(|z| z * eta)))?.top_vector())
    };
    let mut hi = T::one();
    while gain(&steer(hi)?) < need {
        hi *= T::lit(2.0);
        if hi > T::lit(1e15) {
            return Err(Error::SolverFailure {
                reason: "MISO multiplier bracket did not close".into(),
                residual: f64::NAN,
            });
        }
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if gain(&steer(mid)?) >= need {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Covariance::rank_one(&steer(hi)?, power))
}

/// Solves one instance per rate target in parallel; results keep the input
/// order.
pub fn solve_p4_sweep<T: Real>(
    m: &SensingMatrices<T>,
    h: &ChannelMatrix<T>,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
    rbars: &[T],
) -> Vec<Result<SolveResult<T>>> {
    rbars
        .par_iter()
        .map(|&r| solve_p4(m, h, env, cfg, r))
        .collect()
}
