//! Rate feasibility through the MIMO capacity, and the PCRB-optimal transmit
//! covariance.
//!
//! The optimal design maximises `t` subject to
//!
//! ```text
//! [ tr((A₁+A₂)W) − t   tr(A₃W) ]
//! [ tr(A₃ᴴW)           tr(A₄W) ]  ⪰ 0,   rate(W) ≥ R̄,   tr W ≤ P,   W ⪰ 0,
//! ```
//!
//! which is solved by a primal log-barrier path-following method. Newton
//! steps are taken in the coordinates `W = S (I + X) Sᴴ` with `S = V Λ^{1/2}`
//! from the eigendecomposition of the current iterate: the log-det barrier
//! then has an identity Hessian however close `W` is to singular, and the
//! stiff power and objective directions sit on a few coordinates where
//! diagonal scaling absorbs them.

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::fisher::{pcrb, rate, rate_matrix, schur_objective, Covariance, SensingMatrices};
use crate::model::{ChannelMatrix, SystemConfig, TargetEnvironment};
use crate::numerics::{hermitian_evd, hermitian_part, numerical_rank, reduced_svd, water_filling};
use crate::numerics::{trace_product, RANK_TOL};
use crate::{CMatrix, Error, Real, Result};

#[derive(Debug, Clone)]
pub struct OptimalSolveResult<T: Real> {
    pub w: Covariance<T>,
    /// Auxiliary objective `t` at the final central point.
    pub t_star: T,
    pub pcrb_value: T,
    pub rate_value: T,
    /// Multiplier of the power constraint.
    pub mu_p: T,
    /// Multiplier of the rate constraint; zero when `R̄ = 0`.
    pub mu_r: T,
    /// Off-diagonal entry of the LMI multiplier `[1, z₂; z₂*, |z₂|²]`.
    pub z2: Complex<T>,
    pub kkt_residual: T,
    pub rank_w: usize,
    pub iterations: usize,
}

/// Barrier path-following constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierSettings<T> {
    pub initial_weight: T,
    pub weight_factor: T,
    pub rel_tol: T,
    pub abs_tol: T,
    /// Newton decrement `λ²/2` below which a stage counts as centred.
    pub centering_tol: T,
    pub max_newton_per_stage: usize,
    pub max_stages: usize,
}

impl<T: Real> Default for BarrierSettings<T> {
    fn default() -> Self {
        Self {
            initial_weight: T::one(),
            weight_factor: T::lit(0.2),
            rel_tol: T::lit(1e-8),
            abs_tol: T::lit(1e-10),
            centering_tol: T::lit(1e-11),
            max_newton_per_stage: 200,
            max_stages: 200,
        }
    }
}

/// Capacity-achieving covariance `W_c` and the capacity `r_max` (bits/s/Hz).
pub fn capacity_waterfilling<T: Real>(
    h: &ChannelMatrix<T>,
    power: T,
    noise: T,
) -> Result<(T, Covariance<T>)> {
    if h.entries.iter().all(|z| z.norm_sqr() == T::zero()) {
        return Err(Error::ZeroChannel);
    }
    let svd = reduced_svd(&h.entries)?;
    let gains: Vec<T> = svd.singular_values.iter().map(|&s| s * s).collect();
    let levels = water_filling(&gains, power, noise)?;
    let n = h.n_tx();
    let mut w = CMatrix::<T>::zeros(n, n);
    let mut r_max = T::zero();
    for (i, (&p, &g)) in levels.iter().zip(&gains).enumerate() {
        if p > T::zero() {
            let col = svd.v.column(i);
            w += (col * col.adjoint()).map(|z| z * p);
            r_max += (T::one() + p * g / noise).ln();
        }
    }
    Ok((
        r_max / T::ln_2(),
        Covariance::from_matrix_unchecked(hermitian_part(&w)),
    ))
}

/// `R̄ ≤ r_max`.
pub fn check_feasibility<T: Real>(rbar: T, r_max: T) -> bool {
    rbar <= r_max
}

/// Numerical rank (eigenvalues above `tol·λ_max`) and the descending spectrum.
pub fn rank_diagnostics<T: Real>(w: &Covariance<T>, tol: T) -> Result<(usize, Vec<T>)> {
    let evd = hermitian_evd(w.matrix())?;
    let values: Vec<T> = evd.values.iter().copied().collect();
    Ok((numerical_rank(&values, tol), values))
}

/// Orthonormal basis of Hermitian `n × n` matrices under `⟨X, Y⟩ = tr(XY)`:
/// `e_i e_iᵀ`, then for `i < j` the pair `(e_i e_jᵀ + e_j e_iᵀ)/√2` and
/// `j(e_i e_jᵀ − e_j e_iᵀ)/√2`.
struct HermitianBasis {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl HermitianBasis {
    fn new(n: usize) -> Self {
        let mut pairs = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push((i, j));
            }
        }
        Self { n, pairs }
    }

    fn dim(&self) -> usize {
        self.n * self.n
    }

    /// `tr(A E_k)` for every basis element; real for Hermitian `A`.
    fn coords<T: Real>(&self, a: &CMatrix<T>) -> Vec<Complex<T>> {
        let r = T::lit(std::f64::consts::FRAC_1_SQRT_2);
        let mut out = Vec::with_capacity(self.dim());
        for i in 0..self.n {
            out.push(a[(i, i)]);
        }
        for &(i, j) in &self.pairs {
            out.push((a[(i, j)] + a[(j, i)]) * r);
            out.push((a[(j, i)] - a[(i, j)]) * Complex::new(T::zero(), r));
        }
        out
    }

    fn real_coords<T: Real>(&self, a: &CMatrix<T>) -> Vec<T> {
        self.coords(a).into_iter().map(|z| z.re).collect()
    }

    fn assemble<T: Real>(&self, x: &[T]) -> CMatrix<T> {
        let r = T::lit(std::f64::consts::FRAC_1_SQRT_2);
        let mut m = CMatrix::<T>::zeros(self.n, self.n);
        for i in 0..self.n {
            m[(i, i)] = Complex::new(x[i], T::zero());
        }
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            let re = x[self.n + 2 * p] * r;
            let im = x[self.n + 2 * p + 1] * r;
            m[(i, j)] = Complex::new(re, im);
            m[(j, i)] = Complex::new(re, -im);
        }
        m
    }

    fn element<T: Real>(&self, k: usize) -> CMatrix<T> {
        let mut x = vec![T::zero(); self.dim()];
        x[k] = T::one();
        self.assemble(&x)
    }
}

/// Problem data after normalising power to one and the sensing matrices to
/// unit spectral scale.
struct Scaled<T: Real> {
    a12: CMatrix<T>,
    a3: CMatrix<T>,
    a4: CMatrix<T>,
    /// `H √P / σ_c`.
    g: CMatrix<T>,
    rbar: T,
    use_rate: bool,
}

impl<T: Real> Scaled<T> {
    fn traces(&self, w: &CMatrix<T>) -> (T, Complex<T>, T) {
        (
            trace_product(&self.a12, w).re,
            trace_product(&self.a3, w),
            trace_product(&self.a4, w).re,
        )
    }

    fn rate(&self, w: &CMatrix<T>) -> T {
        rate_matrix(w, &self.g, T::one())
    }

    /// Barrier parameter: `N_t` for `W`, 2 for the LMI, 1 for power and 1
    /// for the rate when it is enforced.
    fn n_constraints(&self) -> usize {
        let n = self.a12.nrows();
        n + 2 + 1 + usize::from(self.use_rate)
    }

    fn iterate(&self, w: CMatrix<T>, power_slack: T, rate_slack: T) -> Result<Iterate<T>> {
        let (u, c, v) = self.traces(&w);
        let evd = hermitian_evd(&w)?;
        let mut s = evd.vectors.clone();
        for (j, &lam) in evd.values.iter().enumerate() {
            let r = lam.max(T::zero()).sqrt();
            s.column_mut(j).apply(|z| *z *= r);
        }
        let s_h = s.adjoint();
        let n_u = self.g.nrows();
        let info = CMatrix::<T>::identity(n_u, n_u) + &self.g * &w * self.g.adjoint();
        let chol = hermitian_part(&info)
            .cholesky()
            .ok_or(Error::Decomposition("rate information matrix"))?;
        Ok(Iterate {
            w,
            s,
            s_h,
            u,
            c,
            v,
            power_slack,
            rate_slack,
            chol,
        })
    }
}

/// Strictly feasible point of the barrier problem.
///
/// The auxiliary `t` is not stored: for fixed `W` the barrier minimiser in
/// `t` is `schur(W) − weight`, so the LMI barrier `−log det B` reduces to
/// `−log v − log(weight)`. Slacks for power and rate are carried forward by
/// exactly computed increments, which keeps them accurate when they are
/// many orders of magnitude below the quantities they are differences of.
struct Iterate<T: Real> {
    w: CMatrix<T>,
    /// `V Λ^{1/2}` from the eigendecomposition of `w`.
    s: CMatrix<T>,
    s_h: CMatrix<T>,
    u: T,
    c: Complex<T>,
    v: T,
    power_slack: T,
    rate_slack: T,
    chol: nalgebra::Cholesky<Complex<T>, nalgebra::Dyn>,
}

impl<T: Real> Iterate<T> {
    fn schur(&self) -> T {
        self.u - self.c.norm_sqr() / self.v
    }
}

/// One Newton system in the eigenbasis-scaled coordinates, with the linear
/// forms needed to evaluate step increments exactly.
///
/// The Hessian is `hess + Σ cᵢ cᵢᵀ / dᵢ`; the rank-one terms are listed
/// separately since their weights `1/dᵢ` span many orders of magnitude.
struct NewtonSystem<T: Real> {
    grad: DVector<T>,
    hess: DMatrix<T>,
    low_rank: Vec<(DVector<T>, T)>,
    uh: Vec<T>,
    ch: Vec<Complex<T>>,
    vh: Vec<T>,
    pw: Vec<T>,
}

fn newton_system<T: Real>(
    p: &Scaled<T>,
    basis: &HermitianBasis,
    it: &Iterate<T>,
    weight: T,
) -> NewtonSystem<T> {
    let nb = basis.dim();
    let mut grad = DVector::<T>::zeros(nb);
    let mut hess = DMatrix::<T>::zeros(nb, nb);
    let mut low_rank = Vec::with_capacity(4);
    let two = T::lit(2.0);

    // −log det(I + X)
    for i in 0..basis.n {
        grad[i] -= T::one();
    }
    for k in 0..nb {
        hess[(k, k)] += T::one();
    }

    // −log(1 − tr W)
    let pw = basis.real_coords(&(&it.s_h * &it.s));
    let sp = it.power_slack;
    for k in 0..nb {
        grad[k] += pw[k] / sp;
    }
    low_rank.push((DVector::from_column_slice(&pw), sp * sp));

    // −log(rate − R̄)
    if p.use_rate {
        let kmat = hermitian_part(&(&it.s_h * p.g.adjoint() * it.chol.solve(&p.g) * &it.s));
        let inv_ln2 = T::one() / T::ln_2();
        let gr: Vec<T> = basis
            .real_coords(&kmat)
            .into_iter()
            .map(|x| x * inv_ln2)
            .collect();
        let sr = it.rate_slack;
        for l in 0..nb {
            let kek = &kmat * basis.element::<T>(l) * &kmat;
            let col = basis.real_coords(&kek);
            for k in 0..nb {
                hess[(k, l)] += col[k] * inv_ln2 / sr;
            }
            grad[l] -= gr[l] / sr;
        }
        low_rank.push((DVector::from_column_slice(&gr), sr * sr));
    }

    // −schur(W)/weight − log v
    let uh = basis.real_coords(&(&it.s_h * &p.a12 * &it.s));
    let ch = basis.coords(&(&it.s_h * &p.a3 * &it.s));
    let vh = basis.real_coords(&(&it.s_h * &p.a4 * &it.s));
    let (c, v) = (it.c, it.v);
    let c2 = c.norm_sqr();
    let inv_w = T::one() / weight;
    let cc: Vec<T> = ch.iter().map(|z| (c.conj() * z).re).collect();
    // Hessian of |c|²/v is (2/v) Re(eₖ* eₗ) with eₖ = ĉₖ − (c/v) v̂ₖ.
    let e: Vec<Complex<T>> = ch.iter().zip(&vh).map(|(&z, &q)| z - c * (q / v)).collect();
    for k in 0..nb {
        let ds = uh[k] - two * cc[k] / v + c2 * vh[k] / (v * v);
        grad[k] -= ds * inv_w + vh[k] / v;
        for l in 0..nb {
            hess[(k, l)] += vh[k] * vh[l] / (v * v);
        }
    }
    let d = v * weight / two;
    low_rank.push((DVector::from_iterator(nb, e.iter().map(|z| z.re)), d));
    low_rank.push((DVector::from_iterator(nb, e.iter().map(|z| z.im)), d));
    NewtonSystem {
        grad,
        hess,
        low_rank,
        uh,
        ch,
        vh,
        pw,
    }
}

/// Solves the Newton system with Jacobi scaling and a Cholesky
/// factorisation, adding a small ridge if the factorisation fails.
fn newton_direction<T: Real>(sys: &NewtonSystem<T>) -> Result<DVector<T>> {
    let n = sys.grad.len();
    let mut full = sys.hess.clone();
    for (col, d) in &sys.low_rank {
        full.ger(T::one() / *d, col, col, T::one());
    }
    let dscale = DVector::<T>::from_fn(n, |i, _| {
        let h = full[(i, i)];
        if h > T::zero() {
            T::one() / h.sqrt()
        } else {
            T::one()
        }
    });
    let mut h = DMatrix::<T>::from_fn(n, n, |i, j| full[(i, j)] * dscale[i] * dscale[j]);
    h = (&h + h.transpose()) * T::lit(0.5);
    let rhs = DVector::<T>::from_fn(n, |i, _| -sys.grad[i] * dscale[i]);
    let mut ridge = T::zero();
    for _ in 0..12 {
        let mut hr = h.clone();
        for i in 0..n {
            hr[(i, i)] += ridge;
        }
        if let Some(ch) = hr.cholesky() {
            let y = ch.solve(&rhs);
            return Ok(DVector::from_fn(n, |i, _| y[i] * dscale[i]));
        }
        ridge = if ridge == T::zero() {
            T::lit(1e-14).max(T::eps())
        } else {
            ridge * T::lit(100.0)
        };
    }
    Err(Error::Decomposition("barrier Newton system"))
}

/// `Σ xₖ yₖ`.
fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |a, (&p, &q)| a + p * q)
}

/// Outcome of a trial step `W + α S X S`.
struct Trial<T: Real> {
    w: CMatrix<T>,
    power_slack: T,
    rate_slack: T,
    /// Change of the barrier objective.
    change: T,
}

#[allow(clippy::too_many_arguments)]
fn trial_step<T: Real>(
    p: &Scaled<T>,
    it: &Iterate<T>,
    sys: &NewtonSystem<T>,
    x: &CMatrix<T>,
    x_coords: &[T],
    x_eigs: &[T],
    alpha: T,
    weight: T,
) -> Option<Trial<T>> {
    if x_eigs.iter().any(|&e| !(T::one() + alpha * e > T::zero())) {
        return None;
    }
    let du = alpha * dot(&sys.uh, x_coords);
    let dc = sys
        .ch
        .iter()
        .zip(x_coords)
        .fold(Complex::new(T::zero(), T::zero()), |a, (z, &q)| a + z * q)
        * alpha;
    let dv = alpha * dot(&sys.vh, x_coords);
    let dp = -alpha * dot(&sys.pw, x_coords);
    let v_new = it.v + dv;
    let power_new = it.power_slack + dp;
    if !(v_new > T::zero()) || !(power_new > T::zero()) {
        return None;
    }
    let dw = &it.s * x.map(|z| z * alpha) * &it.s_h;
    let (rate_new, dr_term) = if p.use_rate {
        // log₂ det(I + L⁻¹ G ΔW Gᴴ L⁻ᴴ) from the current Cholesky factor.
        let l = it.chol.l();
        let gdg = &p.g * &dw * p.g.adjoint();
        let y = l.solve_lower_triangular(&gdg)?;
        let e = l.solve_lower_triangular(&y.adjoint())?.adjoint();
        let inc = hermitian_evd(&hermitian_part(&e))
            .ok()?
            .values
            .iter()
            .try_fold(T::zero(), |a, &lam| {
                (T::one() + lam > T::zero()).then(|| a + lam.ln_1p())
            })?
            / T::ln_2();
        let r_new = it.rate_slack + inc;
        if !(r_new > T::zero()) {
            return None;
        }
        (r_new, -(inc / it.rate_slack).ln_1p())
    } else {
        (it.rate_slack, T::zero())
    };
    // schur(new) − schur(old) without subtracting the two values.
    let num = (T::lit(2.0) * (it.c.conj() * dc).re + dc.norm_sqr()) * it.v - it.c.norm_sqr() * dv;
    let dschur = du - num / (it.v * v_new);
    let logdet = x_eigs
        .iter()
        .fold(T::zero(), |a, &e| a - (alpha * e).ln_1p());
    let change =
        -dschur / weight + logdet - (dp / it.power_slack).ln_1p() - (dv / it.v).ln_1p() + dr_term;
    Some(Trial {
        w: hermitian_part(&(&it.w + dw)),
        power_slack: power_new,
        rate_slack: rate_new,
        change,
    })
}

struct Centered<T: Real> {
    it: Iterate<T>,
    /// `weight · ‖∇‖` at the last Newton system, in units of the scaled
    /// objective.
    stationarity: T,
}

fn center<T: Real>(
    p: &Scaled<T>,
    basis: &HermitianBasis,
    mut it: Iterate<T>,
    weight: T,
    settings: &BarrierSettings<T>,
    iterations: &mut usize,
) -> Result<Centered<T>> {
    let mut stationarity = T::lit(f64::INFINITY);
    for _ in 0..settings.max_newton_per_stage {
        let sys = newton_system(p, basis, &it, weight);
        stationarity = weight * sys.grad.norm();
        let dir = newton_direction(&sys)?;
        let dec2 = -sys.grad.dot(&dir);
        *iterations += 1;
        if !(dec2 >= T::zero()) {
            return Err(Error::SolverFailure {
                reason: "Newton direction is not a descent direction".into(),
                residual: stationarity.to_f64_lossy(),
            });
        }
        if dec2 * T::lit(0.5) <= settings.centering_tol {
            break;
        }
        let x = basis.assemble(dir.as_slice());
        let x_eigs: Vec<T> = hermitian_evd(&x)?.values.iter().copied().collect();
        let mut alpha = T::one();
        if dec2.sqrt() > T::lit(0.25) {
            alpha = T::one() / (T::one() + dec2.sqrt());
        }
        let mut accepted = None;
        for _ in 0..60 {
            if let Some(tr) = trial_step(p, &it, &sys, &x, dir.as_slice(), &x_eigs, alpha, weight) {
                if tr.change <= -T::lit(0.25) * alpha * dec2 {
                    accepted = Some(tr);
                    break;
                }
            }
            alpha *= T::lit(0.5);
        }
        match accepted {
            Some(tr) => it = p.iterate(tr.w, tr.power_slack, tr.rate_slack)?,
            None => {
                return Err(Error::SolverFailure {
                    reason: format!("line search stalled (Newton decrement {:?})", dec2),
                    residual: stationarity.to_f64_lossy(),
                })
            }
        }
    }
    Ok(Centered { it, stationarity })
}

/// Strictly feasible start: a shrunk blend of the isotropic design and `W_c`.
fn initial_point<T: Real>(p: &Scaled<T>, w_cap: &CMatrix<T>) -> Option<CMatrix<T>> {
    let n = w_cap.nrows();
    let iso = CMatrix::<T>::identity(n, n).map(|z| z * (T::one() / T::from_usize_lossy(n)));
    let mut gamma = T::lit(0.5);
    let mut eps = T::lit(1e-3);
    for _ in 0..80 {
        let w = (iso.map(|z| z * gamma) + w_cap.map(|z| z * (T::one() - gamma)))
            .map(|z| z * (T::one() - eps));
        let rate_ok = !p.use_rate || p.rate(&w) > p.rbar;
        if rate_ok && p.traces(&w).2 > T::zero() {
            return Some(w);
        }
        gamma *= T::lit(0.5);
        eps *= T::lit(0.5);
    }
    None
}

/// Exact-PCRB-optimal transmit covariance under rate and power constraints.
pub fn solve_p3<T: Real>(
    m: &SensingMatrices<T>,
    h: &ChannelMatrix<T>,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
    rbar: T,
) -> Result<OptimalSolveResult<T>> {
    solve_p3_with(m, h, env, cfg, rbar, &BarrierSettings::default())
}

pub fn solve_p3_with<T: Real>(
    m: &SensingMatrices<T>,
    h: &ChannelMatrix<T>,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
    rbar: T,
    settings: &BarrierSettings<T>,
) -> Result<OptimalSolveResult<T>> {
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
    let boundary_tol = T::lit(1e-9) * r_max.max(T::one());
    if rbar >= r_max - boundary_tol {
        return finish_at_capacity(m, h, env, cfg, w_cap);
    }

    let a12 = m.a12();
    let c_a = hermitian_evd(&hermitian_part(&a12))?.values[0];
    let c_a = if c_a > T::zero() { c_a } else { T::one() };
    let inv_ca = T::one() / c_a;
    let gscale = power.sqrt() / noise.sqrt();
    let p = Scaled {
        a12: a12.map(|z| z * inv_ca),
        a3: m.a3.map(|z| z * inv_ca),
        a4: m.a4.map(|z| z * inv_ca),
        g: h.entries.map(|z| z * gscale),
        rbar,
        use_rate: rbar > T::zero(),
    };
    let basis = HermitianBasis::new(n);
    let w_cap_scaled = w_cap.matrix().map(|z| z / power);
    let w0 = initial_point(&p, &w_cap_scaled).ok_or(Error::SolverFailure {
        reason: "no strictly feasible starting point".into(),
        residual: f64::NAN,
    })?;
    let power0 = T::one() - w0.diagonal().iter().fold(T::zero(), |a, z| a + z.re);
    let rate0 = if p.use_rate {
        p.rate(&w0) - rbar
    } else {
        T::one()
    };
    let mut it = p.iterate(w0, power0, rate0)?;

    let m_count = T::from_usize_lossy(p.n_constraints());
    let mut weight = settings.initial_weight;
    let mut iterations = 0usize;
    let mut stationarity = T::lit(f64::INFINITY);
    let mut converged = false;
    for _ in 0..settings.max_stages {
        let c = center(&p, &basis, it, weight, settings, &mut iterations)?;
        it = c.it;
        stationarity = c.stationarity;
        let t = it.schur() - weight;
        if m_count * weight <= settings.rel_tol * t.abs() + settings.abs_tol {
            converged = true;
            break;
        }
        weight *= settings.weight_factor;
    }
    let t = it.schur() - weight;
    let gap = m_count * weight / t.abs().max(T::one());
    if !converged {
        return Err(Error::SolverFailure {
            reason: format!(
                "barrier stopped before reaching the target gap (t = {:?})",
                t
            ),
            residual: gap.to_f64_lossy(),
        });
    }

    // Recover unscaled quantities; tr W = P is restored by a uniform rescale,
    // which can only raise the objective and the rate.
    let tr = T::one() - it.power_slack;
    let cov = Covariance::from_matrix_unchecked(hermitian_part(&it.w.map(|z| z * (power / tr))));
    let t_star = t * power * c_a;
    let mu_p = weight / it.power_slack * c_a;
    let mu_r = if p.use_rate {
        weight / it.rate_slack * power * c_a
    } else {
        T::zero()
    };
    let z2 = -it.c / it.v;
    let kkt_residual = stationarity.max(gap);
    let schur = schur_objective(cov.matrix(), m);
    let rel = (schur - t_star).abs() / schur.abs().max(T::tiny());
    if rel > T::lit(1e-7) {
        return Err(Error::SolverFailure {
            reason: format!("auxiliary objective differs from the Schur objective by {rel:?}"),
            residual: rel.to_f64_lossy(),
        });
    }
    let (rank_w, _) = rank_diagnostics(&cov, T::lit(RANK_TOL))?;
    Ok(OptimalSolveResult {
        pcrb_value: pcrb(&cov, m, env, cfg.symbols)?,
        rate_value: rate(&cov, h, noise),
        w: cov,
        t_star,
        mu_p,
        mu_r,
        z2,
        kkt_residual,
        rank_w,
        iterations,
    })
}

fn finish_at_capacity<T: Real>(
    m: &SensingMatrices<T>,
    h: &ChannelMatrix<T>,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
    w_cap: Covariance<T>,
) -> Result<OptimalSolveResult<T>> {
    let (_, c, v) = m.traces(w_cap.matrix());
    let z2 = if v > T::zero() {
        -c / v
    } else {
        Complex::new(T::zero(), T::zero())
    };
    let (rank_w, _) = rank_diagnostics(&w_cap, T::lit(RANK_TOL))?;
    Ok(OptimalSolveResult {
        t_star: schur_objective(w_cap.matrix(), m),
        pcrb_value: pcrb(&w_cap, m, env, cfg.symbols)?,
        rate_value: rate(&w_cap, h, cfg.noise_comm_w),
        mu_p: T::zero(),
        mu_r: T::zero(),
        z2,
        kkt_residual: T::zero(),
        rank_w,
        iterations: 0,
        w: w_cap,
    })
}

/// Solves one instance per rate target in parallel; results keep the input
/// order.
pub fn solve_p3_sweep<T: Real>(
    m: &SensingMatrices<T>,
    h: &ChannelMatrix<T>,
    env: &TargetEnvironment<T>,
    cfg: &SystemConfig<T>,
    rbars: &[T],
) -> Vec<Result<OptimalSolveResult<T>>> {
    rbars
        .par_iter()
        .map(|&r| solve_p3(m, h, env, cfg, r))
        .collect()
}
