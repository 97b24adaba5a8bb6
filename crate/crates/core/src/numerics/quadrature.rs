//! Composite Gauss–Legendre quadrature with panel doubling.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::{CMatrix, Error, Real, Result};

/// Composite rule parameters.
///
/// The integral is first evaluated on `panels` equal panels, then the panel
/// count is doubled until two successive estimates agree to `rel_tol` or the
/// panel count would exceed `max_panels`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec<T> {
    pub panels: usize,
    pub nodes_per_panel: usize,
    pub rel_tol: T,
    pub max_panels: usize,
}

impl<T: Real> Default for QuadratureSpec<T> {
    fn default() -> Self {
        Self {
            panels: 64,
            nodes_per_panel: 16,
            rel_tol: T::lit(1e-9),
            max_panels: 4096,
        }
    }
}

impl<T: Real> QuadratureSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.panels == 0 || self.nodes_per_panel == 0 {
            return Err(Error::InvalidConfig(
                "quadrature needs at least one panel and one node".into(),
            ));
        }
        if !(self.rel_tol > T::zero() && self.rel_tol <= T::lit(1e-3)) {
            return Err(Error::InvalidConfig(format!(
                "quadrature rel_tol {:?} outside (0, 1e-3]",
                self.rel_tol
            )));
        }
        if self.max_panels < self.panels {
            return Err(Error::InvalidConfig("max_panels below panels".into()));
        }
        Ok(())
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
///
/// Computed by Newton iteration on the three-term Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess for the i-th largest root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A fixed composite rule: absolute nodes and weights on an interval.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn composite(lo: T, hi: T, panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        let width = (hi - lo) / T::from_usize_lossy(panels);
        let half = width / T::lit(2.0);
        for p in 0..panels {
            let mid = lo + width * T::from_usize_lossy(p) + half;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + half * T::lit(*xi));
                weights.push(half * T::lit(*wi));
            }
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Values that can be accumulated by a quadrature rule.
pub trait Quadrable<T: Real>: Clone {
    fn scaled(&self, w: T) -> Self;
    fn add_scaled(&mut self, other: &Self, w: T);
    /// Magnitude used for convergence tests.
    fn magnitude(&self) -> T;
    fn distance(&self, other: &Self) -> T;
}

impl<T: Real> Quadrable<T> for T {
    fn scaled(&self, w: T) -> Self {
        *self * w
    }
    fn add_scaled(&mut self, other: &Self, w: T) {
        *self += *other * w;
    }
    fn magnitude(&self) -> T {
        self.abs()
    }
    fn distance(&self, other: &Self) -> T {
        (*self - *other).abs()
    }
}

impl<T: Real> Quadrable<T> for Complex<T> {
    fn scaled(&self, w: T) -> Self {
        *self * w
    }
    fn add_scaled(&mut self, other: &Self, w: T) {
        *self += *other * w;
    }
    fn magnitude(&self) -> T {
        self.norm_sqr().sqrt()
    }
    fn distance(&self, other: &Self) -> T {
        (*self - *other).norm_sqr().sqrt()
    }
}

impl<T: Real> Quadrable<T> for CMatrix<T> {
    fn scaled(&self, w: T) -> Self {
        self.map(|z| z * w)
    }
    fn add_scaled(&mut self, other: &Self, w: T) {
        self.zip_apply(other, |a, b| *a += b * w);
    }
    fn magnitude(&self) -> T {
        frobenius(self)
    }
    fn distance(&self, other: &Self) -> T {
        frobenius(&(self - other))
    }
}

impl<T: Real> Quadrable<T> for Vec<CMatrix<T>> {
    fn scaled(&self, w: T) -> Self {
        self.iter().map(|m| m.scaled(w)).collect()
    }
    fn add_scaled(&mut self, other: &Self, w: T) {
        for (a, b) in self.iter_mut().zip(other) {
            a.add_scaled(b, w);
        }
    }
    fn magnitude(&self) -> T {
        self.iter()
            .map(|m| {
                let f = frobenius(m);
                f * f
            })
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }
    fn distance(&self, other: &Self) -> T {
        self.iter()
            .zip(other)
            .map(|(a, b)| {
                let f = frobenius(&(a - b));
                f * f
            })
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }
}

impl<T: Real> Quadrable<T> for Vec<T> {
    fn scaled(&self, w: T) -> Self {
        self.iter().map(|x| *x * w).collect()
    }
    fn add_scaled(&mut self, other: &Self, w: T) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += *b * w;
        }
    }
    fn magnitude(&self) -> T {
        self.iter().fold(T::zero(), |a, b| a + *b * *b).sqrt()
    }
    fn distance(&self, other: &Self) -> T {
        self.iter()
            .zip(other)
            .fold(T::zero(), |a, (x, y)| a + (*x - *y) * (*x - *y))
            .sqrt()
    }
}

fn frobenius<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt()
}

/// One composite pass: the integral and the integral of the magnitude.
fn composite_pass<T, V, F>(f: &F, lo: T, hi: T, panels: usize, order: usize) -> (V, T)
where
    T: Real,
    V: Quadrable<T>,
    F: Fn(T) -> V,
{
    let rule = QuadratureRule::composite(lo, hi, panels, order);
    let mut it = rule.iter();
    let (x0, w0) = it.next().expect("non-empty rule");
    let v0 = f(x0);
    let mut abs_total = v0.magnitude() * w0;
    let mut acc = v0.scaled(w0);
    for (x, w) in it {
        let v = f(x);
        abs_total += v.magnitude() * w;
        acc.add_scaled(&v, w);
    }
    (acc, abs_total)
}

fn integrate_adaptive<T, V, F>(f: F, domain: (T, T), spec: &QuadratureSpec<T>) -> Result<V>
where
    T: Real,
    V: Quadrable<T>,
    F: Fn(T) -> V,
{
    spec.validate()?;
    let (lo, hi) = domain;
    let mut panels = spec.panels;
    let (mut coarse, _) = composite_pass(&f, lo, hi, panels, spec.nodes_per_panel);
    loop {
        let next = panels * 2;
        if next > spec.max_panels {
            return Err(Error::QuadratureAccuracy {
                previous: coarse.magnitude().to_f64_lossy(),
                last: coarse.magnitude().to_f64_lossy(),
            });
        }
        let (fine, abs_total) = composite_pass(&f, lo, hi, next, spec.nodes_per_panel);
        let diff = fine.distance(&coarse);
        let roundoff = T::lit(64.0) * T::eps() * abs_total;
        if diff <= spec.rel_tol * fine.magnitude() || diff <= roundoff {
            return Ok(fine);
        }
        if next * 2 > spec.max_panels {
            return Err(Error::QuadratureAccuracy {
                previous: coarse.magnitude().to_f64_lossy(),
                last: fine.magnitude().to_f64_lossy(),
            });
        }
        coarse = fine;
        panels = next;
    }
}

/// Integrates a real or complex scalar function over `domain`.
pub fn integrate_scalar<T, V, F>(f: F, domain: (T, T), spec: &QuadratureSpec<T>) -> Result<V>
where
    T: Real,
    V: Quadrable<T>,
    F: Fn(T) -> V,
{
    integrate_adaptive(f, domain, spec)
}

/// Entrywise integral of a matrix-valued function.
pub fn integrate_matrix<T, F>(f: F, domain: (T, T), spec: &QuadratureSpec<T>) -> Result<CMatrix<T>>
where
    T: Real,
    F: Fn(T) -> CMatrix<T>,
{
    integrate_adaptive(f, domain, spec)
}
