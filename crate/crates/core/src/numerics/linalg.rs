//! Dense Hermitian linear algebra on top of nalgebra's decompositions.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen, SVD};

use crate::{CMatrix, Error, Real, Result};

/// Relative threshold for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-6;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct HermitianEvd<T: Real> {
    pub values: DVector<T>,
    pub vectors: CMatrix<T>,
}

impl<T: Real> HermitianEvd<T> {
    /// Rebuilds `V f(Λ) V^H` for a spectral function `f`.
    pub fn map_spectrum<F: Fn(T) -> T>(&self, f: F) -> CMatrix<T> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            scaled.column_mut(j).apply(|z| *z *= s);
        }
        &scaled * self.vectors.adjoint()
    }

    pub fn top_vector(&self) -> DVector<Complex<T>> {
        self.vectors.column(0).into_owned()
    }
}

/// Reduced SVD `M = U diag(s) V^H` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct ReducedSvd<T: Real> {
    pub u: CMatrix<T>,
    pub singular_values: DVector<T>,
    pub v: CMatrix<T>,
}

fn frobenius<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt()
}

fn hermitian_tol<T: Real>() -> T {
    T::lit(1e-10).max(T::lit(256.0) * T::eps())
}

/// `(M + M^H) / 2`.
pub fn hermitian_part<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    (m + m.adjoint()).map(|z| z * T::lit(0.5))
}

/// True when `‖M − M^H‖_F ≤ tol·max(‖M‖_F, 1)`.
pub fn is_hermitian<T: Real>(m: &CMatrix<T>, tol: T) -> bool {
    m.is_square() && frobenius(&(m - m.adjoint())) <= tol * frobenius(m).max(T::one())
}

/// `tr(A·B)` without forming the product.
pub fn trace_product<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Complex<T> {
    let n = a.nrows();
    let mut acc = Complex::new(T::zero(), T::zero());
    for i in 0..n {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn hermitian_evd<T: Real>(m: &CMatrix<T>) -> Result<HermitianEvd<T>> {
    if !m.is_square() {
        return Err(Error::NotHermitian(f64::INFINITY));
    }
    if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Degenerate("non-finite matrix entry"));
    }
    let scale = frobenius(m).max(T::one());
    let asym = frobenius(&(m - m.adjoint()));
    if asym > hermitian_tol::<T>() * scale {
        return Err(Error::NotHermitian((asym / scale).to_f64_lossy()));
    }
    let n = m.nrows();
    if n == 0 {
        return Err(Error::Empty("matrix"));
    }
    let eig = SymmetricEigen::try_new(hermitian_part(m), T::eps(), 1000 * n.max(1))
        .ok_or(Error::Decomposition("Hermitian eigen"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::<T>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEvd { values, vectors })
}

pub fn reduced_svd<T: Real>(m: &CMatrix<T>) -> Result<ReducedSvd<T>> {
    if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Degenerate("non-finite matrix entry"));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("matrix"));
    }
    let svd = SVD::try_new_unordered(m.clone(), true, true, T::eps(), 1000 * rows.max(cols))
        .ok_or(Error::Decomposition("singular value"))?;
    let u = svd.u.ok_or(Error::Decomposition("singular value"))?;
    let v_t = svd.v_t.ok_or(Error::Decomposition("singular value"))?;
    let r = svd.singular_values.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let singular_values = DVector::from_iterator(r, order.iter().map(|&i| svd.singular_values[i]));
    let mut u_sorted = CMatrix::<T>::zeros(rows, r);
    let mut v_sorted = CMatrix::<T>::zeros(cols, r);
    let v = v_t.adjoint();
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v.column(src));
    }
    Ok(ReducedSvd {
        u: u_sorted,
        singular_values,
        v: v_sorted,
    })
}

/// Hermitian square root of a PSD matrix; small negative eigenvalues are clamped.
pub fn psd_sqrt<T: Real>(m: &CMatrix<T>) -> Result<CMatrix<T>> {
    let evd = hermitian_evd(m)?;
    let max = evd.values.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    if let Some(min) = evd.values.iter().copied().reduce(|a, b| a.min(b)) {
        if min < -T::lit(1e-8) * max.max(T::one()) {
            return Err(Error::NotPositiveDefinite(min.to_f64_lossy()));
        }
    }
    Ok(evd.map_spectrum(|v| v.max(T::zero()).sqrt()))
}

/// `M^{-1/2}` for a Hermitian positive definite matrix.
pub fn psd_inv_sqrt<T: Real>(m: &CMatrix<T>) -> Result<CMatrix<T>> {
    let evd = hermitian_evd(m)?;
    let max = evd.values[0];
    let min = evd.values[evd.values.len() - 1];
    if !(max > T::zero()) || min <= T::lit(1e-12) * max {
        return Err(Error::NotPositiveDefinite(min.to_f64_lossy()));
    }
    Ok(evd.map_spectrum(|v| T::one() / v.sqrt()))
}

/// Count of values above `tol · max`.
pub fn numerical_rank<T: Real>(values: &[T], tol: T) -> usize {
    let max = values.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    if max == T::zero() {
        return 0;
    }
    values.iter().filter(|v| v.abs() > tol * max).count()
}

/// `ln det M` for Hermitian positive definite `M`, via Cholesky.
pub fn log_det_hpd<T: Real>(m: &CMatrix<T>) -> Option<T> {
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut acc = T::zero();
    for i in 0..m.nrows() {
        acc += l[(i, i)].re.ln();
    }
    Some(acc * T::lit(2.0))
}

/// Real matrix helper: `Re` of a complex matrix.
#[allow(dead_code)]
pub(crate) fn real_part<T: Real>(m: &CMatrix<T>) -> DMatrix<T> {
    m.map(|z| z.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix<f64> {
        CMatrix::from_fn(rows, cols, |_, _| {
            Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix<f64> {
        hermitian_part(&random_matrix(n, n, rng))
    }

    fn fro(m: &CMatrix<f64>) -> f64 {
        m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_spectrum() {
        let evd = hermitian_evd(&CMatrix::<f64>::identity(4, 4)).unwrap();
        assert!(evd.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn rank_one_spectrum() {
        let v = nalgebra::DVector::from_vec(vec![
            Complex::new(1.0, 0.5),
            Complex::new(-0.3, 2.0),
            Complex::new(0.0, -1.0),
        ]);
        let m = &v * v.adjoint();
        let evd = hermitian_evd(&m).unwrap();
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        assert!((evd.values[0] - norm2).abs() < 1e-12);
        assert!(evd.values[1].abs() < 1e-12 && evd.values[2].abs() < 1e-12);
    }

    #[test]
    fn random_hermitian_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 10] {
            let m = random_hermitian(n, &mut rng);
            let evd = hermitian_evd(&m).unwrap();
            let rebuilt = evd.map_spectrum(|v| v);
            assert!(fro(&(&m - &rebuilt)) <= 1e-9 * fro(&m));
            let gram = evd.vectors.adjoint() * &evd.vectors;
            assert!(fro(&(gram - CMatrix::identity(n, n))) < 1e-10);
            for w in evd.values.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = CMatrix::<f64>::identity(2, 2);
        m[(0, 1)] = Complex::new(1.0, 0.0);
        assert!(matches!(hermitian_evd(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn svd_reconstruction_and_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_matrix(4, 6, &mut rng);
        let svd = reduced_svd(&m).unwrap();
        assert_eq!(svd.u.shape(), (4, 4));
        assert_eq!(svd.v.shape(), (6, 4));
        let s = CMatrix::from_diagonal(&svd.singular_values.map(|x| Complex::new(x, 0.0)));
        let rebuilt = &svd.u * s * svd.v.adjoint();
        assert!(fro(&(&m - rebuilt)) <= 1e-9 * fro(&m));
        for w in svd.singular_values.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn inv_sqrt_examples() {
        let i = psd_inv_sqrt(&CMatrix::<f64>::identity(3, 3)).unwrap();
        assert!(fro(&(i - CMatrix::identity(3, 3))) < 1e-14);
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex::new(4.0f64, 0.0),
            Complex::new(9.0, 0.0),
        ]));
        let r = psd_inv_sqrt(&d).unwrap();
        assert!((r[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!((r[(1, 1)].re - 1.0 / 3.0).abs() < 1e-14);
        assert!(r[(0, 1)].norm_sqr() < 1e-28);
    }

    #[test]
    fn inv_sqrt_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(6, 6, &mut rng);
        let m = &a * a.adjoint() + CMatrix::identity(6, 6).map(|z| z * 0.1);
        let r = psd_inv_sqrt(&m).unwrap();
        let check = &r * &m * &r;
        assert!(fro(&(check - CMatrix::identity(6, 6))) < 1e-8);
        // inverse square root of the square is the inverse
        let s = psd_sqrt(&m).unwrap();
        let back = psd_inv_sqrt(&(&s * &s)).unwrap() * &s;
        assert!(fro(&(back - CMatrix::identity(6, 6))) < 1e-8);
    }

    #[test]
    fn inv_sqrt_rejects_singular() {
        let m = CMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex::new(1.0, 0.0),
            Complex::new(0.0, 0.0),
        ]));
        assert!(matches!(
            psd_inv_sqrt(&m),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn rank_threshold() {
        assert_eq!(numerical_rank(&[1.0, 1e-3, 1e-7, 0.0], RANK_TOL), 2);
        assert_eq!(numerical_rank::<f64>(&[0.0, 0.0], RANK_TOL), 0);
    }

    #[test]
    fn log_det_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(5, 5, &mut rng);
        let m = &a * a.adjoint() + CMatrix::identity(5, 5);
        let evd = hermitian_evd(&m).unwrap();
        let expected: f64 = evd.values.iter().map(|v| v.ln()).sum();
        assert!((log_det_hpd(&m).unwrap() - expected).abs() < 1e-10);
    }
}
