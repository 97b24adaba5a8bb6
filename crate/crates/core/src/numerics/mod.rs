//! Shared numerical kernels.

mod linalg;
mod quadrature;
mod waterfill;

pub use linalg::{
    hermitian_evd, hermitian_part, is_hermitian, log_det_hpd, numerical_rank, psd_inv_sqrt,
    psd_sqrt, reduced_svd, trace_product, HermitianEvd, ReducedSvd, RANK_TOL,
};
pub use quadrature::{
    gauss_legendre, integrate_matrix, integrate_scalar, Quadrable, QuadratureRule, QuadratureSpec,
};
pub use waterfill::water_filling;
