//! Transmit covariance design for MIMO integrated sensing and communication
//! when the target angle is random with a Gaussian-mixture prior.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: array steering vectors, geometry, the angle prior and the
//!   Rician user channel.
//! - [`numerics`]: Gauss–Legendre quadrature, Hermitian eigen/singular value
//!   decompositions and water-filling.
//! - [`fisher`]: sensing matrices, the posterior CRB, its upper bound, point
//!   and expected CRBs, achievable rate and beampatterns.
//! - [`solver_optimal`]: capacity/feasibility and the exact PCRB-optimal
//!   covariance from a log-barrier path-following method.
//! - [`solver_suboptimal`]: the semi-closed-form upper-bound minimiser driven
//!   by an ellipsoid search over the Lagrange multipliers.
//! - [`benchmarks`]: known-angle (genie-aided) designs.
//! - [`estimation`]: Monte Carlo MAP/MLE estimation against the bounds.
//!
//! All numerical code is generic over the real scalar type through [`Real`];
//! the `*64` / `*32` aliases below fix the precision.

// `!(x > 0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod error;
pub mod estimation;
pub mod fisher;
pub mod model;
pub mod numerics;
pub mod solver_optimal;
pub mod solver_suboptimal;
#[cfg(test)]
mod testutil;

use nalgebra::{Complex, DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

pub use error::{Error, Result};

/// Real scalar usable by every numerical routine in the crate.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Debug + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the scalar type.
    #[inline]
    fn eps() -> Self {
        Self::default_epsilon()
    }

    /// Small positive floor used to guard logarithms and divisions.
    #[inline]
    fn tiny() -> Self {
        Self::lit(1e-30)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex scalar over `T`.
pub type C<T> = Complex<T>;
/// Dense complex matrix.
pub type CMatrix<T> = DMatrix<Complex<T>>;
/// Dense complex column vector.
pub type CVector<T> = DVector<Complex<T>>;

pub type SystemConfig64 = model::SystemConfig<f64>;
pub type SystemConfig32 = model::SystemConfig<f32>;
pub type GaussianMixture64 = model::GaussianMixture<f64>;
pub type GaussianMixture32 = model::GaussianMixture<f32>;
pub type TargetEnvironment64 = model::TargetEnvironment<f64>;
pub type TargetEnvironment32 = model::TargetEnvironment<f32>;
pub type ChannelMatrix64 = model::ChannelMatrix<f64>;
pub type ChannelMatrix32 = model::ChannelMatrix<f32>;
pub type SensingMatrices64 = fisher::SensingMatrices<f64>;
pub type SensingMatrices32 = fisher::SensingMatrices<f32>;
pub type Covariance64 = fisher::Covariance<f64>;
pub type Covariance32 = fisher::Covariance<f32>;
pub type OptimalSolveResult64 = solver_optimal::OptimalSolveResult<f64>;
pub type SolveResult64 = solver_suboptimal::SolveResult<f64>;
