//! Mutual information of ergodic block-Jacobi wireless channels.
//!
//! Estimates Shannon's mutual information per component of a stationary
//! ergodic channel stream `(F_n, G_n)` through a coupled positive-definite
//! matrix recursion, cross-checks it against block log-determinants, and
//! reproduces the high-SNR offset and the Marchenko-Pastur large-dimension
//! limit at desk scale.
//!
//! The crate is organised around five modules:
//! - [`hpd_cone`]: complex-matrix and positive-definite-cone primitives
//!   (log-determinants, geodesic distance, projectors, Hermitian roots).
//! - [`channel_models`]: seeded ergodic generators for multipath AR fading,
//!   general vector-AR taps, MIMO block-AR taps, Rician overlays, and
//!   i.i.d. Gaussian baselines.
//! - [`estimators`]: the recursive Cesàro estimator, the naive block
//!   log-determinant, the high-SNR offset recursion, and spectral checks.
//! - [`rmt`]: Marchenko-Pastur closed form, quadrature oracle, and the
//!   ring-matrix finite-horizon approximation.
//! - [`harness`]: declarative experiment runner with deterministic parallel
//!   replications and CSV emission.
//!
//! All internal math is in nats; bit conversion happens at output time only.

use nalgebra::DMatrix;
use num_complex::Complex;

pub mod channel_models;
pub mod estimators;
pub mod harness;
pub mod hpd_cone;
pub mod rmt;

/// Real scalar the library is generic over: `f32` or `f64` in practice.
pub trait Scalar:
    nalgebra::RealField + num_traits::FromPrimitive + num_traits::ToPrimitive + Copy
{
}

impl<T> Scalar for T where
    T: nalgebra::RealField + num_traits::FromPrimitive + num_traits::ToPrimitive + Copy
{
}

/// Dense complex matrix over the generic real scalar `T`.
pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Double-precision complex matrix, the default working type.
pub type CMatrix64 = CMatrix<f64>;
/// Single-precision complex matrix.
pub type CMatrix32 = CMatrix<f32>;

pub use channel_models::{
    ChannelGenerator, ChannelPair, ChannelRng, ModelConfig, ModelVariant, ProfileConfig,
};
pub use estimators::MiEstimate;
pub use harness::{ExperimentConfig, ExperimentKind, ResultRow, Units};
pub use hpd_cone::HpdMatrix;

/// Double-precision Hermitian positive (semi)definite matrix.
pub type HpdMatrix64 = HpdMatrix<f64>;
/// Single-precision Hermitian positive (semi)definite matrix.
pub type HpdMatrix32 = HpdMatrix<f32>;



/// Converts an `f64` constant into the generic scalar.
pub(crate) fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}

/// Lossy view of a generic scalar as `f64`, for diagnostics and output.
pub(crate) fn as_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().expect("scalar convertible to f64")
}
