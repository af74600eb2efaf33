//! Large-dimension limit tooling: the Marchenko-Pastur mutual-information
//! limit in closed form, a quadrature cross-oracle, and the ring-matrix
//! finite-horizon approximation with O(1/M) error.

use num_complex::Complex;
use thiserror::Error;

use crate::channel_models::ChannelPair;
use crate::hpd_cone::{chol_log_det, hermitize};
use crate::{real, CMatrix, Scalar};

#[derive(Debug, Error)]
pub enum RmtError {
    #[error("SNR must be nonnegative, got {0}")]
    InvalidSnr(f64),
    #[error("quadrature needs at least 64 points, got {0}")]
    TooFewPoints(usize),
    #[error("ring matrix needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// `int log(1 + rho lambda) dmu_MP(lambda)` in closed form:
/// `2 log((sqrt(4 rho + 1) + 1)/2) - (2 rho + 1 - sqrt(4 rho + 1))/(2 rho)`,
/// continued by 0 at `rho = 0`.
pub fn mp_closed_form<T: Scalar>(rho: T) -> Result<T, RmtError> {
    if rho < T::zero() {
        return Err(RmtError::InvalidSnr(crate::as_f64(rho)));
    }
    if rho == T::zero() {
        return Ok(T::zero());
    }
    let two = real::<T>(2.0);
    let four = real::<T>(4.0);
    let root = (four * rho + T::one()).sqrt();
    Ok(two * ((root + T::one()) / two).ln() - (two * rho + T::one() - root) / (two * rho))
}

/// Midpoint rule on the substitution `lambda = 4 sin^2 theta`, which turns
/// the integral into `(4/pi) int_0^{pi/2} f(4 sin^2 theta) cos^2 theta
/// dtheta` and removes both endpoint singularities of the density; the
/// theta-integrand extends to a smooth periodic function, so the midpoint
/// rule converges spectrally.
fn mp_quadrature<T: Scalar>(
    n_points: usize,
    f: impl Fn(T) -> T,
) -> Result<T, RmtError> {
    if n_points < 64 {
        return Err(RmtError::TooFewPoints(n_points));
    }
    let half_pi = real::<T>(std::f64::consts::FRAC_PI_2);
    let step = half_pi / real::<T>(n_points as f64);
    let four = real::<T>(4.0);
    let mut sum = T::zero();
    for i in 0..n_points {
        let theta = (real::<T>(i as f64) + real::<T>(0.5)) * step;
        let s = theta.sin();
        let c = theta.cos();
        sum += f(four * s * s) * c * c;
    }
    Ok(sum * step * four / real::<T>(std::f64::consts::PI))
}

/// Quadrature evaluation of
/// `int_0^4 log(1 + rho lambda) (2 pi)^{-1} sqrt(4/lambda - 1) dlambda`.
pub fn mp_integral<T: Scalar>(rho: T, n_points: usize) -> Result<T, RmtError> {
    if rho < T::zero() {
        return Err(RmtError::InvalidSnr(crate::as_f64(rho)));
    }
    mp_quadrature(n_points, |lambda| (T::one() + rho * lambda).ln())
}

/// Marchenko-Pastur density `(2 pi)^{-1} sqrt(4/lambda - 1)` on `(0, 4]`,
/// zero elsewhere.
pub fn mp_density<T: Scalar>(lambda: T) -> T {
    let four = real::<T>(4.0);
    if lambda <= T::zero() || lambda > four {
        return T::zero();
    }
    (four / lambda - T::one()).sqrt() / real::<T>(2.0 * std::f64::consts::PI)
}

/// Marchenko-Pastur CDF. Under `lambda = 4 sin^2 theta` the mass below `x`
/// is `(4/pi) int_0^{asin(sqrt(x/4))} cos^2 = (2/pi)(theta + sin theta cos
/// theta)`, a closed form used for distribution-level comparisons.
pub fn mp_cdf<T: Scalar>(x: T) -> T {
    let four = real::<T>(4.0);
    if x <= T::zero() {
        return T::zero();
    }
    if x >= four {
        return T::one();
    }
    let theta = (x / four).sqrt().asin();
    (theta + theta.sin() * theta.cos()) * real::<T>(2.0 / std::f64::consts::PI)
}

/// Assembles the ring matrix of `M + 1` pairs: `G_i` on the block diagonal,
/// `F_{i+1}` on the first block subdiagonal, and `F_0` alone in the
/// top-right corner block. Size `(M+1)N x (M+1)K`.
pub fn build_ring_matrix<T: Scalar>(
    pairs: &[ChannelPair<T>],
) -> Result<CMatrix<T>, RmtError> {
    if pairs.len() < 2 {
        return Err(RmtError::TooFewPairs(pairs.len()));
    }
    let (n_dim, k_dim) = pairs[0].dims();
    for (i, p) in pairs.iter().enumerate() {
        if p.dims() != (n_dim, k_dim) {
            return Err(RmtError::Dimension(format!(
                "pair {i} is {}x{}, expected {n_dim}x{k_dim}",
                p.dims().0,
                p.dims().1
            )));
        }
    }
    let m1 = pairs.len();
    let mut h = CMatrix::<T>::zeros(m1 * n_dim, m1 * k_dim);
    for (i, p) in pairs.iter().enumerate() {
        h.view_mut((i * n_dim, i * k_dim), (n_dim, k_dim)).copy_from(&p.g);
        if i > 0 {
            h.view_mut((i * n_dim, (i - 1) * k_dim), (n_dim, k_dim))
                .copy_from(&p.f);
        }
    }
    h.view_mut((0, (m1 - 1) * k_dim), (n_dim, k_dim))
        .copy_from(&pairs[0].f);
    Ok(h)
}

/// Finite-horizon proxy `(1/((M+1)N)) log det(I + rho ring ring*)`, whose
/// distance to the ergodic mutual information is O(1/M) uniformly in the
/// block dimensions.
pub fn ring_mi<T: Scalar>(pairs: &[ChannelPair<T>], rho: T) -> Result<T, RmtError> {
    if rho < T::zero() {
        return Err(RmtError::InvalidSnr(crate::as_f64(rho)));
    }
    let h = build_ring_matrix(pairs)?;
    let dim = h.nrows();
    let m = CMatrix::<T>::identity(dim, dim)
        + hermitize(&(&h * h.adjoint())) * Complex::new(rho, T::zero());
    let log_det = chol_log_det(&m)
        .ok_or_else(|| RmtError::Numerical("I + rho HH* not positive definite".into()))?;
    Ok(log_det / real::<T>(dim as f64))
}

// ---------------------------------------------------------------------------
