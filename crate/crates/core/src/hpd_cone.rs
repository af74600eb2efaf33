//! Primitives on the cone of Hermitian positive (semi)definite matrices.
//!
//! Everything downstream (the W/Z recursions, the log-det estimators, the
//! contraction arguments) lives on this cone, so the validity invariants and
//! the geodesic metric are centralised here. All operations are pure and the
//! values are immutable once constructed.

use nalgebra::{Cholesky, Dyn, SymmetricEigen};
use num_complex::Complex;
use thiserror::Error;

use crate::{as_f64, real, CMatrix, Scalar};

/// Modulus of a complex entry over the generic scalar.
#[inline]
pub(crate) fn cabs<T: Scalar>(z: &Complex<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}

/// Relative Hermitian-deviation tolerance for constructor validation.
const HERMITIAN_TOL: f64 = 1e-12;
/// Relative tolerance on the smallest eigenvalue of a semidefinite matrix.
const SEMIDEFINITE_TOL: f64 = 1e-10;
/// Relative pivot threshold below which a matrix is declared rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ConeError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not Hermitian: max deviation {deviation:.3e} exceeds {tolerance:.3e}")]
    NotHermitian { deviation: f64, tolerance: f64 },
    #[error("matrix is not positive definite (Cholesky pivot failure)")]
    NotPositiveDefinite,
    #[error("eigenvalue {eigenvalue:.3e} below semidefinite tolerance {tolerance:.3e}")]
    NotSemidefinite { eigenvalue: f64, tolerance: f64 },
    #[error("rank deficient: pivot magnitude {pivot:.3e} below threshold {threshold:.3e}")]
    RankDeficient { pivot: f64, threshold: f64 },
    #[error("operation requires a strictly positive definite matrix")]
    NotStrict,
}

/// Definiteness class carried by an [`HpdMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    StrictlyPositive,
    Semidefinite,
}

/// A validated K x K Hermitian positive (semi)definite matrix.
///
/// Construction symmetrises the input via `(M + M*)/2`, which absorbs the
/// accumulation error of long recursions, then checks the definiteness flag:
/// strict positivity through a Cholesky factorisation, semidefiniteness
/// through the smallest eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct HpdMatrix<T: Scalar> {
    mat: CMatrix<T>,
    definiteness: Definiteness,
}

impl<T: Scalar> HpdMatrix<T> {
    pub fn new(mat: CMatrix<T>, definiteness: Definiteness) -> Result<Self, ConeError> {
        if mat.nrows() != mat.ncols() {
            return Err(ConeError::NotSquare(mat.nrows(), mat.ncols()));
        }
        if !mat.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(ConeError::NonFinite);
        }
        let max_abs = max_entry_abs(&mat);
        let deviation = mat
            .iter()
            .zip(mat.adjoint().iter())
            .map(|(a, b)| cabs(&(*a - *b)))
            .fold(T::zero(), |acc, d| acc.max(d));
        let tolerance = real::<T>(HERMITIAN_TOL) * (T::one() + max_abs);
        if deviation > tolerance {
            return Err(ConeError::NotHermitian {
                deviation: as_f64(deviation),
                tolerance: as_f64(tolerance),
            });
        }
        let mat = hermitize(&mat);
        match definiteness {
            Definiteness::StrictlyPositive => {
                if pd_cholesky(&mat).is_none() {
                    return Err(ConeError::NotPositiveDefinite);
                }
            }
            Definiteness::Semidefinite => {
                let eig = SymmetricEigen::new(mat.clone());
                let min = eig.eigenvalues.iter().copied().fold(T::zero(), T::min);
                let scale = eig
                    .eigenvalues
                    .iter()
                    .map(|l| l.abs())
                    .fold(T::zero(), T::max);
                let tol = real::<T>(SEMIDEFINITE_TOL) * scale;
                if min < -tol {
                    return Err(ConeError::NotSemidefinite {
                        eigenvalue: as_f64(min),
                        tolerance: as_f64(tol),
                    });
                }
            }
        }
        Ok(Self { mat, definiteness })
    }

    /// Internal constructor for matrices that are positive by construction
    /// (e.g. each step of the W-recursion); still symmetrises.
    pub(crate) fn from_hermitized(mat: CMatrix<T>, definiteness: Definiteness) -> Self {
        Self {
            mat: hermitize(&mat),
            definiteness,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: CMatrix::identity(dim, dim),
            definiteness: Definiteness::StrictlyPositive,
        }
    }

    /// Diagonal matrix from real entries; strict when all entries positive.
    pub fn from_real_diagonal(diag: &[T]) -> Result<Self, ConeError> {
        let k = diag.len();
        let mat = CMatrix::from_fn(k, k, |i, j| {
            if i == j {
                Complex::new(diag[i], T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        });
        let flag = if diag.iter().all(|d| *d > T::zero()) {
            Definiteness::StrictlyPositive
        } else {
            Definiteness::Semidefinite
        };
        Self::new(mat, flag)
    }

    pub fn scaled_identity(dim: usize, scale: T) -> Self {
        Self {
            mat: CMatrix::identity(dim, dim) * Complex::new(scale, T::zero()),
            definiteness: if scale > T::zero() {
                Definiteness::StrictlyPositive
            } else {
                Definiteness::Semidefinite
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.mat
    }

    pub fn definiteness(&self) -> Definiteness {
        self.definiteness
    }

    pub fn is_strict(&self) -> bool {
        self.definiteness == Definiteness::StrictlyPositive
    }

    pub fn require_strict(&self) -> Result<(), ConeError> {
        if self.is_strict() {
            Ok(())
        } else {
            Err(ConeError::NotStrict)
        }
    }
}

/// Cholesky of a Hermitian matrix that actually verifies positive pivots.
/// nalgebra's complex Cholesky never fails (complex square roots always
/// exist), so non-PD input shows up as pivots that are not positive reals.
pub(crate) fn pd_cholesky<T: Scalar>(m: &CMatrix<T>) -> Option<Cholesky<Complex<T>, Dyn>> {
    let chol = Cholesky::new(m.clone())?;
    let tol = real::<T>(1e-8);
    for d in chol.l_dirty().diagonal().iter() {
        if !(d.re > T::zero() && d.im.abs() <= tol * d.re) {
            return None;
        }
        if !d.re.is_finite() {
            return None;
        }
    }
    Some(chol)
}

/// `(M + M*)/2`.
pub(crate) fn hermitize<T: Scalar>(m: &CMatrix<T>) -> CMatrix<T> {
    let half = Complex::new(real::<T>(0.5), T::zero());
    (m + m.adjoint()) * half
}

pub(crate) fn max_entry_abs<T: Scalar>(m: &CMatrix<T>) -> T {
    m.iter().map(cabs).fold(T::zero(), T::max)
}

/// Spectral norm of a general complex matrix, via the largest eigenvalue of
/// the Gram matrix of its smaller side.
pub fn spectral_norm<T: Scalar>(a: &CMatrix<T>) -> T {
    if a.nrows() == 0 || a.ncols() == 0 {
        return T::zero();
    }
    let gram = if a.nrows() <= a.ncols() {
        a * a.adjoint()
    } else {
        a.adjoint() * a
    };
    let eig = SymmetricEigen::new(hermitize(&gram));
    let max = eig.eigenvalues.iter().copied().fold(T::zero(), T::max);
    max.max(T::zero()).sqrt()
}

/// log det of a Hermitian PD matrix through Cholesky pivots; `None` when the
/// factorisation fails.
pub(crate) fn chol_log_det<T: Scalar>(m: &CMatrix<T>) -> Option<T> {
    let chol = pd_cholesky(m)?;
    let two = real::<T>(2.0);
    Some(
        chol.l()
            .diagonal()
            .iter()
            .map(|d| two * d.re.ln())
            .fold(T::zero(), |a, b| a + b),
    )
}

/// Geodesic distance `d(X, Y) = sqrt(sum_i log^2 lambda_i)` on the positive
/// definite cone, where the `lambda_i` are the eigenvalues of
/// `X^{1/2} Y^{-1} X^{1/2}`.
///
/// Computed through a Cholesky factor `X = L L*` and the Hermitian matrix
/// `L* Y^{-1} L`, which shares those eigenvalues and avoids the non-normal
/// product `X Y^{-1}`.
pub fn geodesic_distance<T: Scalar>(x: &HpdMatrix<T>, y: &HpdMatrix<T>) -> Result<T, ConeError> {
    x.require_strict()?;
    y.require_strict()?;
    if x.dim() != y.dim() {
        return Err(ConeError::DimensionMismatch(x.dim(), y.dim()));
    }
    let chol_x = pd_cholesky(&x.mat).ok_or(ConeError::NotPositiveDefinite)?;
    let chol_y = pd_cholesky(&y.mat).ok_or(ConeError::NotPositiveDefinite)?;
    let l = chol_x.l();
    let y_inv_l = chol_y.solve(&l);
    let b = hermitize(&(l.adjoint() * y_inv_l));
    let eig = SymmetricEigen::new(b);
    let mut sum = T::zero();
    for lambda in eig.eigenvalues.iter() {
        if *lambda <= T::zero() {
            return Err(ConeError::NotPositiveDefinite);
        }
        let ll = lambda.ln();
        sum += ll * ll;
    }
    Ok(sum.sqrt())
}

/// log det of a strictly positive definite matrix, in nats.
pub fn log_det_hpd<T: Scalar>(x: &HpdMatrix<T>) -> Result<T, ConeError> {
    x.require_strict()?;
    chol_log_det(&x.mat).ok_or(ConeError::NotPositiveDefinite)
}

/// Orthogonal projector `Pi_A = A (A* A)^{-1} A*` on the column space of a
/// full-column-rank matrix. Rank is checked through the pivots of a
/// column-pivoted QR against `1e-10 * ||A||`.
pub fn orthogonal_projector<T: Scalar>(a: &CMatrix<T>) -> Result<CMatrix<T>, ConeError> {
    if a.nrows() < a.ncols() {
        return Err(ConeError::RankDeficient {
            pivot: 0.0,
            threshold: 0.0,
        });
    }
    let threshold = real::<T>(RANK_TOL) * spectral_norm(a);
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let min_pivot = (0..a.ncols())
        .map(|i| cabs(&r[(i, i)]))
        .fold(T::max_value().unwrap(), T::min);
    if min_pivot < threshold {
        return Err(ConeError::RankDeficient {
            pivot: as_f64(min_pivot),
            threshold: as_f64(threshold),
        });
    }
    let gram = hermitize(&(a.adjoint() * a));
    let chol = pd_cholesky(&gram).ok_or(ConeError::NotPositiveDefinite)?;
    let solved = chol.solve(&a.adjoint());
    Ok(hermitize(&(a * solved)))
}

/// The unique PSD square root, by eigen-decomposition. Eigenvalues within
/// `-1e-10 * ||Z||` of zero are clipped to zero; anything lower is rejected.
pub fn hermitian_sqrt<T: Scalar>(z: &HpdMatrix<T>) -> Result<HpdMatrix<T>, ConeError> {
    let eig = SymmetricEigen::new(z.mat.clone());
    let scale = eig
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .fold(T::zero(), T::max);
    let tol = real::<T>(SEMIDEFINITE_TOL) * scale;
    let mut roots = eig.eigenvalues.clone();
    for lambda in roots.iter_mut() {
        if *lambda < -tol {
            return Err(ConeError::NotSemidefinite {
                eigenvalue: as_f64(*lambda),
                tolerance: as_f64(tol),
            });
        }
        *lambda = lambda.max(T::zero()).sqrt();
    }
    let u = &eig.eigenvectors;
    let diag = CMatrix::<T>::from_fn(roots.len(), roots.len(), |i, j| {
        if i == j {
            Complex::new(roots[i], T::zero())
        } else {
            Complex::new(T::zero(), T::zero())
        }
    });
    let root = u * diag * u.adjoint();
    Ok(HpdMatrix::from_hermitized(
        root,
        Definiteness::Semidefinite,
    ))
}

/// Smallest and largest eigenvalues of a Hermitian matrix.
pub fn extreme_eigenvalues<T: Scalar>(s: &HpdMatrix<T>) -> (T, T) {
    let eig: SymmetricEigen<Complex<T>, Dyn> = SymmetricEigen::new(s.matrix().clone());
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap(), T::min);
    let max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(T::min_value().unwrap(), T::max);
    (min, max)
}
