//! Ergodic channel generators producing the stationary stream `(F_n, G_n)`.
//!
//! Covered families: scalar and MIMO multipath fading with AR(1) tap
//! dynamics, a Rician line-of-sight overlay, general vector-AR taps, MIMO
//! block-AR taps, and an i.i.d. Gaussian baseline. Every generator is
//! seeded and deterministic; independent replications derive independent
//! substreams from the same seed.

use std::collections::VecDeque;

use nalgebra::Schur;
use num_complex::Complex;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hpd_cone::cabs;
use crate::{real, CMatrix, Scalar};

/// Spectral-radius margin below one required of AR dynamics.
const STABILITY_MARGIN: f64 = 1e-9;
/// Transient decay target that sets the burn-in length of AR models
/// initialised away from stationarity.
const BURN_IN_DECAY: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("AR(1) coefficient must lie in [0, 1): got {0}")]
    InvalidAlpha(f64),
    #[error("AR dynamics unstable: spectral radius {radius} >= {limit}")]
    Unstable { radius: f64, limit: f64 },
    #[error("profile needs {expected} amplitudes for degree {degree}, got {got}")]
    ProfileLength {
        expected: usize,
        got: usize,
        degree: usize,
    },
    #[error("Wyner profile requires degree L >= 1")]
    WynerDegreeZero,
    #[error("Rician overlay requires degree L >= 1")]
    RicianDegreeZero,
    #[error("degree L = 0 has no block mapping; use the scalar channel path")]
    DegreeZero,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
}

// ---------------------------------------------------------------------------
// Seeded RNG with substreams
// ---------------------------------------------------------------------------

/// Seeded ChaCha12 stream with 64-bit substream selection.
///
/// Gaussian variates come from the Box-Muller transform applied to two
/// 53-bit uniforms: with `u1 in (0, 1]` and `u2 in [0, 1)`,
/// `n1 = sqrt(-2 ln u1) cos(2 pi u2)` and `n2 = sqrt(-2 ln u1) sin(2 pi u2)`.
/// The transform is pinned here (rather than delegated to a distribution
/// crate) so that streams are bit-reproducible across releases.
pub struct ChannelRng {
    rng: ChaCha12Rng,
}

impl ChannelRng {
    pub fn new(seed: u64, substream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(substream);
        Self { rng }
    }

    fn uniform_53(&mut self) -> f64 {
        // 53 high bits -> [0, 1)
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Two independent standard normals (Box-Muller).
    pub fn standard_normal_pair(&mut self) -> (f64, f64) {
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform_53();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        (radius * angle.cos(), radius * angle.sin())
    }

    /// One draw of a circular complex Gaussian `CN(0, variance)`.
    pub fn complex_gaussian<T: Scalar>(&mut self, variance: T) -> Complex<T> {
        let (n1, n2) = self.standard_normal_pair();
        let s = (variance * real::<T>(0.5)).sqrt();
        Complex::new(s * real::<T>(n1), s * real::<T>(n2))
    }

    /// Matrix with i.i.d. `CN(0, variance)` entries, filled column-major.
    pub fn complex_gaussian_matrix<T: Scalar>(
        &mut self,
        rows: usize,
        cols: usize,
        variance: T,
    ) -> CMatrix<T> {
        CMatrix::from_fn(rows, cols, |_, _| self.complex_gaussian(variance))
    }
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// One block pair `(F_n, G_n)` of N x K complex matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPair<T: Scalar> {
    pub f: CMatrix<T>,
    pub g: CMatrix<T>,
}

impl<T: Scalar> ChannelPair<T> {
    pub fn new(f: CMatrix<T>, g: CMatrix<T>) -> Result<Self, ModelError> {
        if f.shape() != g.shape() {
            return Err(ModelError::Dimension(format!(
                "F is {}x{} but G is {}x{}",
                f.nrows(),
                f.ncols(),
                g.nrows(),
                g.ncols()
            )));
        }
        if !f
            .iter()
            .chain(g.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
        {
            return Err(ModelError::Dimension("non-finite entries".into()));
        }
        Ok(Self { f, g })
    }

    /// Output rows N and input columns K.
    pub fn dims(&self) -> (usize, usize) {
        (self.f.nrows(), self.f.ncols())
    }
}

/// Channel tap array `C_n = [c_{n,0}, ..., c_{n,L}]` of R x T blocks, plus
/// the history needed by order-M AR dynamics.
#[derive(Debug, Clone)]
pub struct TapState<T: Scalar> {
    degree: usize,
    rx: usize,
    tx: usize,
    taps: Vec<CMatrix<T>>,
    history: VecDeque<Vec<CMatrix<T>>>,
}

impl<T: Scalar> TapState<T> {
    /// All taps zero, empty history.
    pub fn zeros(degree: usize, rx: usize, tx: usize) -> Self {
        Self {
            degree,
            rx,
            tx,
            taps: (0..=degree).map(|_| CMatrix::zeros(rx, tx)).collect(),
            history: VecDeque::new(),
        }
    }

    /// Draw directly from the AR(1) stationary law: entries of tap `l` are
    /// i.i.d. `CN(0, a_l^2 / T)`.
    pub fn stationary_ar1(
        degree: usize,
        rx: usize,
        tx: usize,
        profile: &[T],
        rng: &mut ChannelRng,
    ) -> Result<Self, ModelError> {
        check_profile_len(profile, degree)?;
        let tx_scale = real::<T>(tx as f64);
        let taps = profile
            .iter()
            .map(|a| rng.complex_gaussian_matrix(rx, tx, *a * *a / tx_scale))
            .collect();
        Ok(Self {
            degree,
            rx,
            tx,
            taps,
            history: VecDeque::new(),
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn antenna_dims(&self) -> (usize, usize) {
        (self.rx, self.tx)
    }

    pub fn taps(&self) -> &[CMatrix<T>] {
        &self.taps
    }

    pub fn tap(&self, delay: usize) -> &CMatrix<T> {
        &self.taps[delay]
    }

    fn push_history(&mut self, depth: usize) {
        if depth == 0 {
            return;
        }
        self.history.push_front(self.taps.clone());
        while self.history.len() > depth {
            self.history.pop_back();
        }
    }
}

fn check_profile_len<T: Scalar>(profile: &[T], degree: usize) -> Result<(), ModelError> {
    if profile.len() != degree + 1 {
        return Err(ModelError::ProfileLength {
            expected: degree + 1,
            got: profile.len(),
            degree,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Power delay profiles
// ---------------------------------------------------------------------------

fn normalize<T: Scalar>(mut a: Vec<T>) -> Vec<T> {
    let norm = a
        .iter()
        .map(|x| *x * *x)
        .fold(T::zero(), |acc, x| acc + x)
        .sqrt();
    for x in a.iter_mut() {
        *x /= norm;
    }
    a
}

/// Unit-norm amplitude profile `a_l proportional to exp(-decay * l)`.
pub fn exponential_profile<T: Scalar>(degree: usize, decay: T) -> Vec<T> {
    normalize(
        (0..=degree)
            .map(|l| (-decay * real::<T>(l as f64)).exp())
            .collect(),
    )
}

/// Unit-norm Wyner cell profile: `a_l^2 proportional to
/// 1 / (10 + |10 (l - L/2) / L|^3)`.
pub fn wyner_profile<T: Scalar>(degree: usize) -> Result<Vec<T>, ModelError> {
    if degree == 0 {
        return Err(ModelError::WynerDegreeZero);
    }
    let ten = real::<T>(10.0);
    let ld = real::<T>(degree as f64);
    let half = ld / real::<T>(2.0);
    Ok(normalize(
        (0..=degree)
            .map(|l| {
                let x = (ten * (real::<T>(l as f64) - half) / ld).abs();
                (T::one() / (ten + x * x * x)).sqrt()
            })
            .collect(),
    ))
}

/// Unit-norm flat profile.
pub fn flat_profile<T: Scalar>(degree: usize) -> Vec<T> {
    normalize(vec![T::one(); degree + 1])
}

// ---------------------------------------------------------------------------
// Tap dynamics
// ---------------------------------------------------------------------------

/// One AR(1) tap update: `c_{n,l} = alpha c_{n-1,l} + sqrt(1 - alpha^2) a_l u_{n,l}`
/// with innovation entries i.i.d. `CN(0, 1/T)`.
pub fn ar1_step<T: Scalar>(
    state: &mut TapState<T>,
    alpha: T,
    profile: &[T],
    rng: &mut ChannelRng,
) -> Result<(), ModelError> {
    if alpha < T::zero() || alpha >= T::one() {
        return Err(ModelError::InvalidAlpha(crate::as_f64(alpha)));
    }
    check_profile_len(profile, state.degree)?;
    let noise_scale = (T::one() - alpha * alpha).sqrt();
    let inv_t = T::one() / real::<T>(state.tx as f64);
    let alpha_c = Complex::new(alpha, T::zero());
    for (tap, a) in state.taps.iter_mut().zip(profile.iter()) {
        let u = rng.complex_gaussian_matrix::<T>(state.rx, state.tx, inv_t);
        let gain = Complex::new(noise_scale * *a, T::zero());
        *tap = &*tap * alpha_c + u * gain;
    }
    Ok(())
}

/// Spectral radius of a complex matrix, via its Schur form.
fn spectral_radius<T: Scalar>(m: &CMatrix<T>) -> f64 {
    let eig = Schur::new(m.clone())
        .eigenvalues()
        .expect("complex Schur always yields eigenvalues");
    eig.iter()
        .map(|z| crate::as_f64(cabs(z)))
        .fold(0.0, f64::max)
}

fn burn_in_length(radius: f64) -> usize {
    if radius <= 0.0 {
        return 1;
    }
    (BURN_IN_DECAY.ln() / radius.ln()).ceil() as usize
}

/// General order-M vector AR tap model
/// `C_n = sum_{l=1..M} A_l C_{n-l} + U_n` on the stacked tap vector,
/// single-antenna (R = T = 1). Stability is checked once at construction
/// through the companion-matrix spectral radius.
#[derive(Debug)]
pub struct GeneralArModel<T: Scalar> {
    a_mats: Vec<CMatrix<T>>,
    innovation_variance: T,
    radius: f64,
}

impl<T: Scalar> GeneralArModel<T> {
    pub fn new(a_mats: Vec<CMatrix<T>>, innovation_variance: T) -> Result<Self, ModelError> {
        if a_mats.is_empty() {
            return Err(ModelError::Config("general AR needs at least A_1".into()));
        }
        let p = a_mats[0].nrows();
        for a in &a_mats {
            if a.nrows() != p || a.ncols() != p {
                return Err(ModelError::Dimension(format!(
                    "AR matrices must all be {p}x{p}"
                )));
            }
        }
        let order = a_mats.len();
        let mut companion = CMatrix::<T>::zeros(order * p, order * p);
        for (l, a) in a_mats.iter().enumerate() {
            companion.view_mut((0, l * p), (p, p)).copy_from(a);
        }
        for l in 1..order {
            companion
                .view_mut((l * p, (l - 1) * p), (p, p))
                .copy_from(&CMatrix::identity(p, p));
        }
        let radius = spectral_radius(&companion);
        let limit = 1.0 - STABILITY_MARGIN;
        if radius >= limit {
            return Err(ModelError::Unstable { radius, limit });
        }
        Ok(Self {
            a_mats,
            innovation_variance,
            radius,
        })
    }

    pub fn order(&self) -> usize {
        self.a_mats.len()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.radius
    }

    /// Burn-in steps after which the transient of a zero start has decayed
    /// below `1e-8`.
    pub fn burn_in(&self) -> usize {
        burn_in_length(self.radius)
    }

    pub fn step(&self, state: &mut TapState<T>, rng: &mut ChannelRng) -> Result<(), ModelError> {
        if state.rx != 1 || state.tx != 1 {
            return Err(ModelError::Dimension(
                "general AR taps are single-antenna (R = T = 1)".into(),
            ));
        }
        let p = state.degree + 1;
        if self.a_mats[0].nrows() != p {
            return Err(ModelError::Dimension(format!(
                "AR matrices are {}x{} but the tap vector has length {p}",
                self.a_mats[0].nrows(),
                self.a_mats[0].ncols()
            )));
        }
        let order = self.order();
        let as_vector = |taps: &[CMatrix<T>]| {
            nalgebra::DVector::from_iterator(p, taps.iter().map(|m| m[(0, 0)]))
        };
        let mut next = nalgebra::DVector::from_fn(p, |_, _| {
            rng.complex_gaussian::<T>(self.innovation_variance)
        });
        // A_1 acts on C_{n-1} (the current taps); A_l for l >= 2 acts on
        // C_{n-l}, which sits at history index l - 2 (front = C_{n-2}).
        next += &self.a_mats[0] * as_vector(&state.taps);
        for (idx, a) in self.a_mats.iter().enumerate().skip(1) {
            if let Some(past) = state.history.get(idx - 1) {
                next += a * as_vector(past);
            }
        }
        state.push_history(order.saturating_sub(1));
        for (l, tap) in state.taps.iter_mut().enumerate() {
            tap[(0, 0)] = next[l];
        }
        Ok(())
    }
}

/// MIMO block-AR tap model: per delay,
/// `c_{n,l} = H_l c_{n-1,l} + u_{n,l}` with i.i.d. complex Gaussian
/// innovations. Each `H_l` must have spectrum inside the open unit disk.
pub struct MimoBlockArModel<T: Scalar> {
    h_mats: Vec<CMatrix<T>>,
    innovation_variance: T,
    radius: f64,
}

impl<T: Scalar> MimoBlockArModel<T> {
    pub fn new(h_mats: Vec<CMatrix<T>>, innovation_variance: T) -> Result<Self, ModelError> {
        if h_mats.is_empty() {
            return Err(ModelError::Config("block AR needs H_0..H_L".into()));
        }
        let r = h_mats[0].nrows();
        let mut radius: f64 = 0.0;
        for h in &h_mats {
            if h.nrows() != r || h.ncols() != r {
                return Err(ModelError::Dimension(format!("H_l must all be {r}x{r}")));
            }
            radius = radius.max(spectral_radius(h));
        }
        let limit = 1.0 - STABILITY_MARGIN;
        if radius >= limit {
            return Err(ModelError::Unstable { radius, limit });
        }
        Ok(Self {
            h_mats,
            innovation_variance,
            radius,
        })
    }

    pub fn burn_in(&self) -> usize {
        burn_in_length(self.radius)
    }

    pub fn step(&self, state: &mut TapState<T>, rng: &mut ChannelRng) -> Result<(), ModelError> {
        if self.h_mats.len() != state.degree + 1 {
            return Err(ModelError::Dimension(format!(
                "need {} matrices H_0..H_L, got {}",
                state.degree + 1,
                self.h_mats.len()
            )));
        }
        if self.h_mats[0].ncols() != state.rx {
            return Err(ModelError::Dimension(format!(
                "H_l is {}x{} but taps have {} receive rows",
                self.h_mats[0].nrows(),
                self.h_mats[0].ncols(),
                state.rx
            )));
        }
        for (tap, h) in state.taps.iter_mut().zip(self.h_mats.iter()) {
            let u =
                rng.complex_gaussian_matrix::<T>(state.rx, state.tx, self.innovation_variance);
            *tap = h * &*tap + u;
        }
        Ok(())
    }
}

/// Rician overlay on one tap:
/// `sqrt(K_R/(K_R+1)) d_l + sqrt(1/(K_R+1)) c`, where the deterministic
/// line-of-sight matrix has entries
/// `d_l(r, t) = a_l exp(2 i pi (r - t) sin(pi l / L))`.
pub fn rician_overlay<T: Scalar>(
    c: &CMatrix<T>,
    rice_factor: T,
    amplitude: T,
    delay: usize,
    degree: usize,
) -> Result<CMatrix<T>, ModelError> {
    if rice_factor < T::zero() {
        return Err(ModelError::Config("Rice factor must be nonnegative".into()));
    }
    if rice_factor == T::zero() {
        return Ok(c.clone());
    }
    if degree == 0 {
        return Err(ModelError::RicianDegreeZero);
    }
    if delay > degree {
        return Err(ModelError::Dimension(format!(
            "delay {delay} exceeds degree {degree}"
        )));
    }
    let denom = rice_factor + T::one();
    let los_gain = (rice_factor / denom).sqrt();
    let diffuse_gain = (T::one() / denom).sqrt();
    let two_pi = real::<T>(2.0 * std::f64::consts::PI);
    let sin_term = (real::<T>(std::f64::consts::PI) * real::<T>(delay as f64)
        / real::<T>(degree as f64))
    .sin();
    let los = CMatrix::<T>::from_fn(c.nrows(), c.ncols(), |r, t| {
        let phase = two_pi * (real::<T>(r as f64) - real::<T>(t as f64)) * sin_term;
        Complex::new(amplitude * phase.cos(), amplitude * phase.sin())
    });
    let los_c = Complex::new(los_gain, T::zero());
    let diffuse_c = Complex::new(diffuse_gain, T::zero());
    Ok(los * los_c + c * diffuse_c)
}

/// Fresh i.i.d. `CN(0, variance)` pair.
pub fn iid_gaussian_pair<T: Scalar>(
    n: usize,
    k: usize,
    variance: T,
    rng: &mut ChannelRng,
) -> ChannelPair<T> {
    let f = rng.complex_gaussian_matrix(n, k, variance);
    let g = rng.complex_gaussian_matrix(n, k, variance);
    ChannelPair { f, g }
}

// ---------------------------------------------------------------------------
// Block mapping
// ---------------------------------------------------------------------------

/// Maps `L` consecutive tap arrays (symbol times `nL .. nL+L-1`) to the
/// block pair `(F_n, G_n)` of size `RL x TL`: `F` is block upper triangular
/// carrying delays `L..1`, `G` block lower triangular carrying delays
/// `L-1..0`.
pub fn taps_to_blocks<T: Scalar>(
    window: &[Vec<CMatrix<T>>],
    degree: usize,
    rx: usize,
    tx: usize,
) -> Result<ChannelPair<T>, ModelError> {
    if degree == 0 {
        return Err(ModelError::DegreeZero);
    }
    if window.len() != degree {
        return Err(ModelError::Dimension(format!(
            "window must hold {degree} tap arrays, got {}",
            window.len()
        )));
    }
    for taps in window {
        if taps.len() != degree + 1 {
            return Err(ModelError::Dimension(format!(
                "each tap array needs {} delay slots, got {}",
                degree + 1,
                taps.len()
            )));
        }
        for tap in taps {
            if tap.nrows() != rx || tap.ncols() != tx {
                return Err(ModelError::Dimension(format!(
                    "tap block is {}x{}, expected {rx}x{tx}",
                    tap.nrows(),
                    tap.ncols()
                )));
            }
        }
    }
    let mut f = CMatrix::<T>::zeros(rx * degree, tx * degree);
    let mut g = CMatrix::<T>::zeros(rx * degree, tx * degree);
    for i in 0..degree {
        for j in i..degree {
            // F row i, col j holds delay L - (j - i), from L down to 1
            f.view_mut((i * rx, j * tx), (rx, tx))
                .copy_from(&window[i][degree - (j - i)]);
        }
        for j in 0..=i {
            // G row i, col j holds delay i - j, from i down to 0
            g.view_mut((i * rx, j * tx), (rx, tx))
                .copy_from(&window[i][i - j]);
        }
    }
    ChannelPair::new(f, g)
}

// ---------------------------------------------------------------------------
// Declarative configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    IidGaussian,
    Ar1Multipath,
    GeneralAr,
    MimoBlockAr,
    RicianAr1,
}

/// Power delay profile selector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ProfileConfig {
    #[default]
    Flat,
    Exponential { decay: f64 },
    Wyner,
    Explicit { amplitudes: Vec<f64> },
}

/// Row-major complex matrix literal, entries as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixSpec {
    pub fn to_matrix<T: Scalar>(&self) -> Result<CMatrix<T>, ModelError> {
        if self.entries.len() != self.rows * self.cols {
            return Err(ModelError::Dimension(format!(
                "matrix literal declares {}x{} but has {} entries",
                self.rows,
                self.cols,
                self.entries.len()
            )));
        }
        Ok(CMatrix::from_fn(self.rows, self.cols, |i, j| {
            let [re, im] = self.entries[i * self.cols + j];
            Complex::new(real::<T>(re), real::<T>(im))
        }))
    }
}

fn default_antennas() -> usize {
    1
}

/// Declarative description of a channel model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    /// Channel degree L (number of delayed paths).
    #[serde(default)]
    pub l: usize,
    /// Receive antennas R.
    #[serde(default = "default_antennas")]
    pub r: usize,
    /// Transmit antennas T.
    #[serde(default = "default_antennas")]
    pub t: usize,
    /// Doppler frequency; the AR(1) coefficient is `alpha = exp(-f_d)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_d: Option<f64>,
    /// Explicit AR(1) coefficient in [0, 1); overrides `f_d` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub profile: ProfileConfig,
    /// Rice factor K_R >= 0 (rician-ar1 only).
    #[serde(default)]
    pub rice_factor: f64,
    /// `A_1..A_M` for general-ar, `H_0..H_L` for mimo-block-ar.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar_matrices: Option<Vec<MatrixSpec>>,
    /// Innovation entry variance for general-ar / mimo-block-ar; default 1/T.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub innovation_variance: Option<f64>,
    /// Block rows N (iid-gaussian only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Block cols K (iid-gaussian only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Entry variance (iid-gaussian only); default 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    pub fn iid_gaussian(n: usize, k: usize, variance: f64, seed: u64) -> Self {
        Self {
            variant: ModelVariant::IidGaussian,
            l: 0,
            r: 1,
            t: 1,
            f_d: None,
            alpha: None,
            profile: ProfileConfig::Flat,
            rice_factor: 0.0,
            ar_matrices: None,
            innovation_variance: None,
            n: Some(n),
            k: Some(k),
            variance: Some(variance),
            seed,
        }
    }

    pub fn ar1_multipath(
        l: usize,
        r: usize,
        t: usize,
        f_d: f64,
        profile: ProfileConfig,
        seed: u64,
    ) -> Self {
        Self {
            variant: ModelVariant::Ar1Multipath,
            l,
            r,
            t,
            f_d: Some(f_d),
            alpha: None,
            profile,
            rice_factor: 0.0,
            ar_matrices: None,
            innovation_variance: None,
            n: None,
            k: None,
            variance: None,
            seed,
        }
    }

    /// The AR(1) coefficient: explicit `alpha`, else `exp(-f_d)`.
    pub fn ar1_coefficient(&self) -> Result<f64, ModelError> {
        let alpha = match (self.alpha, self.f_d) {
            (Some(a), _) => a,
            (None, Some(fd)) if fd > 0.0 => (-fd).exp(),
            _ => {
                return Err(ModelError::Config(
                    "AR(1) model needs `alpha` in [0,1) or `f_d` > 0".into(),
                ))
            }
        };
        if !(0.0..1.0).contains(&alpha) {
            return Err(ModelError::InvalidAlpha(alpha));
        }
        Ok(alpha)
    }

    pub fn amplitude_profile<T: Scalar>(&self) -> Result<Vec<T>, ModelError> {
        let a = match &self.profile {
            ProfileConfig::Flat => flat_profile(self.l),
            ProfileConfig::Exponential { decay } => {
                if *decay < 0.0 {
                    return Err(ModelError::Config("decay must be >= 0".into()));
                }
                exponential_profile(self.l, real::<T>(*decay))
            }
            ProfileConfig::Wyner => wyner_profile(self.l)?,
            ProfileConfig::Explicit { amplitudes } => {
                check_profile_len(amplitudes, self.l)?;
                normalize(amplitudes.iter().map(|x| real::<T>(*x)).collect())
            }
        };
        Ok(a)
    }

    /// Block dimensions (N, K) of the generated pairs.
    pub fn block_dims(&self) -> Result<(usize, usize), ModelError> {
        match self.variant {
            ModelVariant::IidGaussian => {
                let n = self.n.ok_or_else(|| {
                    ModelError::Config("iid-gaussian requires `n`".into())
                })?;
                let k = self
                    .k
                    .ok_or_else(|| ModelError::Config("iid-gaussian requires `k`".into()))?;
                Ok((n, k))
            }
            _ => {
                if self.l == 0 {
                    Ok((self.r, self.t))
                } else {
                    Ok((self.r * self.l, self.t * self.l))
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

enum GeneratorKind<T: Scalar> {
    Iid {
        n: usize,
        k: usize,
        variance: T,
    },
    Multipath {
        state: TapState<T>,
        alpha: T,
        profile: Vec<T>,
        rice_factor: T,
    },
    GeneralAr {
        model: GeneralArModel<T>,
        state: TapState<T>,
    },
    MimoBlockAr {
        model: MimoBlockArModel<T>,
        state: TapState<T>,
    },
}

/// Stateful ergodic generator of `(F_n, G_n)` pairs.
///
/// Single-owner mutable state; replications run independent instances with
/// distinct substreams of the same seed.
pub struct ChannelGenerator<T: Scalar> {
    degree: usize,
    rx: usize,
    tx: usize,
    rng: ChannelRng,
    kind: GeneratorKind<T>,
}

impl<T: Scalar> ChannelGenerator<T> {
    pub fn from_config(config: &ModelConfig, substream: u64) -> Result<Self, ModelError> {
        let mut rng = ChannelRng::new(config.seed, substream);
        if config.rice_factor != 0.0 && config.variant != ModelVariant::RicianAr1 {
            return Err(ModelError::Config(
                "rice_factor is only supported by the rician-ar1 variant".into(),
            ));
        }
        if config.rice_factor < 0.0 {
            return Err(ModelError::Config("Rice factor must be >= 0".into()));
        }
        let kind = match config.variant {
            ModelVariant::IidGaussian => {
                let (n, k) = config.block_dims()?;
                GeneratorKind::Iid {
                    n,
                    k,
                    variance: real::<T>(config.variance.unwrap_or(1.0)),
                }
            }
            ModelVariant::Ar1Multipath | ModelVariant::RicianAr1 => {
                if config.variant == ModelVariant::RicianAr1 && config.l == 0 {
                    return Err(ModelError::RicianDegreeZero);
                }
                let alpha = real::<T>(config.ar1_coefficient()?);
                let profile = config.amplitude_profile::<T>()?;
                let state =
                    TapState::stationary_ar1(config.l, config.r, config.t, &profile, &mut rng)?;
                GeneratorKind::Multipath {
                    state,
                    alpha,
                    profile,
                    rice_factor: real::<T>(config.rice_factor),
                }
            }
            ModelVariant::GeneralAr => {
                if config.r != 1 || config.t != 1 {
                    return Err(ModelError::Config(
                        "general-ar is single-antenna (R = T = 1)".into(),
                    ));
                }
                let specs = config.ar_matrices.as_ref().ok_or_else(|| {
                    ModelError::Config("general-ar requires `ar_matrices` A_1..A_M".into())
                })?;
                let mats = specs
                    .iter()
                    .map(|s| s.to_matrix::<T>())
                    .collect::<Result<Vec<_>, _>>()?;
                let variance = real::<T>(
                    config
                        .innovation_variance
                        .unwrap_or(1.0 / config.t as f64),
                );
                let model = GeneralArModel::new(mats, variance)?;
                let mut state = TapState::zeros(config.l, 1, 1);
                for _ in 0..model.burn_in() {
                    model.step(&mut state, &mut rng)?;
                }
                GeneratorKind::GeneralAr { model, state }
            }
            ModelVariant::MimoBlockAr => {
                let specs = config.ar_matrices.as_ref().ok_or_else(|| {
                    ModelError::Config("mimo-block-ar requires `ar_matrices` H_0..H_L".into())
                })?;
                let mats = specs
                    .iter()
                    .map(|s| s.to_matrix::<T>())
                    .collect::<Result<Vec<_>, _>>()?;
                let variance = real::<T>(
                    config
                        .innovation_variance
                        .unwrap_or(1.0 / config.t as f64),
                );
                let model = MimoBlockArModel::new(mats, variance)?;
                let mut state = TapState::zeros(config.l, config.r, config.t);
                for _ in 0..model.burn_in() {
                    model.step(&mut state, &mut rng)?;
                }
                GeneratorKind::MimoBlockAr { model, state }
            }
        };
        Ok(Self {
            degree: config.l,
            rx: config.r,
            tx: config.t,
            rng,
            kind,
        })
    }

    /// Block dimensions (N, K).
    pub fn dims(&self) -> (usize, usize) {
        match &self.kind {
            GeneratorKind::Iid { n, k, .. } => (*n, *k),
            _ => {
                if self.degree == 0 {
                    (self.rx, self.tx)
                } else {
                    (self.rx * self.degree, self.tx * self.degree)
                }
            }
        }
    }

    fn overlay_taps(
        taps: &[CMatrix<T>],
        rice_factor: T,
        profile: &[T],
        degree: usize,
    ) -> Result<Vec<CMatrix<T>>, ModelError> {
        if rice_factor == T::zero() {
            return Ok(taps.to_vec());
        }
        taps.iter()
            .enumerate()
            .map(|(delay, tap)| rician_overlay(tap, rice_factor, profile[delay], delay, degree))
            .collect()
    }

    pub fn next_pair(&mut self) -> Result<ChannelPair<T>, ModelError> {
        let degree = self.degree;
        match &mut self.kind {
            GeneratorKind::Iid { n, k, variance } => {
                Ok(iid_gaussian_pair(*n, *k, *variance, &mut self.rng))
            }
            GeneratorKind::Multipath {
                state,
                alpha,
                profile,
                rice_factor,
            } => {
                if degree == 0 {
                    ar1_step(state, *alpha, profile, &mut self.rng)?;
                    let g = state.tap(0).clone();
                    let f = CMatrix::zeros(g.nrows(), g.ncols());
                    ChannelPair::new(f, g)
                } else {
                    let mut window = Vec::with_capacity(degree);
                    for _ in 0..degree {
                        ar1_step(state, *alpha, profile, &mut self.rng)?;
                        window.push(Self::overlay_taps(
                            state.taps(),
                            *rice_factor,
                            profile,
                            degree,
                        )?);
                    }
                    taps_to_blocks(&window, degree, state.rx, state.tx)
                }
            }
            GeneratorKind::GeneralAr { model, state } => {
                if degree == 0 {
                    model.step(state, &mut self.rng)?;
                    let g = state.tap(0).clone();
                    let f = CMatrix::zeros(g.nrows(), g.ncols());
                    ChannelPair::new(f, g)
                } else {
                    let mut window = Vec::with_capacity(degree);
                    for _ in 0..degree {
                        model.step(state, &mut self.rng)?;
                        window.push(state.taps().to_vec());
                    }
                    taps_to_blocks(&window, degree, 1, 1)
                }
            }
            GeneratorKind::MimoBlockAr { model, state } => {
                if degree == 0 {
                    model.step(state, &mut self.rng)?;
                    let g = state.tap(0).clone();
                    let f = CMatrix::zeros(g.nrows(), g.ncols());
                    ChannelPair::new(f, g)
                } else {
                    let mut window = Vec::with_capacity(degree);
                    for _ in 0..degree {
                        model.step(state, &mut self.rng)?;
                        window.push(state.taps().to_vec());
                    }
                    taps_to_blocks(&window, degree, state.rx, state.tx)
                }
            }
        }
    }
}

impl<T: Scalar> Iterator for ChannelGenerator<T> {
    type Item = ChannelPair<T>;

    fn next(&mut self) -> Option<Self::Item> {
        // generation failures past construction indicate a programming error
        Some(self.next_pair().expect("channel generation failed"))
    }
}

// ---------------------------------------------------------------------------
