//! Truncated number-basis states of a single oscillator mode.
//!
//! Everything here works in the Fock basis `|0>, |1>, ..., |M>` where `M` is
//! the cutoff. Coherent states and displacement operators are evaluated from
//! their closed forms, so truncation only ever drops amplitude above `M`; it
//! never distorts what is kept. How much was dropped is reported through
//! [`FockVector::tail_weight`].
//!
//! States are carried unnormalized. Norms and fidelities are computed on
//! demand.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of top basis states counted by [`FockVector::tail_weight`].
pub const TAIL_WINDOW: usize = 3;

/// Cutoff that keeps the Poisson tail of a coherent state with amplitude up
/// to `max_displacement` below roughly 1e-10.
pub fn recommended_cutoff(max_displacement: f64) -> usize {
    let g = max_displacement.abs();
    (g * g + 6.0 * g + 10.0).ceil() as usize
}

/// `<g1|g2>` for two coherent states, evaluated analytically.
pub fn coherent_overlap(g1: Complex64, g2: Complex64) -> Complex64 {
    (-0.5 * g1.norm_sqr() - 0.5 * g2.norm_sqr() + g1.conj() * g2).exp()
}

/// Phase picked up by `D(gamma)|alpha> = phase * |alpha + gamma>`.
pub fn displacement_phase(gamma: Complex64, alpha: Complex64) -> Complex64 {
    (0.5 * (gamma * alpha.conj() - gamma.conj() * alpha)).exp()
}

/// Pure state of one mode in a truncated Fock basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct FockVector {
    amplitudes: Vec<Complex64>,
}

impl TryFrom<Vec<Complex64>> for FockVector {
    type Error = Error;

    fn try_from(amplitudes: Vec<Complex64>) -> Result<Self> {
        FockVector::new(amplitudes)
    }
}

impl From<FockVector> for Vec<Complex64> {
    fn from(v: FockVector) -> Self {
        v.amplitudes
    }
}

impl FockVector {
    /// Wraps amplitudes indexed by phonon number. At least two entries
    /// (cutoff >= 1) are required and every value must be finite.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::input(
                "Fock vector needs cutoff >= 1 (at least two amplitudes)",
            ));
        }
        if amplitudes.iter().any(|z| !z.is_finite()) {
            return Err(Error::input("Fock amplitudes must be finite"));
        }
        Ok(Self { amplitudes })
    }

    pub fn vacuum(cutoff: usize) -> Result<Self> {
        Self::number_state(0, cutoff)
    }

    /// The number state `|n>`.
    pub fn number_state(n: usize, cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        if n > cutoff {
            return Err(Error::input(format!(
                "number state {n} lies above cutoff {cutoff}"
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); cutoff + 1];
        amplitudes[n] = Complex64::new(1.0, 0.0);
        Ok(Self { amplitudes })
    }

    pub(crate) fn from_raw(amplitudes: Vec<Complex64>) -> Self {
        debug_assert!(amplitudes.len() >= 2);
        Self { amplitudes }
    }

    pub fn cutoff(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, n: usize) -> Complex64 {
        self.amplitudes[n]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Weight `sum |c_n|^2` over the top [`TAIL_WINDOW`] basis states
    /// (`n >= M - 2`). Large values mean the cutoff is too small.
    pub fn tail_weight(&self) -> f64 {
        let start = self.amplitudes.len().saturating_sub(TAIL_WINDOW);
        self.amplitudes[start..].iter().map(|z| z.norm_sqr()).sum()
    }

    /// Tail weight relative to the total norm; zero for the zero vector.
    pub fn relative_tail_weight(&self) -> f64 {
        let n = self.norm_sqr();
        if n == 0.0 {
            0.0
        } else {
            self.tail_weight() / n
        }
    }

    /// Mean phonon number `<n>` of the normalized state.
    pub fn mean_phonon(&self) -> f64 {
        let n = self.norm_sqr();
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(k, z)| k as f64 * z.norm_sqr())
            .sum::<f64>()
            / n
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_raw(self.amplitudes.iter().map(|z| z * s).collect())
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &FockVector, s: Complex64) -> Result<Self> {
        same_cutoff(self, other)?;
        Ok(Self::from_raw(
            self.amplitudes
                .iter()
                .zip(&other.amplitudes)
                .map(|(a, b)| a + s * b)
                .collect(),
        ))
    }

    pub(crate) fn to_dvector(&self) -> DVector<Complex64> {
        DVector::from_column_slice(&self.amplitudes)
    }
}

fn check_cutoff(cutoff: usize) -> Result<()> {
    if cutoff == 0 {
        Err(Error::input("cutoff must be at least 1"))
    } else {
        Ok(())
    }
}

fn same_cutoff(a: &FockVector, b: &FockVector) -> Result<()> {
    if a.cutoff() != b.cutoff() {
        return Err(Error::input(format!(
            "cutoff mismatch: {} vs {}",
            a.cutoff(),
            b.cutoff()
        )));
    }
    Ok(())
}

/// `e^{-|a|^2/2} a^n / sqrt(n!)` for `n = 0..=cutoff`, built by the ratio
/// recurrence so no factorial is ever formed.
fn coherent_amplitudes(alpha: Complex64, cutoff: usize) -> Vec<Complex64> {
    let mut amps = Vec::with_capacity(cutoff + 1);
    let mut a = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    amps.push(a);
    for n in 1..=cutoff {
        a = a * alpha / (n as f64).sqrt();
        amps.push(a);
    }
    amps
}

/// Coherent state `|alpha>` truncated at `cutoff`.
///
/// When `|alpha|^2 > cutoff/2` the truncation is unreliable; a warning is
/// logged and [`FockVector::tail_weight`] tells how much weight sits at the
/// top of the basis.
pub fn coherent_fock(alpha: Complex64, cutoff: usize) -> Result<FockVector> {
    check_cutoff(cutoff)?;
    if !alpha.is_finite() {
        return Err(Error::input("coherent amplitude must be finite"));
    }
    if alpha.norm_sqr() > cutoff as f64 / 2.0 {
        log::warn!(
            "coherent state |alpha|^2 = {:.3} exceeds cutoff/2 = {:.1}; truncation unreliable",
            alpha.norm_sqr(),
            cutoff as f64 / 2.0
        );
    }
    Ok(FockVector::from_raw(coherent_amplitudes(alpha, cutoff)))
}

/// Matrix of `D(beta) = exp(beta a^dag - conj(beta) a)` on the truncated basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementMatrix {
    beta: Complex64,
    entries: DMatrix<Complex64>,
}

impl DisplacementMatrix {
    pub fn beta(&self) -> Complex64 {
        self.beta
    }

    pub fn cutoff(&self) -> usize {
        self.entries.nrows() - 1
    }

    /// `<m|D(beta)|n>`.
    pub fn entry(&self, m: usize, n: usize) -> Complex64 {
        self.entries[(m, n)]
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn apply(&self, state: &FockVector) -> Result<FockVector> {
        if state.cutoff() != self.cutoff() {
            return Err(Error::input(format!(
                "cutoff mismatch: state {} vs operator {}",
                state.cutoff(),
                self.cutoff()
            )));
        }
        let out = &self.entries * state.to_dvector();
        Ok(FockVector::from_raw(out.iter().copied().collect()))
    }
}

/// Builds `D(beta)` from the associated-Laguerre closed form
///
/// ```text
/// <m|D|n> = sqrt(n!/m!) beta^(m-n) e^{-|beta|^2/2} L_n^(m-n)(|beta|^2),   m >= n
/// <m|D|n> = sqrt(m!/n!) (-conj beta)^(n-m) e^{-|beta|^2/2} L_m^(n-m)(|beta|^2),   m < n
/// ```
///
/// Each diagonal band `k = |m - n|` is filled by one three-term Laguerre
/// recurrence in the lower index, with the factorial prefactor carried as a
/// running ratio. Column 0 is exactly the [`coherent_fock`] vector.
pub fn displacement_matrix(beta: Complex64, cutoff: usize) -> Result<DisplacementMatrix> {
    check_cutoff(cutoff)?;
    if !beta.is_finite() {
        return Err(Error::input("displacement amplitude must be finite"));
    }
    let dim = cutoff + 1;
    let x = beta.norm_sqr();
    let mut entries = DMatrix::<Complex64>::zeros(dim, dim);

    // band_heads[k] = e^{-x/2} beta^k / sqrt(k!), the (k, 0) entry
    let lower_heads = coherent_amplitudes(beta, cutoff);
    let upper_heads = coherent_amplitudes(-beta.conj(), cutoff);

    for k in 0..dim {
        let len = dim - k;
        let kf = k as f64;
        let mut l_prev = 0.0;
        let mut l_cur = 1.0;
        let mut lower = lower_heads[k];
        let mut upper = upper_heads[k];
        for n in 0..len {
            if n > 0 {
                let nf = (n - 1) as f64;
                let l_next = ((2.0 * nf + 1.0 + kf - x) * l_cur - (nf + kf) * l_prev) / (nf + 1.0);
                l_prev = l_cur;
                l_cur = l_next;
                let ratio = (n as f64 / (n as f64 + kf)).sqrt();
                lower *= ratio;
                upper *= ratio;
            }
            entries[(n + k, n)] = lower * l_cur;
            if k > 0 {
                entries[(n, n + k)] = upper * l_cur;
            }
        }
    }
    Ok(DisplacementMatrix { beta, entries })
}

/// `D(beta)|state>` on the state's own cutoff.
pub fn apply_displacement(state: &FockVector, beta: Complex64) -> Result<FockVector> {
    displacement_matrix(beta, state.cutoff())?.apply(state)
}

/// Hermitian inner product `<a|b>`.
pub fn inner(a: &FockVector, b: &FockVector) -> Result<Complex64> {
    same_cutoff(a, b)?;
    Ok(a.amplitudes
        .iter()
        .zip(&b.amplitudes)
        .map(|(x, y)| x.conj() * y)
        .sum())
}

pub fn norm(a: &FockVector) -> f64 {
    a.norm()
}

/// `|<a|b>|^2 / (|a|^2 |b|^2)`; inputs need not be normalized.
pub fn fidelity_pure(a: &FockVector, b: &FockVector) -> Result<f64> {
    let na = a.norm_sqr();
    let nb = b.norm_sqr();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::input("fidelity of a zero-norm state is undefined"));
    }
    let ov = inner(a, b)?;
    Ok((ov.norm_sqr() / (na * nb)).clamp(0.0, 1.0))
}
