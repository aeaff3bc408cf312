//! The COM-only engineering protocol.
//!
//! Every ion is prepared in `|1> + i p |0>`, both sideband lasers act for a
//! time `t`, and the run is kept only if every ion is found in `|1>`. Per ion
//! and cycle this applies
//!
//! ```text
//! K(p) = [(1 - p) D(beta) + (1 + p) D(-beta)] / (2 sqrt(1 + |p|^2))
//! ```
//!
//! to the COM mode, so after `n` conditioned ion-cycles the mode holds the
//! line superposition `sum_k C^k D[(2k - n) beta] |alpha>`.
//!
//! All displacements of one run are real multiples of the same `beta`, so
//! they commute and compose without any phase. The only phase that survives
//! is the one from `D(gamma)|alpha> = e^{(gamma conj(alpha) - conj(gamma) alpha)/2} |alpha + gamma>`,
//! which [`LineSuperposition`] applies whenever it resolves its components.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{coherent_fock, coherent_overlap, displacement_phase, fidelity_pure, FockVector};

pub const ETA_HARD_LIMIT: f64 = 0.25;
pub const ETA_SOFT_LIMIT: f64 = 0.1;

const DURATION_RTOL: f64 = 1e-12;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Laser and trap parameters in units where the COM frequency is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub eta: f64,
    pub omega: f64,
    pub delta: f64,
    pub n_ions: usize,
}

impl PhysicalParams {
    pub fn new(eta: f64, omega: f64, delta: f64, n_ions: usize) -> Result<Self> {
        let p = Self {
            eta,
            omega,
            delta,
            n_ions,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks the Lamb-Dicke and weak-driving conditions. Hard violations are
    /// errors; marginal values are logged.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta", self.eta),
            ("omega", self.omega),
            ("delta", self.delta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::input(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.n_ions == 0 {
            return Err(Error::input("n_ions must be at least 1"));
        }
        if self.eta > ETA_HARD_LIMIT {
            return Err(Error::input(format!(
                "eta = {} is outside the Lamb-Dicke regime (limit {ETA_HARD_LIMIT})",
                self.eta
            )));
        }
        if self.eta > ETA_SOFT_LIMIT {
            log::warn!(
                "eta = {} is large; first-order Lamb-Dicke expansion is marginal",
                self.eta
            );
        }
        if self.omega >= self.delta {
            return Err(Error::input(format!(
                "Rabi frequency {} must stay below the detuning {}",
                self.omega, self.delta
            )));
        }
        if self.omega > self.delta / 10.0 {
            log::warn!(
                "omega/delta = {:.3}; the carrier term is not well suppressed",
                self.omega / self.delta
            );
        }
        Ok(())
    }
}

/// One laser pulse on all ions followed by a measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    #[serde(rename = "t")]
    pub duration: f64,
    #[serde(rename = "p")]
    pub weights: Vec<Complex64>,
}

/// Serialized flat: physical parameters, `alpha` (default 0) and `cycles`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanRepr", into = "PlanRepr")]
pub struct ProtocolPlan {
    pub params: PhysicalParams,
    pub alpha: Complex64,
    pub cycles: Vec<Cycle>,
}

#[derive(Serialize, Deserialize)]
struct PlanRepr {
    #[serde(flatten)]
    params: PhysicalParams,
    #[serde(default)]
    alpha: Complex64,
    cycles: Vec<Cycle>,
}

impl TryFrom<PlanRepr> for ProtocolPlan {
    type Error = Error;

    fn try_from(r: PlanRepr) -> Result<Self> {
        Self::new(r.params, r.alpha, r.cycles)
    }
}

impl From<ProtocolPlan> for PlanRepr {
    fn from(p: ProtocolPlan) -> Self {
        Self {
            params: p.params,
            alpha: p.alpha,
            cycles: p.cycles,
        }
    }
}

impl ProtocolPlan {
    pub fn new(params: PhysicalParams, alpha: Complex64, cycles: Vec<Cycle>) -> Result<Self> {
        let plan = Self {
            params,
            alpha,
            cycles,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// One cycle per chunk of `n_ions` weights, all with duration `t`.
    pub fn from_weights(
        params: PhysicalParams,
        alpha: Complex64,
        t: f64,
        weights: &[Complex64],
    ) -> Result<Self> {
        let n = params.n_ions;
        if weights.is_empty() || !weights.len().is_multiple_of(n) {
            return Err(Error::input(format!(
                "{} weights cannot be split into cycles of {n} ions",
                weights.len()
            )));
        }
        let cycles = weights
            .chunks(n)
            .map(|w| Cycle {
                duration: t,
                weights: w.to_vec(),
            })
            .collect();
        Self::new(params, alpha, cycles)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !self.alpha.is_finite() {
            return Err(Error::input("alpha must be finite"));
        }
        let first = self
            .cycles
            .first()
            .ok_or_else(|| Error::input("plan has no cycles"))?;
        for (i, cy) in self.cycles.iter().enumerate() {
            if !(cy.duration.is_finite() && cy.duration > 0.0) {
                return Err(Error::input(format!(
                    "cycle {i}: duration must be positive"
                )));
            }
            if (cy.duration - first.duration).abs() > DURATION_RTOL * first.duration {
                return Err(Error::input(format!(
                    "cycle {i}: duration {} differs from {}; a line superposition needs one common beta",
                    cy.duration, first.duration
                )));
            }
            if cy.weights.len() != self.params.n_ions {
                return Err(Error::input(format!(
                    "cycle {i}: {} weights for {} ions",
                    cy.weights.len(),
                    self.params.n_ions
                )));
            }
            if cy.weights.iter().any(|p| !p.is_finite()) {
                return Err(Error::input(format!("cycle {i}: weights must be finite")));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.cycles[0].duration
    }

    /// Weights of all cycles in application order.
    pub fn all_weights(&self) -> Vec<Complex64> {
        self.cycles
            .iter()
            .flat_map(|c| c.weights.iter().copied())
            .collect()
    }
}

/// `sum_k coeffs[k] D[(2k - n) beta] |alpha>`, unnormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSuperposition {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub coeffs: Vec<Complex64>,
}

impl LineSuperposition {
    pub fn new(alpha: Complex64, beta: Complex64, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::input(
                "line superposition needs at least one coefficient",
            ));
        }
        if coeffs.iter().all(|z| z.norm() == 0.0) {
            return Err(Error::input("line superposition coefficients are all zero"));
        }
        if !(alpha.is_finite() && beta.is_finite()) || coeffs.iter().any(|z| !z.is_finite()) {
            return Err(Error::input("line superposition values must be finite"));
        }
        Ok(Self {
            alpha,
            beta,
            coeffs,
        })
    }

    /// Number of conditioned steps `n`; there are `n + 1` components.
    pub fn n(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Displacement `(2k - n) beta` of component `k`.
    pub fn shift(&self, k: usize) -> Complex64 {
        self.beta * (2.0 * k as f64 - self.n() as f64)
    }

    /// Components as `(amplitude, label)` pairs of normalized coherent
    /// states `|label>`, with the `D(gamma)|alpha>` phase folded into the
    /// amplitude.
    pub fn components(&self) -> Vec<(Complex64, Complex64)> {
        (0..self.coeffs.len())
            .map(|k| {
                let g = self.shift(k);
                (
                    self.coeffs[k] * displacement_phase(g, self.alpha),
                    self.alpha + g,
                )
            })
            .collect()
    }

    /// Squared norm from the coherent Gram matrix (no truncation).
    pub fn norm_sqr(&self) -> f64 {
        let comps = self.components();
        let mut acc = c(0.0, 0.0);
        for (aj, gj) in &comps {
            for (ak, gk) in &comps {
                acc += aj.conj() * ak * coherent_overlap(*gj, *gk);
            }
        }
        acc.re.max(0.0)
    }

    /// Squared norm with the cross overlaps between components dropped.
    pub fn norm_sqr_orthogonal(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `<gamma|self>` for a coherent state `|gamma>`.
    pub fn overlap_with_coherent(&self, gamma: Complex64) -> Complex64 {
        self.components()
            .iter()
            .map(|(a, g)| a * coherent_overlap(gamma, *g))
            .sum()
    }

    /// Largest coherent amplitude any component reaches.
    pub fn max_displacement(&self) -> f64 {
        self.alpha.norm() + self.n() as f64 * self.beta.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolResult {
    pub state: LineSuperposition,
    pub p_nominal: f64,
    pub p_exact: f64,
    pub per_cycle_p_exact: Vec<f64>,
}

/// `beta = i eta Omega t e^{i(1 - delta) t}`.
pub fn beta_of(params: &PhysicalParams, t: f64) -> Complex64 {
    c(0.0, params.eta * params.omega * t) * c(0.0, (1.0 - params.delta) * t).exp()
}

/// Coefficients `C^k` of `prod_i [(1 - p_i) z + (1 + p_i)]`, i.e. of
/// `prod_i [(1 - p_i) D(beta) + (1 + p_i) D(-beta)]` in the basis
/// `D[(2k - m) beta]`, built one factor at a time with
/// `C_n^k = (1 + p_n) C_{n-1}^k + (1 - p_n) C_{n-1}^{k-1}`.
pub fn forward_coeffs(weights: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = Vec::with_capacity(weights.len() + 1);
    coeffs.push(c(1.0, 0.0));
    for &p in weights {
        let plus = 1.0 + p;
        let minus = 1.0 - p;
        coeffs.push(c(0.0, 0.0));
        for k in (0..coeffs.len()).rev() {
            let lower = if k > 0 { coeffs[k - 1] } else { c(0.0, 0.0) };
            coeffs[k] = plus * coeffs[k] + minus * lower;
        }
    }
    coeffs
}

/// Probability of the no-fluorescence sequence as it follows from the
/// normalization prefactor alone, `4^{-n} prod 1/(1 + |p_i|^2)`. This
/// ignores the norm of the superposition itself and is therefore only a
/// nominal figure.
pub fn success_probability_nominal(weights: &[Complex64]) -> f64 {
    weights
        .iter()
        .fold(1.0, |acc, p| acc * 0.25 / (1.0 + p.norm_sqr()))
}

fn prefactor(weights: &[Complex64]) -> f64 {
    success_probability_nominal(weights).sqrt()
}

/// Conditional COM state after the given weights, including the
/// `1/(2 sqrt(1 + |p|^2))` factors, so that its squared norm is the joint
/// post-selection probability.
fn conditional_state(
    alpha: Complex64,
    beta: Complex64,
    weights: &[Complex64],
) -> LineSuperposition {
    let scale = prefactor(weights);
    let coeffs = forward_coeffs(weights)
        .into_iter()
        .map(|z| z * scale)
        .collect();
    LineSuperposition {
        alpha,
        beta,
        coeffs,
    }
}

/// True post-selection probability per cycle and overall, from the Gram
/// norms of the conditional states after each cycle.
pub fn success_probability_exact(plan: &ProtocolPlan) -> Result<(f64, Vec<f64>)> {
    plan.validate()?;
    let beta = beta_of(&plan.params, plan.duration());
    let weights = plan.all_weights();
    let n = plan.params.n_ions;
    let mut per_cycle = Vec::with_capacity(plan.cycles.len());
    let mut prev = 1.0;
    for c in 1..=plan.cycles.len() {
        let norm = conditional_state(plan.alpha, beta, &weights[..c * n]).norm_sqr();
        per_cycle.push(if prev > 0.0 {
            (norm / prev).clamp(0.0, 1.0)
        } else {
            0.0
        });
        prev = norm;
    }
    let total = per_cycle.iter().product();
    Ok((total, per_cycle))
}

/// Runs the ideal protocol. Cycles are concatenated in order, so `N` ions
/// for `m` cycles give the same superposition as one ion for `N m` cycles.
pub fn run_ideal(plan: &ProtocolPlan) -> Result<ProtocolResult> {
    plan.validate()?;
    let weights = plan.all_weights();
    let state = LineSuperposition::new(
        plan.alpha,
        beta_of(&plan.params, plan.duration()),
        forward_coeffs(&weights),
    )?;
    let (p_exact, per_cycle_p_exact) = success_probability_exact(plan)?;
    Ok(ProtocolResult {
        state,
        p_nominal: success_probability_nominal(&weights),
        p_exact,
        per_cycle_p_exact,
    })
}

/// Resolves the superposition in the Fock basis.
pub fn to_fock(state: &LineSuperposition, cutoff: usize) -> Result<FockVector> {
    let mut amps = vec![c(0.0, 0.0); cutoff + 1];
    for (a, g) in state.components() {
        let v = coherent_fock(g, cutoff)?;
        for (dst, src) in amps.iter_mut().zip(v.amplitudes()) {
            *dst += a * src;
        }
    }
    let out = FockVector::new(amps)?;
    if out.relative_tail_weight() > 1e-10 {
        log::warn!(
            "cutoff {cutoff} leaves relative tail weight {:.2e}; consider {}",
            out.relative_tail_weight(),
            crate::fock::recommended_cutoff(state.max_displacement())
        );
    }
    Ok(out)
}

/// Fidelity of the normalized superposition with a pure Fock target.
pub fn fidelity_to_target(state: &LineSuperposition, target: &FockVector) -> Result<f64> {
    if target.norm_sqr() == 0.0 {
        return Err(Error::input("target state is zero"));
    }
    fidelity_pure(target, &to_fock(state, target.cutoff())?)
}
