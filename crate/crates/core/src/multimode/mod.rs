//! All `N` axial modes at once.
//!
//! Ion `i` with `sigma_y = +-1` displaces mode `l` by `+-beta_i^l`. Projecting
//! ion `i` onto `|1>` therefore applies
//!
//! ```text
//! [(1 - p_i) prod_l D_l(beta_i^l) + (1 + p_i) prod_l D_l(-beta_i^l)] / (2 sqrt(1 + |p_i|^2))
//! ```
//!
//! to the joint motional state. Expanding the product over ions and cycles
//! gives a weighted sum of product coherent states, which is what
//! [`MultimodeSuperposition`] stores. Norms, reduced COM states and phonon
//! numbers are evaluated from coherent overlaps, without any Fock cutoff.
//!
//! Two forms of the conditional state are built: the exact branch sum
//! ([`run_conditional_exact`]) and the mode-by-mode product
//! ([`run_conditional_factorized`]) that treats each mode as if it saw the
//! ion operators on its own. Their distance is the factorization gap.

mod trotter;

pub use trotter::{trotter_state, trotter_validate, FullTermsEffect, TrotterConfig, TrotterReport};

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::ModeTable;
use crate::error::{Error, Result};
use crate::fock::{coherent_fock, coherent_overlap, displacement_phase};
use crate::protocol::{forward_coeffs, LineSuperposition, PhysicalParams, ProtocolPlan};

/// Labels closer than this (per component) are merged.
pub const LABEL_MERGE_TOL: f64 = 1e-10;
/// Relative coefficient magnitude below which pruning drops a term.
pub const PRUNE_REL_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_TERMS: usize = 1 << 20;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Which closed form is used for the per-cycle displacements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaVariant {
    /// `i eta Omega t sqrt(N/mu_l) b_i^l e^{i(mu_l - delta) t}`.
    Paper,
    /// First-order time integral of the interaction Hamiltonian:
    /// `t e^{i Delta t}` replaced by `(e^{i Delta t} - 1)/(i Delta)`.
    Integrated,
}

impl std::fmt::Display for BetaVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BetaVariant::Paper => "paper",
            BetaVariant::Integrated => "integrated",
        })
    }
}

/// Displacements `beta_i^l` of one cycle, ions by modes.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementPlanEntry {
    pub betas: DMatrix<Complex64>,
}

impl DisplacementPlanEntry {
    pub fn n_ions(&self) -> usize {
        self.betas.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.betas.ncols()
    }

    pub fn get(&self, ion: usize, mode: usize) -> Complex64 {
        self.betas[(ion, mode)]
    }

    /// Same table with every spectator column (`l >= 2`) set to zero.
    pub fn com_only(&self) -> Self {
        let mut betas = self.betas.clone();
        for l in 1..betas.ncols() {
            betas.column_mut(l).fill(c(0.0, 0.0));
        }
        Self { betas }
    }

    /// True if more than one mode has a nonzero displacement.
    pub fn couples_modes(&self) -> bool {
        let active = (0..self.n_modes())
            .filter(|&l| self.betas.column(l).iter().any(|z| z.norm() > 0.0))
            .count();
        active > 1
    }
}

/// `(e^{i d t} - 1)/(i d)`, continuous through `d = 0`.
fn detuning_integral(d: f64, t: f64) -> Complex64 {
    let x = d * t;
    if x.abs() < 1e-6 {
        c(t, 0.0) * (1.0 + c(0.0, x / 2.0) - x * x / 6.0)
    } else {
        (c(0.0, x).exp() - 1.0) / c(0.0, d)
    }
}

pub fn cycle_displacements(
    modes: &ModeTable,
    params: &PhysicalParams,
    t: f64,
    variant: BetaVariant,
) -> Result<DisplacementPlanEntry> {
    let n = params.n_ions;
    if modes.n_modes() != n {
        return Err(Error::input(format!(
            "mode table has {} modes for {n} ions",
            modes.n_modes()
        )));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::input("cycle duration must be positive"));
    }
    let eo = params.eta * params.omega;
    let betas = DMatrix::from_fn(n, n, |i, l| {
        let mu = modes.frequencies[l];
        let amp = eo * (n as f64 / mu).sqrt() * modes.b(i, l);
        let d = mu - params.delta;
        let time_factor = match variant {
            BetaVariant::Paper => c(t, 0.0) * c(0.0, d * t).exp(),
            BetaVariant::Integrated => detuning_integral(d, t),
        };
        c(0.0, amp) * time_factor
    });
    Ok(DisplacementPlanEntry { betas })
}

/// One product coherent state `coeff * |labels[0]> (x) |labels[1]> ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: Complex64,
    pub labels: Vec<Complex64>,
}

/// Weighted sum of product coherent states over all modes, unnormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodeSuperposition {
    pub n_modes: usize,
    pub terms: Vec<Term>,
}

fn label_key(labels: &[Complex64]) -> Vec<(i64, i64)> {
    let q = |v: f64| (v / LABEL_MERGE_TOL).round() as i64;
    labels.iter().map(|z| (q(z.re), q(z.im))).collect()
}

/// Product of per-mode overlaps `prod_l <a_l|b_l>`, optionally skipping one mode.
fn product_overlap(a: &[Complex64], b: &[Complex64], skip: Option<usize>) -> Complex64 {
    let mut acc = c(1.0, 0.0);
    for (l, (x, y)) in a.iter().zip(b).enumerate() {
        if Some(l) != skip {
            acc *= coherent_overlap(*x, *y);
        }
    }
    acc
}

impl MultimodeSuperposition {
    pub fn new(n_modes: usize, terms: Vec<Term>) -> Result<Self> {
        if n_modes == 0 || terms.is_empty() {
            return Err(Error::input(
                "multimode superposition needs modes and terms",
            ));
        }
        for t in &terms {
            if t.labels.len() != n_modes {
                return Err(Error::input("term label count differs from n_modes"));
            }
            if !t.coeff.is_finite() || t.labels.iter().any(|z| !z.is_finite()) {
                return Err(Error::input("multimode terms must be finite"));
            }
        }
        Ok(Self { n_modes, terms })
    }

    /// Sums coefficients of terms whose labels agree within
    /// [`LABEL_MERGE_TOL`]; terms come out sorted by label key.
    pub fn merged(mut self) -> Self {
        let mut map: BTreeMap<Vec<(i64, i64)>, Term> = BTreeMap::new();
        for t in self.terms.drain(..) {
            map.entry(label_key(&t.labels))
                .and_modify(|e| e.coeff += t.coeff)
                .or_insert(t);
        }
        self.terms = map.into_values().collect();
        self
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &MultimodeSuperposition) -> Result<Complex64> {
        if self.n_modes != other.n_modes {
            return Err(Error::input("mode count mismatch"));
        }
        let mut acc = c(0.0, 0.0);
        for a in &self.terms {
            for b in &other.terms {
                acc += a.coeff.conj() * b.coeff * product_overlap(&a.labels, &b.labels, None);
            }
        }
        Ok(acc)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.inner(self).map(|z| z.re.max(0.0)).unwrap_or(0.0)
    }

    pub fn fidelity(&self, other: &MultimodeSuperposition) -> Result<f64> {
        let na = self.norm_sqr();
        let nb = other.norm_sqr();
        if na == 0.0 || nb == 0.0 {
            return Err(Error::input("fidelity of a zero-norm state is undefined"));
        }
        Ok((self.inner(other)?.norm_sqr() / (na * nb)).clamp(0.0, 1.0))
    }

    /// Mean phonon number of every mode in the normalized state.
    pub fn mean_phonons(&self) -> Vec<f64> {
        let norm = self.norm_sqr();
        (0..self.n_modes)
            .map(|l| {
                let mut acc = c(0.0, 0.0);
                for a in &self.terms {
                    for b in &self.terms {
                        acc += a.coeff.conj()
                            * b.coeff
                            * product_overlap(&a.labels, &b.labels, None)
                            * a.labels[l].conj()
                            * b.labels[l];
                    }
                }
                acc.re / norm
            })
            .collect()
    }

    /// Reduced state of mode `mode` as `sum_ab R_ab |g_a><g_b|` over the
    /// distinct labels `g_a` of that mode, normalized to unit trace.
    pub fn reduced(&self, mode: usize) -> Result<ReducedState> {
        if mode >= self.n_modes {
            return Err(Error::input(format!("mode {mode} out of range")));
        }
        let mut index: BTreeMap<(i64, i64), usize> = BTreeMap::new();
        let mut labels = Vec::new();
        let slot: Vec<usize> = self
            .terms
            .iter()
            .map(|t| {
                let key = label_key(&[t.labels[mode]])[0];
                *index.entry(key).or_insert_with(|| {
                    labels.push(t.labels[mode]);
                    labels.len() - 1
                })
            })
            .collect();
        let dim = labels.len();
        let mut r = DMatrix::<Complex64>::zeros(dim, dim);
        for (ti, t) in self.terms.iter().enumerate() {
            for (si, s) in self.terms.iter().enumerate() {
                let w = product_overlap(&s.labels, &t.labels, Some(mode));
                r[(slot[ti], slot[si])] += t.coeff * s.coeff.conj() * w;
            }
        }
        let gram = DMatrix::from_fn(dim, dim, |a, b| coherent_overlap(labels[a], labels[b]));
        let trace: Complex64 = (0..dim)
            .flat_map(|a| (0..dim).map(move |b| (a, b)))
            .map(|(a, b)| r[(a, b)] * gram[(b, a)])
            .sum();
        if trace.re <= 0.0 {
            return Err(Error::numerical("reduced state has non-positive trace"));
        }
        r /= c(trace.re, 0.0);
        Ok(ReducedState {
            labels,
            weights: r,
            gram,
        })
    }

    /// Amplitudes in the product Fock basis, mode 0 most significant.
    pub fn to_fock(&self, cutoff: usize) -> Result<Vec<Complex64>> {
        let dim = cutoff + 1;
        let total = dim
            .checked_pow(self.n_modes as u32)
            .ok_or_else(|| Error::input("Fock space too large"))?;
        let mut out = vec![c(0.0, 0.0); total];
        for t in &self.terms {
            let factors: Vec<Vec<Complex64>> = t
                .labels
                .iter()
                .map(|g| coherent_fock(*g, cutoff).map(|v| v.amplitudes().to_vec()))
                .collect::<Result<_>>()?;
            let mut prod = vec![t.coeff];
            for f in &factors {
                prod = prod
                    .iter()
                    .flat_map(|p| f.iter().map(move |a| p * a))
                    .collect();
            }
            for (o, p) in out.iter_mut().zip(prod) {
                *o += p;
            }
        }
        Ok(out)
    }
}

/// Mixed state `sum_ab weights[(a,b)] |labels[a]><labels[b]|` of one mode.
#[derive(Debug, Clone)]
pub struct ReducedState {
    pub labels: Vec<Complex64>,
    pub weights: DMatrix<Complex64>,
    /// `gram[(a,b)] = <labels[a]|labels[b]>`.
    pub gram: DMatrix<Complex64>,
}

impl ReducedState {
    pub fn purity(&self) -> f64 {
        let rg = &self.weights * &self.gram;
        (&rg * &rg).trace().re
    }

    /// `<psi|rho|psi>/<psi|psi>` for a line superposition `psi`.
    pub fn fidelity_with(&self, psi: &LineSuperposition) -> f64 {
        let proj: Vec<Complex64> = self
            .labels
            .iter()
            .map(|g| psi.overlap_with_coherent(*g))
            .collect();
        let mut acc = c(0.0, 0.0);
        for a in 0..self.labels.len() {
            for b in 0..self.labels.len() {
                acc += self.weights[(a, b)] * proj[a].conj() * proj[b];
            }
        }
        (acc.re / psi.norm_sqr()).clamp(0.0, 1.0)
    }

    pub fn mean_phonon(&self) -> f64 {
        let mut acc = c(0.0, 0.0);
        for a in 0..self.labels.len() {
            for b in 0..self.labels.len() {
                acc += self.weights[(a, b)]
                    * self.gram[(b, a)]
                    * self.labels[b].conj()
                    * self.labels[a];
            }
        }
        acc.re
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionOptions {
    pub max_terms: usize,
    pub prune: bool,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        Self {
            max_terms: DEFAULT_MAX_TERMS,
            prune: false,
        }
    }
}

impl ExpansionOptions {
    /// Default options with the term cap read from `ILE_MAX_TERMS` if set.
    pub fn from_env() -> Result<Self> {
        let mut opts = Self::default();
        if let Ok(v) = std::env::var("ILE_MAX_TERMS") {
            opts.max_terms = v
                .trim()
                .parse()
                .ok()
                .filter(|&k: &usize| k > 0)
                .ok_or_else(|| {
                    Error::input(format!(
                        "ILE_MAX_TERMS must be a positive integer, got {v:?}"
                    ))
                })?;
        }
        Ok(opts)
    }
}

#[derive(Debug, Clone)]
pub struct ConditionalRun {
    pub state: MultimodeSuperposition,
    /// Joint probability that every ion was found in `|1>` in every cycle.
    pub p_exact: f64,
    pub per_cycle_p_exact: Vec<f64>,
    /// Squared coefficient weight removed by pruning (zero without pruning).
    pub pruned_weight: f64,
}

fn check_consistent(plan: &ProtocolPlan, betas: &DisplacementPlanEntry) -> Result<()> {
    plan.validate()?;
    let n = plan.params.n_ions;
    if betas.n_ions() != n || betas.n_modes() != n {
        return Err(Error::input(format!(
            "displacement table is {}x{} for {n} ions",
            betas.n_ions(),
            betas.n_modes()
        )));
    }
    Ok(())
}

fn initial_labels(alpha: Complex64, n_modes: usize) -> Vec<Complex64> {
    let mut v = vec![c(0.0, 0.0); n_modes];
    v[0] = alpha;
    v
}

/// Applies `a D(shift) + b D(-shift)` (componentwise over modes) to each
/// term, tracking the displacement phase on every mode.
fn split_terms(terms: &[Term], shift: &[Complex64], a: Complex64, b: Complex64) -> Vec<Term> {
    let mut out = Vec::with_capacity(2 * terms.len());
    for t in terms {
        for (w, sign) in [(a, 1.0), (b, -1.0)] {
            if w.norm() == 0.0 {
                continue;
            }
            let mut coeff = t.coeff * w;
            let labels = t
                .labels
                .iter()
                .zip(shift)
                .map(|(g, s)| {
                    let d = s * sign;
                    coeff *= displacement_phase(d, *g);
                    g + d
                })
                .collect();
            out.push(Term { coeff, labels });
        }
    }
    out
}

fn prune(terms: &mut Vec<Term>) -> f64 {
    let max = terms.iter().map(|t| t.coeff.norm()).fold(0.0, f64::max);
    let mut dropped = 0.0;
    terms.retain(|t| {
        let keep = t.coeff.norm() >= PRUNE_REL_TOL * max;
        if !keep {
            dropped += t.coeff.norm_sqr();
        }
        keep
    });
    dropped
}

/// Exact conditional state for a given displacement table (the same table
/// for every cycle). Initial state: `|alpha>` on the COM mode, vacuum on
/// the others.
pub fn expand_exact(
    plan: &ProtocolPlan,
    betas: &DisplacementPlanEntry,
    opts: &ExpansionOptions,
) -> Result<ConditionalRun> {
    check_consistent(plan, betas)?;
    let n = plan.params.n_ions;
    let mut state = MultimodeSuperposition {
        n_modes: n,
        terms: vec![Term {
            coeff: c(1.0, 0.0),
            labels: initial_labels(plan.alpha, n),
        }],
    };
    let mut per_cycle = Vec::with_capacity(plan.cycles.len());
    let mut pruned_weight = 0.0;
    let mut prev_norm = 1.0;
    for cycle in &plan.cycles {
        for (i, p) in cycle.weights.iter().enumerate() {
            let f = 0.5 / (1.0 + p.norm_sqr()).sqrt();
            let shift: Vec<Complex64> = betas.betas.row(i).iter().copied().collect();
            let terms = split_terms(&state.terms, &shift, (1.0 - p) * f, (1.0 + p) * f);
            if terms.len() > opts.max_terms {
                return Err(Error::TermCap {
                    count: terms.len(),
                    cap: opts.max_terms,
                });
            }
            state = MultimodeSuperposition { n_modes: n, terms }.merged();
            if opts.prune {
                pruned_weight += prune(&mut state.terms);
            }
        }
        let norm = state.norm_sqr();
        per_cycle.push(if prev_norm > 0.0 {
            (norm / prev_norm).clamp(0.0, 1.0)
        } else {
            0.0
        });
        prev_norm = norm;
    }
    Ok(ConditionalRun {
        p_exact: prev_norm,
        state,
        per_cycle_p_exact: per_cycle,
        pruned_weight,
    })
}

/// Mode-by-mode product form: each mode receives
/// `prod_i [(1 - p_i) D(beta_i^l) + (1 + p_i) D(-beta_i^l)]` on its own.
/// The `1/(2 sqrt(1 + |p|^2))` normalization is carried once, on the COM
/// mode; spectator factors carry `1/2`, so that with zero spectator
/// displacements the result coincides with [`expand_exact`].
pub fn expand_factorized(
    plan: &ProtocolPlan,
    betas: &DisplacementPlanEntry,
    opts: &ExpansionOptions,
) -> Result<MultimodeSuperposition> {
    check_consistent(plan, betas)?;
    let n = plan.params.n_ions;
    let init = initial_labels(plan.alpha, n);
    let mut per_mode: Vec<Vec<Term>> = Vec::with_capacity(n);
    for (l, &start) in init.iter().enumerate() {
        let mut terms = vec![Term {
            coeff: c(1.0, 0.0),
            labels: vec![start],
        }];
        for cycle in &plan.cycles {
            for (i, p) in cycle.weights.iter().enumerate() {
                let f = if l == 0 {
                    0.5 / (1.0 + p.norm_sqr()).sqrt()
                } else {
                    0.5
                };
                terms = split_terms(&terms, &[betas.get(i, l)], (1.0 - p) * f, (1.0 + p) * f);
                terms = MultimodeSuperposition { n_modes: 1, terms }.merged().terms;
            }
        }
        per_mode.push(terms);
    }
    let count = per_mode
        .iter()
        .try_fold(1usize, |acc, t| acc.checked_mul(t.len()));
    match count {
        Some(k) if k <= opts.max_terms => {}
        _ => {
            return Err(Error::TermCap {
                count: count.unwrap_or(usize::MAX),
                cap: opts.max_terms,
            })
        }
    }
    let mut terms = vec![Term {
        coeff: c(1.0, 0.0),
        labels: Vec::with_capacity(n),
    }];
    for mode_terms in &per_mode {
        terms = terms
            .iter()
            .flat_map(|t| {
                mode_terms.iter().map(move |m| {
                    let mut labels = t.labels.clone();
                    labels.push(m.labels[0]);
                    Term {
                        coeff: t.coeff * m.coeff,
                        labels,
                    }
                })
            })
            .collect();
    }
    Ok(MultimodeSuperposition { n_modes: n, terms }.merged())
}

pub fn run_conditional_exact(
    plan: &ProtocolPlan,
    modes: &ModeTable,
    variant: BetaVariant,
    opts: &ExpansionOptions,
) -> Result<ConditionalRun> {
    let betas = cycle_displacements(modes, &plan.params, plan.duration(), variant)?;
    expand_exact(plan, &betas, opts)
}

pub fn run_conditional_factorized(
    plan: &ProtocolPlan,
    modes: &ModeTable,
    variant: BetaVariant,
    opts: &ExpansionOptions,
) -> Result<MultimodeSuperposition> {
    let betas = cycle_displacements(modes, &plan.params, plan.duration(), variant)?;
    expand_factorized(plan, &betas, opts)
}

/// The COM line superposition the plan aims for, using the COM
/// displacement of the given table.
pub fn ideal_line(plan: &ProtocolPlan, betas: &DisplacementPlanEntry) -> Result<LineSuperposition> {
    check_consistent(plan, betas)?;
    LineSuperposition::new(
        plan.alpha,
        betas.get(0, 0),
        forward_coeffs(&plan.all_weights()),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    #[serde(rename = "mean_phonon")]
    pub per_mode_mean_phonon: Vec<f64>,
    #[serde(rename = "com_fidelity")]
    pub com_fidelity_vs_ideal: f64,
    pub com_purity: f64,
    pub factorization_gap: f64,
}

/// Spectator leakage metrics of an exact conditional state.
pub fn leakage_report(
    exact: &MultimodeSuperposition,
    factorized: &MultimodeSuperposition,
    ideal: &LineSuperposition,
) -> Result<LeakageReport> {
    if exact.n_modes != factorized.n_modes {
        return Err(Error::input(
            "exact and factorized states have different mode counts",
        ));
    }
    let com = exact.reduced(0)?;
    Ok(LeakageReport {
        per_mode_mean_phonon: exact.mean_phonons(),
        com_fidelity_vs_ideal: com.fidelity_with(ideal),
        com_purity: com.purity().clamp(0.0, 1.0),
        factorization_gap: (1.0 - exact.fidelity(factorized)?).max(0.0),
    })
}

#[derive(Debug, Clone)]
pub struct LeakageAnalysis {
    pub report: LeakageReport,
    pub p_exact: f64,
    pub betas: DisplacementPlanEntry,
    pub terms: usize,
}

/// Builds the displacement table, both conditional states and the report.
pub fn analyze_leakage(
    plan: &ProtocolPlan,
    modes: &ModeTable,
    variant: BetaVariant,
    opts: &ExpansionOptions,
) -> Result<LeakageAnalysis> {
    let betas = cycle_displacements(modes, &plan.params, plan.duration(), variant)?;
    analyze_with(plan, betas, opts)
}

/// [`analyze_leakage`] for an explicit displacement table.
pub fn analyze_with(
    plan: &ProtocolPlan,
    betas: DisplacementPlanEntry,
    opts: &ExpansionOptions,
) -> Result<LeakageAnalysis> {
    let exact = expand_exact(plan, &betas, opts)?;
    let factorized = expand_factorized(plan, &betas, opts)?;
    let ideal = ideal_line(plan, &betas)?;
    let report = leakage_report(&exact.state, &factorized, &ideal)?;
    Ok(LeakageAnalysis {
        report,
        p_exact: exact.p_exact,
        terms: exact.state.terms.len(),
        betas,
    })
}
