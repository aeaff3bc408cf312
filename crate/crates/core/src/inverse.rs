//! Planner: from target line coefficients back to internal-state weights.
//!
//! The last weight is read off a root `x` of `sum_k C^{n-k} x^k` through
//! `p = (1 + x)/(1 - x)`; the factor `(1 + p) + (1 - p) z` is then divided
//! out of the coefficient polynomial and the procedure repeats on the
//! shorter sequence. Every distinct root opens a branch. All branches end on
//! permutations of the same weight multiset, but the order matters for
//! reproducibility, so branches are tracked by the index of the root picked
//! at each step.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{coherent_fock, coherent_overlap, displacement_phase, inner, FockVector};
use crate::poly;
use crate::protocol::{forward_coeffs, success_probability_nominal};

/// Coefficients below this fraction of the largest one count as zero when
/// stripping forced `p = -1`/`p = +1` factors.
pub const ZERO_COEFF_TOL: f64 = 1e-13;
/// Roots closer than this are one branch.
pub const ROOT_DEDUP_TOL: f64 = 1e-9;
/// Gram eigenvalues below this fraction of the largest are discarded.
pub const GRAM_EIGEN_FLOOR: f64 = 1e-12;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Target coefficients `C^0..C^n`, defined up to a global factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TargetRepr", into = "TargetRepr")]
pub struct TargetCoefficients {
    coeffs: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct TargetRepr {
    coeffs: Vec<Complex64>,
}

impl TryFrom<TargetRepr> for TargetCoefficients {
    type Error = Error;
    fn try_from(r: TargetRepr) -> Result<Self> {
        Self::new(r.coeffs)
    }
}

impl From<TargetCoefficients> for TargetRepr {
    fn from(t: TargetCoefficients) -> Self {
        TargetRepr { coeffs: t.coeffs }
    }
}

impl TargetCoefficients {
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::input(
                "target needs at least two coefficients (n >= 1)",
            ));
        }
        if coeffs.iter().any(|z| !z.is_finite()) {
            return Err(Error::input("target coefficients must be finite"));
        }
        if coeffs.iter().all(|z| z.norm() == 0.0) {
            return Err(Error::input("target coefficients are all zero"));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn n(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Copy scaled so the largest coefficient has modulus one.
    pub fn normalized(&self) -> Vec<Complex64> {
        let m = self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        self.coeffs.iter().map(|z| z / m).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSolution {
    pub weights: Vec<Complex64>,
    #[serde(rename = "branch")]
    pub branch_id: Vec<usize>,
    pub p_nominal: f64,
    pub residual: f64,
}

impl WeightSolution {
    pub fn max_abs_weight(&self) -> f64 {
        self.weights.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_branches: usize,
    pub root_tolerance: f64,
    pub residual_tolerance: f64,
    pub enumerate_all: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_branches: 64,
            root_tolerance: 1e-12,
            residual_tolerance: 1e-8,
            enumerate_all: false,
        }
    }
}

/// Result of stripping vanishing end coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateReport {
    /// Remaining coefficients after the forced factors are divided out.
    pub reduced: Vec<Complex64>,
    /// Weights fixed to `-1` (vanishing `C^0`) or `+1` (vanishing `C^n`).
    pub forced: Vec<Complex64>,
}

/// Divides out the factors forced by vanishing end coefficients: a zero
/// `C^0` requires a `p = -1` factor, a zero `C^n` a `p = +1` factor.
pub fn handle_degenerate(target: &TargetCoefficients) -> DegenerateReport {
    let mut coeffs = target.normalized();
    let mut forced = Vec::new();
    loop {
        if coeffs.len() > 1 && coeffs[0].norm() <= ZERO_COEFF_TOL {
            coeffs = coeffs[1..].iter().map(|z| z / 2.0).collect();
            forced.push(c(-1.0, 0.0));
        } else if coeffs.len() > 1 && coeffs[coeffs.len() - 1].norm() <= ZERO_COEFF_TOL {
            coeffs.pop();
            coeffs.iter_mut().for_each(|z| *z /= 2.0);
            forced.push(c(1.0, 0.0));
        } else {
            break;
        }
    }
    DegenerateReport {
        reduced: coeffs,
        forced,
    }
}

/// `p = (1 + x)/(1 - x)`.
pub fn weight_from_root(x: Complex64) -> Complex64 {
    (1.0 + x) / (1.0 - x)
}

/// `x = (p - 1)/(p + 1)`.
pub fn root_from_weight(p: Complex64) -> Complex64 {
    (p - 1.0) / (p + 1.0)
}

/// Divides the factor `(1 + p) + (1 - p) z` out of `coeffs`.
///
/// The substitution runs from the end where it is stable: forward when
/// `|x| <= 1`, backward otherwise. The unused end equation is returned as a
/// consistency residual.
fn peel(coeffs: &[Complex64], p: Complex64) -> (Vec<Complex64>, f64) {
    let n = coeffs.len() - 1;
    let plus = 1.0 + p;
    let minus = 1.0 - p;
    let mut prev = vec![c(0.0, 0.0); n];
    let check;
    if (minus / plus).norm() <= 1.0 {
        prev[0] = coeffs[0] / plus;
        for k in 1..n {
            prev[k] = (coeffs[k] - minus * prev[k - 1]) / plus;
        }
        check = (coeffs[n] - minus * prev[n - 1]).norm();
    } else {
        prev[n - 1] = coeffs[n] / minus;
        for k in (1..n).rev() {
            prev[k - 1] = (coeffs[k] - plus * prev[k]) / minus;
        }
        check = (coeffs[0] - plus * prev[0]).norm();
    }
    (prev, check)
}

/// Relative L2 distance between `forward_coeffs(weights)` and `target`
/// after the best complex rescaling.
pub fn projective_residual(weights: &[Complex64], target: &[Complex64]) -> f64 {
    let f = forward_coeffs(weights);
    let ff: f64 = f.iter().map(|z| z.norm_sqr()).sum();
    let tt: f64 = target.iter().map(|z| z.norm_sqr()).sum();
    if ff == 0.0 {
        return 1.0;
    }
    let ft: Complex64 = f.iter().zip(target).map(|(a, b)| a.conj() * b).sum();
    let s = ft / ff;
    let err: f64 = f
        .iter()
        .zip(target)
        .map(|(a, b)| (s * a - b).norm_sqr())
        .sum();
    (err / tt).sqrt()
}

#[derive(Clone)]
struct Branch {
    coeffs: Vec<Complex64>,
    /// Weights in peel order (last weight first).
    peeled: Vec<Complex64>,
    id: Vec<usize>,
    score: f64,
}

fn canonical_key(weights: &[Complex64], sort: bool) -> Vec<(i64, i64)> {
    let q = |v: f64| (v / ROOT_DEDUP_TOL).round() as i64;
    let mut key: Vec<(i64, i64)> = weights.iter().map(|p| (q(p.re), q(p.im))).collect();
    if sort {
        key.sort_unstable();
    }
    key
}

/// Distinct roots ordered so that larger weights are peeled first; following
/// branch 0 at every step yields weights in ascending `(re, im)` order.
fn branch_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    // sum_k C^{n-k} x^k, ascending degree
    let ascending: Vec<Complex64> = coeffs.iter().rev().copied().collect();
    let mut rs = poly::roots(&ascending)?;
    rs.sort_by(|a, b| {
        let (pa, pb) = (weight_from_root(*a), weight_from_root(*b));
        pb.re.total_cmp(&pa.re).then(pb.im.total_cmp(&pa.im))
    });
    let mut distinct: Vec<Complex64> = Vec::with_capacity(rs.len());
    for r in rs {
        if distinct.iter().all(|d| (d - r).norm() > ROOT_DEDUP_TOL) {
            distinct.push(r);
        }
    }
    Ok(distinct)
}

/// Recovers weights `p_1..p_n` whose forward coefficients are proportional
/// to the target.
pub fn solve_weights(
    target: &TargetCoefficients,
    opts: &SolveOptions,
) -> Result<Vec<WeightSolution>> {
    if opts.max_branches == 0 {
        return Err(Error::input("max_branches must be at least 1"));
    }
    let normalized = target.normalized();
    let DegenerateReport { reduced, forced } = handle_degenerate(target);

    let mut frontier = vec![Branch {
        coeffs: reduced,
        peeled: Vec::new(),
        id: Vec::new(),
        score: 1.0,
    }];
    while frontier[0].coeffs.len() > 1 {
        let mut next = Vec::new();
        for b in &frontier {
            for (j, x) in branch_roots(&b.coeffs)?.into_iter().enumerate() {
                if (1.0 - x).norm() <= opts.root_tolerance {
                    // p would be infinite: the ion must start in |0> alone
                    continue;
                }
                let p = weight_from_root(x);
                let (coeffs, _) = peel(&b.coeffs, p);
                let mut peeled = b.peeled.clone();
                peeled.push(p);
                let mut id = b.id.clone();
                id.push(j);
                let score = b.score * 0.25 / (1.0 + p.norm_sqr());
                next.push(Branch {
                    coeffs,
                    peeled,
                    id,
                    score,
                });
            }
        }
        if next.is_empty() {
            return Err(Error::Numerical(
                "every root maps to an unbounded weight (p = infinity)".into(),
            ));
        }
        next.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        let mut seen = BTreeSet::new();
        next.retain(|b| seen.insert(canonical_key(&b.peeled, !opts.enumerate_all)));
        next.truncate(opts.max_branches);
        frontier = next;
    }

    let mut solutions: Vec<WeightSolution> = frontier
        .into_iter()
        .map(|b| {
            let mut weights = forced.clone();
            weights.extend(b.peeled.iter().rev());
            let residual = projective_residual(&weights, &normalized);
            WeightSolution {
                p_nominal: success_probability_nominal(&weights),
                branch_id: b.id,
                weights,
                residual,
            }
        })
        .collect();
    solutions.sort_by(|a, b| a.branch_id.cmp(&b.branch_id));

    let best = solutions
        .iter()
        .map(|s| s.residual)
        .fold(f64::INFINITY, f64::min);
    solutions.retain(|s| s.residual <= opts.residual_tolerance);
    if solutions.is_empty() {
        return Err(Error::ResidualTooLarge {
            tolerance: opts.residual_tolerance,
            best_residual: best,
        });
    }
    Ok(solutions)
}

/// The realization with the highest nominal success probability; ties go
/// to the lexicographically smallest branch id.
pub fn best_realization(solutions: &[WeightSolution]) -> Result<WeightSolution> {
    let first = solutions
        .first()
        .ok_or_else(|| Error::input("no solutions to choose from"))?;
    let mut best = first;
    for s in &solutions[1..] {
        let tie = (s.p_nominal - best.p_nominal).abs() <= 1e-12 * best.p_nominal;
        if (!tie && s.p_nominal > best.p_nominal) || (tie && s.branch_id < best.branch_id) {
            best = s;
        }
    }
    Ok(best.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coeffs: Vec<Complex64>,
    pub fidelity: f64,
    /// Gram eigenvalues kept after flooring.
    pub rank: usize,
}

/// Least-squares line superposition `sum c_k D[(2k - n) beta]|alpha>`
/// closest to a Fock target.
///
/// With `S` the Gram matrix of the components and `v` their overlaps with
/// the target, the optimum is `c = S^+ v` with fidelity `v^dag S^+ v / |t|^2`.
/// Eigenvalues of `S` below `1e-12` of the largest are dropped from the
/// pseudo-inverse.
pub fn fit_target(
    target: &FockVector,
    n: usize,
    alpha: Complex64,
    beta: Complex64,
) -> Result<FitResult> {
    let tt = target.norm_sqr();
    if tt == 0.0 {
        return Err(Error::input("fit target is zero"));
    }
    if beta.norm() == 0.0 || !beta.is_finite() || !alpha.is_finite() {
        return Err(Error::input(
            "fit needs finite alpha and nonzero finite beta",
        ));
    }
    let dim = n + 1;
    let shifts: Vec<Complex64> = (0..dim)
        .map(|k| beta * (2.0 * k as f64 - n as f64))
        .collect();
    let phases: Vec<Complex64> = shifts
        .iter()
        .map(|g| displacement_phase(*g, alpha))
        .collect();
    let labels: Vec<Complex64> = shifts.iter().map(|g| alpha + g).collect();

    let gram = DMatrix::from_fn(dim, dim, |j, k| {
        phases[j].conj() * phases[k] * coherent_overlap(labels[j], labels[k])
    });
    let mut v = DVector::<Complex64>::zeros(dim);
    for k in 0..dim {
        let comp = coherent_fock(labels[k], target.cutoff())?;
        v[k] = phases[k].conj() * inner(&comp, target)?;
    }

    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let floor = GRAM_EIGEN_FLOOR * top;
    let mut coeffs = DVector::<Complex64>::zeros(dim);
    let mut rank = 0;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > floor {
            rank += 1;
            let u = eig.eigenvectors.column(i);
            let proj = u.dotc(&v);
            coeffs += u * (proj / lambda);
        }
    }
    if rank == 0 || (n >= 1 && rank < 2) {
        return Err(Error::Numerical(format!(
            "Gram matrix of the line components is singular (rank {rank}); increase |beta|"
        )));
    }
    let fidelity = (v.dotc(&coeffs).re / tt).clamp(0.0, 1.0);
    Ok(FitResult {
        coeffs: coeffs.iter().copied().collect(),
        fidelity,
        rank,
    })
}
