//! Brute-force reference computations in a truncated Fock space.
//!
//! Displacements come from exponentiating `beta a^dag - conj(beta) a` on a
//! padded space and cropping, so nothing here shares code with the library's
//! closed forms or coherent-overlap algebra.

#![allow(dead_code)]

use ile_core::multimode::{analyze_with, expand_exact, DisplacementPlanEntry, ExpansionOptions};
use ile_core::{Complex64, ProtocolPlan};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

const PAD: usize = 40;

/// `D(beta)` on levels `0..=cutoff`, via the matrix exponential.
pub fn displacement_expm(beta: Complex64, cutoff: usize) -> DMatrix<Complex64> {
    let dim = cutoff + 1 + PAD;
    let mut g = DMatrix::<Complex64>::zeros(dim, dim);
    for n in 0..dim - 1 {
        let s = ((n + 1) as f64).sqrt();
        g[(n + 1, n)] += beta * s;
        g[(n, n + 1)] -= beta.conj() * s;
    }
    g.exp().view((0, 0), (cutoff + 1, cutoff + 1)).into_owned()
}

pub fn coherent_expm(alpha: Complex64, cutoff: usize) -> DVector<Complex64> {
    displacement_expm(alpha, cutoff).column(0).into_owned()
}

/// State on a product of modes with individual cutoffs; mode 0 is the
/// slowest index.
#[derive(Clone, Debug)]
pub struct ProductState {
    pub cutoffs: Vec<usize>,
    pub amps: Vec<Complex64>,
}

impl ProductState {
    pub fn product(factors: &[DVector<Complex64>]) -> Self {
        let mut amps = vec![c(1.0, 0.0)];
        for f in factors {
            amps = amps
                .iter()
                .flat_map(|a| f.iter().map(move |x| a * x))
                .collect();
        }
        Self {
            cutoffs: factors.iter().map(|f| f.len() - 1).collect(),
            amps,
        }
    }

    fn stride(&self, mode: usize) -> usize {
        self.cutoffs[mode + 1..].iter().map(|k| k + 1).product()
    }

    pub fn apply(&self, mode: usize, m: &DMatrix<Complex64>) -> Self {
        let d = self.cutoffs[mode] + 1;
        let stride = self.stride(mode);
        let mut out = vec![c(0.0, 0.0); self.amps.len()];
        for base in (0..self.amps.len()).filter(|b| (b / stride).is_multiple_of(d)) {
            for r in 0..d {
                out[base + r * stride] = (0..d)
                    .map(|k| m[(r, k)] * self.amps[base + k * stride])
                    .sum();
            }
        }
        Self {
            cutoffs: self.cutoffs.clone(),
            amps: out,
        }
    }

    pub fn combine(&self, a: Complex64, other: &Self, b: Complex64) -> Self {
        let amps = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self {
            cutoffs: self.cutoffs.clone(),
            amps,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn mean_phonon(&self, mode: usize) -> f64 {
        let d = self.cutoffs[mode] + 1;
        let stride = self.stride(mode);
        let w: f64 = self
            .amps
            .iter()
            .enumerate()
            .map(|(k, z)| ((k / stride) % d) as f64 * z.norm_sqr())
            .sum();
        w / self.norm_sqr()
    }

    /// Reduced density matrix of mode 0, unit trace.
    pub fn reduced_first(&self) -> DMatrix<Complex64> {
        let d = self.cutoffs[0] + 1;
        let rest = self.amps.len() / d;
        let mut rho = DMatrix::<Complex64>::zeros(d, d);
        for m in 0..d {
            for k in 0..d {
                rho[(m, k)] = (0..rest)
                    .map(|r| self.amps[m * rest + r] * self.amps[k * rest + r].conj())
                    .sum();
            }
        }
        let tr = rho.trace();
        rho / tr
    }

    pub fn fidelity(&self, other: &Self) -> f64 {
        let ov: Complex64 = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(x, y)| x.conj() * y)
            .sum();
        ov.norm_sqr() / (self.norm_sqr() * other.norm_sqr())
    }
}

/// Post-selected state of every mode: `|alpha>` on mode 0, vacuum
/// elsewhere, then the spin-projected operator of each ion in each cycle.
pub fn conditional_fock(
    plan: &ProtocolPlan,
    betas: &DisplacementPlanEntry,
    cutoffs: &[usize],
) -> ProductState {
    let n = plan.params.n_ions;
    let init: Vec<DVector<Complex64>> = (0..n)
        .map(|l| coherent_expm(if l == 0 { plan.alpha } else { c(0.0, 0.0) }, cutoffs[l]))
        .collect();
    let mut psi = ProductState::product(&init);
    let plus: Vec<Vec<DMatrix<Complex64>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|l| displacement_expm(betas.get(i, l), cutoffs[l]))
                .collect()
        })
        .collect();
    let minus: Vec<Vec<DMatrix<Complex64>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|l| displacement_expm(-betas.get(i, l), cutoffs[l]))
                .collect()
        })
        .collect();
    for cycle in &plan.cycles {
        for (i, p) in cycle.weights.iter().enumerate() {
            let f = 0.5 / (1.0 + p.norm_sqr()).sqrt();
            let mut a = psi.clone();
            let mut b = psi.clone();
            for l in 0..n {
                a = a.apply(l, &plus[i][l]);
                b = b.apply(l, &minus[i][l]);
            }
            psi = a.combine((1.0 - p) * f, &b, (1.0 + p) * f);
        }
    }
    psi
}

/// Single-mode target `prod_i [(1 - p_i) D(beta) + (1 + p_i) D(-beta)] |alpha>`.
pub fn ideal_com_fock(
    alpha: Complex64,
    beta: Complex64,
    weights: &[Complex64],
    cutoff: usize,
) -> DVector<Complex64> {
    let dp = displacement_expm(beta, cutoff);
    let dm = displacement_expm(-beta, cutoff);
    let mut v = coherent_expm(alpha, cutoff);
    for p in weights {
        v = &dp * &v * (1.0 - p) + &dm * &v * (1.0 + p);
    }
    v
}

pub fn density_fidelity(rho: &DMatrix<Complex64>, psi: &DVector<Complex64>) -> f64 {
    (psi.adjoint() * rho * psi)[(0, 0)].re / psi.norm_squared()
}

pub fn random_disk<R: Rng>(rng: &mut R, radius: f64) -> Complex64 {
    loop {
        let z = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if z.norm() <= 1.0 {
            return z * radius;
        }
    }
}

/// Forward coefficients by direct polynomial multiplication; index `k`
/// counts the `D(+beta)` factors.
pub fn brute_coeffs(weights: &[Complex64]) -> Vec<Complex64> {
    let mut poly = vec![c(1.0, 0.0)];
    for p in weights {
        let mut next = vec![c(0.0, 0.0); poly.len() + 1];
        for (k, a) in poly.iter().enumerate() {
            next[k] += a * (1.0 + p);
            next[k + 1] += a * (1.0 - p);
        }
        poly = next;
    }
    poly
}

/// Gram-side and Fock-side values of the same quantity.
pub struct Compared {
    pub p: (f64, f64),
    pub phonons: Vec<(f64, f64)>,
    pub com_fidelity: (f64, f64),
    pub gap: (f64, f64),
}

/// The mode-by-mode product state, normalization carried on mode 0.
pub fn factorized_fock(
    plan: &ProtocolPlan,
    betas: &DisplacementPlanEntry,
    cutoffs: &[usize],
) -> ProductState {
    let n = plan.params.n_ions;
    let weights = plan.all_weights();
    let factors: Vec<DVector<Complex64>> = (0..n)
        .map(|l| {
            let init = if l == 0 { plan.alpha } else { c(0.0, 0.0) };
            let mut v = coherent_expm(init, cutoffs[l]);
            for (k, p) in weights.iter().enumerate() {
                let i = k % n;
                let f = if l == 0 {
                    0.5 / (1.0 + p.norm_sqr()).sqrt()
                } else {
                    0.5
                };
                let dp = displacement_expm(betas.get(i, l), cutoffs[l]);
                let dm = displacement_expm(-betas.get(i, l), cutoffs[l]);
                v = (&dp * &v * (1.0 - p) + &dm * &v * (1.0 + p)) * c(f, 0.0);
            }
            v
        })
        .collect();
    ProductState::product(&factors)
}

pub fn compare(plan: &ProtocolPlan, betas: DisplacementPlanEntry, cutoffs: &[usize]) -> Compared {
    let opts = ExpansionOptions::default();
    let exact = expand_exact(plan, &betas, &opts).unwrap();
    let analysis = analyze_with(plan, betas.clone(), &opts).unwrap();
    let fock = conditional_fock(plan, &betas, cutoffs);
    let ideal = ideal_com_fock(plan.alpha, betas.get(0, 0), &plan.all_weights(), cutoffs[0]);
    let fac = factorized_fock(plan, &betas, cutoffs);
    Compared {
        p: (exact.p_exact, fock.norm_sqr()),
        phonons: (0..plan.params.n_ions)
            .map(|l| (analysis.report.per_mode_mean_phonon[l], fock.mean_phonon(l)))
            .collect(),
        com_fidelity: (
            analysis.report.com_fidelity_vs_ideal,
            density_fidelity(&fock.reduced_first(), &ideal),
        ),
        gap: (analysis.report.factorization_gap, 1.0 - fock.fidelity(&fac)),
    }
}

pub fn assert_close(what: &str, (gram, fock): (f64, f64), tol: f64) {
    assert!(
        (gram - fock).abs() <= tol,
        "{what}: gram {gram} vs fock {fock}"
    );
}
