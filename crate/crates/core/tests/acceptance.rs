//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the terminal.
//! Criteria listed in `KNOWN_UNATTAINABLE` are evaluated and reported like
//! the rest, but do not fail the run; the reason is printed with the line.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::{c, coherent_expm, compare, random_disk, Compared};
use ile_core::fock::{apply_displacement, coherent_overlap, inner};
use ile_core::inverse::{projective_residual, solve_weights, SolveOptions, TargetCoefficients};
use ile_core::multimode::{cycle_displacements, trotter_validate, BetaVariant, TrotterConfig};
use ile_core::protocol::to_fock;
use ile_core::{
    coherent_fock, displacement_matrix, forward_coeffs, modes_for, run_ideal,
    success_probability_exact, success_probability_nominal, Complex64, PhysicalParams,
    ProtocolPlan,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria whose literal statement contradicts the computed physics.
const KNOWN_UNATTAINABLE: &[(u32, &str)] = &[(
    9,
    "the post-selected norm of (|b> + |-b>)/2 tends to 1/2, twice the nominal 4^-n figure; \
     the formula, monotonicity and Gram/Fock parts hold",
)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn params(n: usize) -> PhysicalParams {
    PhysicalParams::new(0.1, 0.02, 0.99, n).unwrap()
}

fn roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for n in 1..=8 {
        for _ in 0..100 {
            let coeffs = loop {
                let v: Vec<Complex64> = (0..=n).map(|_| random_disk(&mut rng, 1.0)).collect();
                if v.iter().any(|z| z.norm() >= 0.1) {
                    break v;
                }
            };
            let target = TargetCoefficients::new(coeffs.clone()).unwrap();
            match solve_weights(&target, &SolveOptions::default()) {
                Ok(sols) => {
                    for s in &sols {
                        worst = worst.max(projective_residual(&s.weights, &coeffs));
                    }
                }
                Err(_) => failures += 1,
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && failures == 0 && elapsed < 5.0,
        format!("worst residual {worst:.2e}, {failures} unsolved, {elapsed:.2} s"),
    )
}

fn cat_example() -> Outcome {
    let target = TargetCoefficients::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
    let sols = solve_weights(&target, &SolveOptions::default()).unwrap();
    let want = [c(0.0, -1.0), c(0.0, 1.0)];
    let hit = sols.iter().find(|s| max_diff(&s.weights, &want) <= 1e-12);
    let coeff_err = max_diff(
        &forward_coeffs(&want),
        &[c(2.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)],
    );
    match hit {
        Some(s) => outcome(
            (s.p_nominal - 1.0 / 64.0).abs() <= 1e-15 && coeff_err <= 1e-12,
            format!(
                "branch {:?}, p_nominal {}, coeff error {coeff_err:.1e}",
                s.branch_id, s.p_nominal
            ),
        ),
        None => outcome(false, format!("(-i, i) not among {} solutions", sols.len())),
    }
}

fn cycle_ion_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for m in 1..=4 {
        for _ in 0..25 {
            let w: Vec<Complex64> = (0..2 * m).map(|_| random_disk(&mut rng, 2.0)).collect();
            let two =
                run_ideal(&ProtocolPlan::from_weights(params(2), c(0.0, 0.0), 80.0, &w).unwrap())
                    .unwrap();
            let one =
                run_ideal(&ProtocolPlan::from_weights(params(1), c(0.0, 0.0), 80.0, &w).unwrap())
                    .unwrap();
            worst = worst.max(max_diff(&two.state.coeffs, &one.state.coeffs));
        }
    }
    for n in [3, 4] {
        for _ in 0..25 {
            let w: Vec<Complex64> = (0..n).map(|_| random_disk(&mut rng, 2.0)).collect();
            let many =
                run_ideal(&ProtocolPlan::from_weights(params(n), c(0.0, 0.0), 80.0, &w).unwrap())
                    .unwrap();
            let one =
                run_ideal(&ProtocolPlan::from_weights(params(1), c(0.0, 0.0), 80.0, &w).unwrap())
                    .unwrap();
            worst = worst.max(max_diff(&many.state.coeffs, &one.state.coeffs));
        }
    }
    outcome(
        worst <= 1e-12,
        format!("worst coefficient difference {worst:.1e}"),
    )
}

fn binomial_row() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut exact_p = true;
    for n in 1..=10usize {
        let w = vec![c(0.0, 0.0); n];
        let mut binom = 1.0f64;
        for (k, z) in forward_coeffs(&w).iter().enumerate() {
            worst = worst.max((z - c(binom, 0.0)).norm());
            binom = binom * (n - k) as f64 / (k + 1) as f64;
        }
        exact_p &= success_probability_nominal(&w) == 4f64.powi(-(n as i32));
    }
    outcome(
        worst <= 1e-12 && exact_p,
        format!("worst binomial error {worst:.1e}, p_nominal exact: {exact_p}"),
    )
}

fn fock_layer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut unit, mut comp, mut over, mut expm): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..40 {
        let b = random_disk(&mut rng, 2.0);
        let prod = displacement_matrix(b, 64).unwrap().as_matrix()
            * displacement_matrix(-b, 64).unwrap().as_matrix();
        for col in 0..20 {
            for row in 0..=64 {
                let want = if row == col { 1.0 } else { 0.0 };
                unit = unit.max((prod[(row, col)] - want).norm());
            }
        }
        let (b1, g1) = (random_disk(&mut rng, 1.0), random_disk(&mut rng, 1.0));
        let start = coherent_fock(random_disk(&mut rng, 0.5), 64).unwrap();
        let twice = apply_displacement(&apply_displacement(&start, g1).unwrap(), b1).unwrap();
        let once = apply_displacement(&start, b1 + g1).unwrap();
        let phase = ((b1 * g1.conj() - b1.conj() * g1) / 2.0).exp();
        for k in 0..20 {
            comp = comp.max((twice.amplitude(k) - phase * once.amplitude(k)).norm());
        }
        let (x, y) = (random_disk(&mut rng, 2.0), random_disk(&mut rng, 2.0));
        let ov = inner(
            &coherent_fock(x, 64).unwrap(),
            &coherent_fock(y, 64).unwrap(),
        )
        .unwrap();
        over = over.max((coherent_overlap(x, y) - ov).norm());
        let v = coherent_fock(x, 30).unwrap();
        expm = expm.max(max_diff(v.amplitudes(), coherent_expm(x, 30).as_slice()));
    }
    outcome(
        unit <= 1e-8 && comp <= 1e-8 && over <= 1e-10 && expm <= 1e-10,
        format!("unitarity {unit:.1e}, composition {comp:.1e}, overlap {over:.1e}, vs exponential {expm:.1e}"),
    )
}

fn chain_structure() -> Outcome {
    let (mut mu1, mut mu2, mut b1, mut ortho): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for n in 2..=10 {
        let (_, m) = modes_for(n).unwrap();
        mu1 = mu1.max((m.frequencies[0] - 1.0).abs());
        mu2 = mu2.max((m.frequencies[1] - 3f64.sqrt()).abs());
        for i in 0..n {
            b1 = b1.max((m.b(i, 0) - 1.0 / (n as f64).sqrt()).abs());
        }
        ortho = ortho.max(m.orthonormality_error());
    }
    let third = modes_for(3).unwrap().1.frequencies[2];
    let third_err = (third - (29.0f64 / 5.0).sqrt()).abs();
    outcome(
        mu1 <= 1e-8 && mu2 <= 1e-8 && b1 <= 1e-10 && ortho <= 1e-10 && third_err <= 1e-6,
        format!("mu1 {mu1:.1e}, mu2 {mu2:.1e}, b1 {b1:.1e}, orthonormality {ortho:.1e}, N=3 third {third_err:.1e}"),
    )
}

fn multimode_oracle() -> Outcome {
    let (_, modes) = modes_for(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let start = Instant::now();
    let (mut dp, mut dn, mut df): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for case in 0..8 {
        let params = PhysicalParams::new(0.1, 0.02, rng.random_range(0.95..0.999), 2).unwrap();
        let t = rng.random_range(40.0..160.0);
        let w = [random_disk(&mut rng, 1.5), random_disk(&mut rng, 1.5)];
        let plan = ProtocolPlan::from_weights(params, c(0.0, 0.0), t, &w).unwrap();
        let variant = if case % 2 == 0 {
            BetaVariant::Paper
        } else {
            BetaVariant::Integrated
        };
        let betas = cycle_displacements(&modes, &params, t, variant).unwrap();
        let Compared {
            p,
            phonons,
            com_fidelity,
            ..
        } = compare(&plan, betas, &[24, 24]);
        dp = dp.max((p.0 - p.1).abs());
        for (g, f) in phonons {
            dn = dn.max((g - f).abs());
        }
        df = df.max((com_fidelity.0 - com_fidelity.1).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        dp <= 1e-6 && dn <= 1e-6 && df <= 1e-6 && elapsed < 10.0,
        format!("p {dp:.1e}, <n_l> {dn:.1e}, COM fidelity {df:.1e}, {elapsed:.2} s"),
    )
}

fn isolation_probe() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (n, cutoffs) in [(2usize, vec![48, 6]), (3, vec![64, 4, 4])] {
        let (_, modes) = modes_for(n).unwrap();
        let params = PhysicalParams::new(0.1, 0.02, 0.999, n).unwrap();
        // (1 - delta) t = 1
        let t = 1000.0;
        let plan =
            ProtocolPlan::from_weights(params, c(0.0, 0.0), t, &vec![c(0.0, 0.0); n]).unwrap();
        let betas = cycle_displacements(&modes, &params, t, BetaVariant::Integrated).unwrap();
        let full = compare(&plan, betas.clone(), &cutoffs);
        let eps = 1.0 - full.com_fidelity.1;
        let free = compare(&plan, betas.com_only(), &cutoffs);
        pass &= full.com_fidelity.0 >= 1.0 - eps - 1e-6
            && ((1.0 - full.com_fidelity.0) - eps).abs() <= 1e-6
            && free.gap.0 <= 1e-12
            && full.gap.0 > 0.0;
        notes.push(format!(
            "N={n}: eps {eps:.2e}, COM fidelity {:.12}, gap {:.2e} (spectators zeroed {:.1e})",
            full.com_fidelity.0, full.gap.0, free.gap.0
        ));
    }
    outcome(pass, notes.join("; "))
}

fn probability_exposure() -> Outcome {
    let params = params(1);
    let mut values = Vec::new();
    let (mut formula_err, mut fock_err): (f64, f64) = (0.0, 0.0);
    for mag in [0.5, 1.0, 2.0, 3.0] {
        let t = mag / (params.eta * params.omega);
        let plan = ProtocolPlan::from_weights(params, c(0.0, 0.0), t, &[c(0.0, 0.0)]).unwrap();
        let (p, _) = success_probability_exact(&plan).unwrap();
        let analytic = 0.5 * (1.0 + (-2.0 * mag * mag).exp());
        formula_err = formula_err.max((p - analytic).abs());
        let r = run_ideal(&plan).unwrap();
        let fock = to_fock(&r.state, 80).unwrap().norm_sqr() * r.p_nominal;
        fock_err = fock_err.max((p - fock).abs());
        values.push(p);
    }
    let monotone = values.windows(2).all(|w| w[1] < w[0]);
    let quarter_gap = (values[3] - 0.25).abs();
    let converges_to_quarter = quarter_gap <= 1e-3;
    let literal_formula = values
        .iter()
        .zip([0.5f64, 1.0, 2.0, 3.0])
        .all(|(p, m)| (p - 0.25 * (1.0 + (-2.0 * m * m).exp())).abs() <= 1e-12);
    outcome(
        formula_err <= 1e-12
            && monotone
            && fock_err <= 1e-8
            && converges_to_quarter
            && literal_formula,
        format!(
            "p_exact {values:.6?} = (1 + e^(-2|b|^2))/2 to {formula_err:.1e}, monotone {monotone}, \
             Gram/Fock {fock_err:.1e}; distance to 1/4 at |b|=3: {quarter_gap:.4}; \
             quarter-scaled formula holds: {literal_formula}"
        ),
    )
}

fn trotter_convergence() -> Outcome {
    let (_, modes) = modes_for(1).unwrap();
    let params = PhysicalParams::new(0.05, 0.005, 0.99, 1).unwrap();
    let cfg = TrotterConfig {
        cutoff: 12,
        steps: 50,
        ..Default::default()
    };
    let mut notes = Vec::new();
    let mut pass = true;
    for t in [100.0, 200.0, 400.0] {
        match trotter_validate(&params, &modes, t, &cfg) {
            Ok(r) => {
                let ratio = r.convergence_ratio.unwrap_or(f64::NAN);
                pass &= (3.5..=4.5).contains(&ratio) && r.fidelity_integrated >= r.fidelity_paper;
                notes.push(format!(
                    "t={t}: ratio {ratio:.4}, F_int {:.12}, F_paper {:.12}",
                    r.fidelity_integrated, r.fidelity_paper
                ));
            }
            Err(e) => {
                pass = false;
                notes.push(format!("t={t}: {e}"));
            }
        }
    }
    outcome(pass, notes.join("; "))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "inverse/forward roundtrip", roundtrip),
        (2, "worked cat example", cat_example),
        (3, "cycle/ion equivalence", cycle_ion_equivalence),
        (4, "binomial row", binomial_row),
        (5, "Fock-layer numerics", fock_layer),
        (6, "chain structure", chain_structure),
        (7, "multimode Fock oracle", multimode_oracle),
        (8, "isolation probe", isolation_probe),
        (9, "probability discrepancy", probability_exposure),
        (10, "stepping self-convergence", trotter_convergence),
    ];
    let mut unexpected = 0;
    for (id, title, check) in criteria {
        let result =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| outcome(false, "panicked"));
        let known = KNOWN_UNATTAINABLE.iter().find(|(k, _)| *k == id);
        let status = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {status} {title}: {}", result.detail);
        if !result.pass {
            match known {
                Some((_, why)) => println!("             known: {why}"),
                None => unexpected += 1,
            }
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criteria failed unexpectedly");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
