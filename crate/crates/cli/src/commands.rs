use std::fs;
use std::path::Path;

use ile_core::inverse::{
    best_realization, fit_target, solve_weights, SolveOptions, TargetCoefficients, WeightSolution,
};
use ile_core::io::{LeakageRecord, ModesRecord, SimulationRecord};
use ile_core::multimode::{
    analyze_leakage, trotter_validate, BetaVariant, ExpansionOptions, TrotterConfig,
};
use ile_core::protocol::to_fock;
use ile_core::{modes_for, run_ideal, Complex64, Cycle, FockVector, PhysicalParams, ProtocolPlan};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::args::{
    BetaChoice, FitArgs, Format, LeakageArgs, ModesArgs, PlanArgs, SimulateArgs, ValidateArgs,
};
use crate::output::{csv_text, fmt_float, input_err, json_document, CliError};

type Result<T> = std::result::Result<T, CliError>;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| input_err(format!("{key}: not a number: {v:?}")))
}

fn parse_complex(key: &str, v: &str) -> Result<Complex64> {
    let (re, im) = v
        .split_once(',')
        .ok_or_else(|| input_err(format!("{key}: expected re,im, got {v:?}")))?;
    Ok(Complex64::new(parse_f64(key, re)?, parse_f64(key, im)?))
}

/// Applies `KEY=VALUE` overrides to a plan; `t` sets every cycle duration.
fn apply_overrides(plan: ProtocolPlan, set: &[String]) -> Result<ProtocolPlan> {
    let ProtocolPlan {
        mut params,
        alpha,
        mut cycles,
    } = plan;
    for item in set {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| input_err(format!("override {item:?} is not KEY=VALUE")))?;
        let v = parse_f64(key, value)?;
        match key.trim() {
            "eta" => params.eta = v,
            "omega" => params.omega = v,
            "delta" => params.delta = v,
            "t" => cycles.iter_mut().for_each(|c| c.duration = v),
            other => {
                return Err(input_err(format!(
                    "unknown parameter {other:?}; expected eta, omega, delta or t"
                )))
            }
        }
    }
    Ok(ProtocolPlan::new(params, alpha, cycles)?)
}

fn load_plan(path: &Path, set: &[String]) -> Result<ProtocolPlan> {
    apply_overrides(read_json(path)?, set)
}

fn variant(choice: &BetaChoice) -> BetaVariant {
    if choice.paper_beta {
        BetaVariant::Paper
    } else {
        BetaVariant::Integrated
    }
}

#[derive(Serialize)]
struct PlanResolved<'a> {
    target: &'a TargetCoefficients,
    max_branches: usize,
    tolerance: f64,
    all: bool,
}

#[derive(Serialize)]
struct PlanOutput {
    best: WeightSolution,
    #[serde(skip_serializing_if = "Option::is_none")]
    solutions: Option<Vec<WeightSolution>>,
}

pub fn plan(args: &PlanArgs) -> Result<String> {
    let target: TargetCoefficients = read_json(&args.input)?;
    if !(args.tolerance.is_finite() && args.tolerance > 0.0) {
        return Err(input_err("--tolerance must be positive"));
    }
    let opts = SolveOptions {
        max_branches: args.max_branches,
        residual_tolerance: args.tolerance,
        ..Default::default()
    };
    let solutions = solve_weights(&target, &opts)?;
    let best = best_realization(&solutions)?;
    let out = PlanOutput {
        best,
        solutions: args.all.then_some(solutions),
    };
    let resolved = PlanResolved {
        target: &target,
        max_branches: args.max_branches,
        tolerance: args.tolerance,
        all: args.all,
    };
    json_document("plan", &resolved, &out)
}

#[derive(Serialize)]
struct SimResolved<'a> {
    plan: &'a ProtocolPlan,
    beta_variant: BetaVariant,
    fock_cutoff: Option<usize>,
}

#[derive(Serialize)]
struct FockDump {
    cutoff: usize,
    amplitudes: FockVector,
    norm_sqr: f64,
    gram_norm_sqr: f64,
    relative_tail_weight: f64,
}

#[derive(Serialize)]
struct SimOutput {
    #[serde(flatten)]
    record: SimulationRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    fock: Option<FockDump>,
}

pub fn simulate(args: &SimulateArgs) -> Result<String> {
    let plan = load_plan(&args.input, &args.overrides.set)?;
    let result = run_ideal(&plan)?;
    let fock = match args.fock {
        Some(cutoff) => {
            let v = to_fock(&result.state, cutoff)?;
            Some(FockDump {
                cutoff,
                norm_sqr: v.norm_sqr(),
                gram_norm_sqr: result.state.norm_sqr(),
                relative_tail_weight: v.relative_tail_weight(),
                amplitudes: v,
            })
        }
        None => None,
    };
    let out = SimOutput {
        record: SimulationRecord::from(&result),
        fock,
    };
    let resolved = SimResolved {
        plan: &plan,
        beta_variant: BetaVariant::Paper,
        fock_cutoff: args.fock,
    };
    json_document("simulate", &resolved, &out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SweepParam {
    Delta,
    Time,
}

#[derive(Debug, Clone, PartialEq)]
struct Sweep {
    param: SweepParam,
    values: Vec<f64>,
}

fn parse_sweep(spec: &str) -> Result<Sweep> {
    let bad = || input_err(format!("sweep {spec:?} is not NAME=START:STOP:COUNT"));
    let (name, range) = spec.split_once('=').ok_or_else(bad)?;
    let param = match name.trim() {
        "delta" => SweepParam::Delta,
        "t" => SweepParam::Time,
        other => {
            return Err(input_err(format!(
                "cannot sweep {other:?}; expected delta or t"
            )))
        }
    };
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let start = parse_f64("sweep start", parts[0])?;
    let stop = parse_f64("sweep stop", parts[1])?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if count < 2 {
        return Err(input_err("sweep count must be at least 2"));
    }
    let values = (0..count)
        .map(|k| {
            if k + 1 == count {
                stop
            } else {
                start + (stop - start) * k as f64 / (count - 1) as f64
            }
        })
        .collect();
    Ok(Sweep { param, values })
}

#[derive(Serialize)]
struct LeakageResolved<'a> {
    plan: &'a ProtocolPlan,
    beta_variant: BetaVariant,
    max_terms: usize,
}

fn leakage_point(
    plan: &ProtocolPlan,
    modes: &ile_core::ModeTable,
    v: BetaVariant,
    opts: &ExpansionOptions,
) -> Result<LeakageRecord> {
    let a = analyze_leakage(plan, modes, v, opts)?;
    Ok(LeakageRecord {
        report: a.report,
        p_exact: a.p_exact,
    })
}

pub fn leakage(args: &LeakageArgs) -> Result<String> {
    let plan = load_plan(&args.input, &args.overrides.set)?;
    let v = variant(&args.beta);
    let opts = ExpansionOptions::from_env()?;
    let n = plan.params.n_ions;
    let (_, modes) = modes_for(n)?;
    let Some(spec) = &args.sweep else {
        let record = leakage_point(&plan, &modes, v, &opts)?;
        let resolved = LeakageResolved {
            plan: &plan,
            beta_variant: v,
            max_terms: opts.max_terms,
        };
        return json_document("leakage", &resolved, &record);
    };
    let sweep = parse_sweep(spec)?;
    let points: Vec<(f64, f64, Result<LeakageRecord>)> = sweep
        .values
        .par_iter()
        .map(|&x| {
            let mut params = plan.params;
            let mut cycles = plan.cycles.clone();
            match sweep.param {
                SweepParam::Delta => params.delta = x,
                SweepParam::Time => cycles.iter_mut().for_each(|c| c.duration = x),
            }
            let delta = params.delta;
            let t = cycles[0].duration;
            let rec = ProtocolPlan::new(params, plan.alpha, cycles)
                .map_err(CliError::from)
                .and_then(|p| leakage_point(&p, &modes, v, &opts));
            (delta, t, rec)
        })
        .collect();

    let mut header: Vec<String> = vec!["delta".into(), "t".into()];
    header.extend((1..=n).map(|l| format!("n_{l}")));
    for h in [
        "com_fidelity",
        "gap",
        "com_purity",
        "p_exact",
        "complete",
        "error",
        "beta_variant",
        "eta",
        "omega",
        "n_ions",
        "alpha",
        "weights",
        "max_terms",
        "version",
    ] {
        header.push(h.into());
    }
    let weights =
        serde_json::to_string(&plan.all_weights()).map_err(|e| CliError::Solver(e.to_string()))?;
    let alpha = format!("{},{}", fmt_float(plan.alpha.re), fmt_float(plan.alpha.im));
    let rows: Vec<Vec<String>> = points
        .into_iter()
        .map(|(delta, t, rec)| {
            let mut row = vec![fmt_float(delta), fmt_float(t)];
            match rec {
                Ok(r) => {
                    row.extend(r.report.per_mode_mean_phonon.iter().map(|x| fmt_float(*x)));
                    row.push(fmt_float(r.report.com_fidelity_vs_ideal));
                    row.push(fmt_float(r.report.factorization_gap));
                    row.push(fmt_float(r.report.com_purity));
                    row.push(fmt_float(r.p_exact));
                    row.push("true".into());
                    row.push(String::new());
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(String::new(), n + 4));
                    row.push("false".into());
                    row.push(e.to_string());
                }
            }
            row.extend([
                v.to_string(),
                fmt_float(plan.params.eta),
                fmt_float(plan.params.omega),
                n.to_string(),
                alpha.clone(),
                weights.clone(),
                opts.max_terms.to_string(),
                ile_core::VERSION.to_string(),
            ]);
            row
        })
        .collect();
    csv_text(&header, &rows)
}

pub fn modes(args: &ModesArgs) -> Result<String> {
    let (geometry, table) = modes_for(args.ions)?;
    let record = ModesRecord::new(&geometry, &table);
    match args.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Resolved {
                n_ions: usize,
            }
            json_document("modes", &Resolved { n_ions: args.ions }, &record)
        }
        Format::Csv => {
            let n = args.ions;
            let mut header: Vec<String> = vec!["mode".into(), "mu".into()];
            header.extend((1..=n).map(|i| format!("b_{i}")));
            header.extend(["position".into(), "n_ions".into(), "version".into()]);
            let rows = (0..n)
                .map(|l| {
                    let mut row = vec![(l + 1).to_string(), fmt_float(record.mu[l])];
                    row.extend(record.b[l].iter().map(|x| fmt_float(*x)));
                    // ion l's equilibrium position, so the table carries the geometry too
                    row.push(fmt_float(record.positions[l]));
                    row.push(n.to_string());
                    row.push(ile_core::VERSION.to_string());
                    row
                })
                .collect::<Vec<_>>();
            csv_text(&header, &rows)
        }
    }
}

pub fn fit(args: &FitArgs) -> Result<String> {
    let target: FockVector = read_json(&args.input)?;
    let alpha = parse_complex("--alpha", &args.alpha)?;
    let beta = parse_complex("--beta", &args.beta)?;
    let result = fit_target(&target, args.n, alpha, beta)?;
    #[derive(Serialize)]
    struct Resolved {
        n: usize,
        alpha: Complex64,
        beta: Complex64,
        cutoff: usize,
    }
    json_document(
        "fit",
        &Resolved {
            n: args.n,
            alpha,
            beta,
            cutoff: target.cutoff(),
        },
        &result,
    )
}

pub fn validate(args: &ValidateArgs) -> Result<String> {
    let plan = load_plan(&args.input, &args.overrides.set)?;
    let [Cycle { duration, weights }] = plan.cycles.as_slice() else {
        return Err(input_err("validate takes a plan with exactly one cycle"));
    };
    let (_, modes) = modes_for(plan.params.n_ions)?;
    let cfg = TrotterConfig {
        cutoff: args.cutoff,
        steps: args.steps,
        include_full_eq2_terms: args.full,
        weights: Some(weights.clone()),
        alpha: plan.alpha,
    };
    let report = trotter_validate(&plan.params, &modes, *duration, &cfg)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        plan: &'a ProtocolPlan,
        params: PhysicalParams,
        config: &'a TrotterConfig,
    }
    json_document(
        "validate",
        &Resolved {
            plan: &plan,
            params: plan.params,
            config: &cfg,
        },
        &report,
    )
}
