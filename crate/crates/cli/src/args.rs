use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ile",
    version,
    about = "Plan and simulate coherent-state line superpositions on a trapped-ion COM mode"
)]
pub struct Cli {
    /// Write the result here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find ion weights that realize target coefficients.
    Plan(PlanArgs),
    /// Run a plan and report coefficients and success probabilities.
    Simulate(SimulateArgs),
    /// Spectator-mode leakage of a plan, optionally swept over delta or t.
    Leakage(LeakageArgs),
    /// Equilibrium positions and normal modes of an N-ion chain.
    Modes(ModesArgs),
    /// Best line superposition approximating a Fock-basis target.
    Fit(FitArgs),
    /// Check the closed-form displacements against direct time stepping.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Target JSON: {"coeffs": [[re, im], ...]}.
    #[arg(long)]
    pub input: PathBuf,
    /// Also list every surviving branch.
    #[arg(long)]
    pub all: bool,
    #[arg(long, default_value_t = 64)]
    pub max_branches: usize,
    /// Largest accepted projective residual.
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Override a plan parameter (eta, omega, delta, t); repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Plan JSON.
    #[arg(long)]
    pub input: PathBuf,
    /// Also dump the state in the Fock basis up to this cutoff.
    #[arg(long, value_name = "CUTOFF")]
    pub fock: Option<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct BetaChoice {
    /// Time-integrated displacements (default).
    #[arg(long, conflicts_with = "paper_beta")]
    pub integrated: bool,
    /// Displacements growing linearly in t.
    #[arg(long)]
    pub paper_beta: bool,
}

#[derive(Debug, Args)]
pub struct LeakageArgs {
    /// Plan JSON.
    #[arg(long)]
    pub input: PathBuf,
    /// Sweep `delta` or `t` over COUNT evenly spaced points; writes CSV.
    #[arg(long, value_name = "NAME=START:STOP:COUNT")]
    pub sweep: Option<String>,
    #[command(flatten)]
    pub beta: BetaChoice,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ModesArgs {
    /// Number of ions.
    #[arg(long)]
    pub ions: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Fock amplitudes JSON: [[re, im], ...].
    #[arg(long)]
    pub input: PathBuf,
    /// Number of conditioning steps; the fit uses n + 1 components.
    #[arg(long)]
    pub n: usize,
    /// Initial coherent amplitude as `re,im`.
    #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
    pub alpha: String,
    /// Step displacement as `re,im`.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: String,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Plan JSON with one cycle and at most two ions.
    #[arg(long)]
    pub input: PathBuf,
    /// Fock cutoff per mode.
    #[arg(long, default_value_t = 20)]
    pub cutoff: usize,
    /// Coarsest step count; the run also uses 2x and 4x.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Include the carrier and counter-rotating terms.
    #[arg(long)]
    pub full: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}
