//! Conditional-measurement engineering of coherent-state superpositions on
//! the centre-of-mass mode of a linear ion chain.

pub mod chain;
pub mod error;
pub mod fock;
pub mod inverse;
pub mod io;
pub mod multimode;
pub mod poly;
pub mod protocol;

pub use chain::{
    equilibrium_positions, lamb_dicke, modes_for, normal_modes, ChainGeometry, LambDickeTable,
    ModeTable,
};
pub use error::{Error, Result};
pub use fock::{coherent_fock, displacement_matrix, fidelity_pure, DisplacementMatrix, FockVector};
pub use inverse::{
    best_realization, fit_target, solve_weights, FitResult, SolveOptions, TargetCoefficients,
    WeightSolution,
};
pub use multimode::{
    cycle_displacements, leakage_report, run_conditional_exact, run_conditional_factorized,
    trotter_validate, BetaVariant, DisplacementPlanEntry, ExpansionOptions, LeakageReport,
    MultimodeSuperposition, TrotterConfig, TrotterReport,
};
pub use num_complex::Complex64;

/// Library version, echoed in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use protocol::{
    beta_of, forward_coeffs, run_ideal, success_probability_exact, success_probability_nominal,
    Cycle, LineSuperposition, PhysicalParams, ProtocolPlan, ProtocolResult,
};
