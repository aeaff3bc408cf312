//! Record types for the JSON files exchanged with the command line tool.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainGeometry, ModeTable};
use crate::multimode::LeakageReport;
use crate::protocol::ProtocolResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub beta: Complex64,
    pub coeffs: Vec<Complex64>,
    pub p_nominal: f64,
    pub p_exact: f64,
    pub per_cycle: Vec<f64>,
}

impl From<&ProtocolResult> for SimulationRecord {
    fn from(r: &ProtocolResult) -> Self {
        Self {
            beta: r.state.beta,
            coeffs: r.state.coeffs.clone(),
            p_nominal: r.p_nominal,
            p_exact: r.p_exact,
            per_cycle: r.per_cycle_p_exact.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageRecord {
    #[serde(flatten)]
    pub report: LeakageReport,
    pub p_exact: f64,
}

/// `b[l]` is the participation vector of mode `l` across the ions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModesRecord {
    pub mu: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub positions: Vec<f64>,
}

impl ModesRecord {
    pub fn new(geometry: &ChainGeometry, modes: &ModeTable) -> Self {
        let n = modes.n_modes();
        Self {
            mu: modes.frequencies.clone(),
            b: (0..n)
                .map(|l| (0..n).map(|i| modes.b(i, l)).collect())
                .collect(),
            positions: geometry.positions.clone(),
        }
    }
}
