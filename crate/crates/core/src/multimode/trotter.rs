//! Direct time stepping of the spin (x) motion state, used to referee the
//! closed-form displacements.
//!
//! Spins are stored in the `sigma_y` eigenbasis, where the interaction
//! Hamiltonian is diagonal in the spin index: each spin configuration just
//! drives every mode with a time-dependent linear force. A step at midpoint
//! time `t_m` applies, for each configuration and mode,
//! `D(2 i eta Omega dt theta_l e_l(t_m) / sqrt(mu_l))` with
//! `theta_l = sqrt(N)/2 sum_i b_i^l s_i`. The `J_x` drive, when enabled, is
//! a Strang half step on either side.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{cycle_displacements, expand_exact, BetaVariant, ExpansionOptions};
use crate::chain::ModeTable;
use crate::error::{Error, Result};
use crate::fock::{coherent_fock, displacement_matrix, TAIL_WINDOW};
use crate::protocol::{PhysicalParams, ProtocolPlan};

const MAX_TROTTER_IONS: usize = 2;
const MAX_FOCK_DIM: usize = 10_000;
/// Step-halving deviations below this are treated as converged to roundoff.
const DEVIATION_FLOOR: f64 = 1e-11;
/// Accepted band for the step-halving ratio of a second-order scheme.
const RATIO_BAND: (f64, f64) = (2.0, 8.0);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrotterConfig {
    /// Per-mode Fock cutoff.
    pub cutoff: usize,
    pub steps: usize,
    /// Adds the `J_x` carrier drive and the counter-rotating `mu + delta` terms.
    pub include_full_eq2_terms: bool,
    /// Ion weights `p_i`; zeros when absent.
    #[serde(default)]
    pub weights: Option<Vec<Complex64>>,
    #[serde(default)]
    pub alpha: Complex64,
}

impl Default for TrotterConfig {
    fn default() -> Self {
        Self {
            cutoff: 20,
            steps: 200,
            include_full_eq2_terms: false,
            weights: None,
            alpha: c(0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullTermsEffect {
    pub steps: usize,
    /// Fidelity between the conditional states with and without the extra terms.
    pub fidelity_vs_rwa: f64,
    pub probability_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrotterReport {
    pub steps: usize,
    pub fidelity_integrated: f64,
    pub fidelity_paper: f64,
    pub success_probability: f64,
    /// `|psi_s - psi_2s|` and `|psi_2s - psi_4s|` of the conditional state.
    pub step_deviations: [f64; 2],
    /// Ratio of the two deviations; absent when both sit at roundoff.
    pub convergence_ratio: Option<f64>,
    /// Largest weight in the top Fock levels of any mode.
    pub tail_weight: f64,
    pub full_terms: Option<FullTermsEffect>,
    /// Conditional motional state at `4 * steps`, product Fock basis.
    #[serde(skip)]
    pub state: Vec<Complex64>,
}

struct Layout {
    n: usize,
    dim: usize,
    mdim: usize,
    configs: usize,
}

impl Layout {
    fn stride(&self, mode: usize) -> usize {
        self.dim.pow((self.n - 1 - mode) as u32)
    }

    /// `sigma_y` eigenvalue of ion `i` in configuration `s` (bit clear = +1).
    fn spin(s: usize, i: usize) -> f64 {
        if s >> i & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

struct Problem<'a> {
    params: &'a PhysicalParams,
    modes: &'a ModeTable,
    t: f64,
    layout: Layout,
    weights: Vec<Complex64>,
    alpha: Complex64,
    cutoff: usize,
}

impl Problem<'_> {
    fn theta(&self, s: usize, l: usize) -> f64 {
        let n = self.layout.n;
        let sum: f64 = (0..n)
            .map(|i| self.modes.b(i, l) * Layout::spin(s, i))
            .sum();
        (n as f64).sqrt() / 2.0 * sum
    }

    fn initial(&self) -> Result<Vec<Complex64>> {
        let lay = &self.layout;
        let com = coherent_fock(self.alpha, self.cutoff)?;
        // |alpha> on mode 0, vacuum elsewhere
        let stride0 = lay.stride(0);
        let mut motion = vec![c(0.0, 0.0); lay.mdim];
        for (k, a) in com.amplitudes().iter().enumerate() {
            motion[k * stride0] = *a;
        }
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let amps: Vec<[Complex64; 2]> = self
            .weights
            .iter()
            .map(|p| {
                let norm = 1.0 / (1.0 + p.norm_sqr()).sqrt();
                [c(0.0, r) * (p - 1.0) * norm, c(0.0, r) * (p + 1.0) * norm]
            })
            .collect();
        let mut psi = vec![c(0.0, 0.0); lay.configs * lay.mdim];
        for s in 0..lay.configs {
            let w: Complex64 = (0..lay.n).map(|i| amps[i][s >> i & 1]).product();
            for (dst, m) in psi[s * lay.mdim..(s + 1) * lay.mdim]
                .iter_mut()
                .zip(&motion)
            {
                *dst = w * m;
            }
        }
        Ok(psi)
    }

    /// Projects every ion onto `|1>`.
    fn condition(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let lay = &self.layout;
        let proj = [
            c(0.0, std::f64::consts::FRAC_1_SQRT_2),
            c(0.0, -std::f64::consts::FRAC_1_SQRT_2),
        ];
        let mut out = vec![c(0.0, 0.0); lay.mdim];
        for s in 0..lay.configs {
            let w: Complex64 = (0..lay.n).map(|i| proj[s >> i & 1]).product();
            for (o, v) in out.iter_mut().zip(&psi[s * lay.mdim..(s + 1) * lay.mdim]) {
                *o += w * v;
            }
        }
        out
    }

    fn rotate_spins(&self, psi: &mut [Complex64], phi: f64) {
        let lay = &self.layout;
        let (cs, sn) = (phi.cos(), phi.sin());
        for i in 0..lay.n {
            for s in (0..lay.configs).filter(|s| s >> i & 1 == 0) {
                let s2 = s | 1 << i;
                for k in 0..lay.mdim {
                    let a = psi[s * lay.mdim + k];
                    let b = psi[s2 * lay.mdim + k];
                    psi[s * lay.mdim + k] = a * cs - b * sn;
                    psi[s2 * lay.mdim + k] = a * sn + b * cs;
                }
            }
        }
    }

    fn displace(&self, psi: &mut [Complex64], tm: f64, dt: f64, full: bool) -> Result<()> {
        let lay = &self.layout;
        let eo = self.params.eta * self.params.omega;
        let mut scratch = vec![c(0.0, 0.0); lay.dim];
        for l in 0..lay.n {
            let mu = self.modes.frequencies[l];
            let mut e = c(0.0, (mu - self.params.delta) * tm).exp();
            if full {
                e += c(0.0, (mu + self.params.delta) * tm).exp();
            }
            let stride = lay.stride(l);
            for s in 0..lay.configs {
                let theta = self.theta(s, l);
                if theta.abs() < 1e-15 {
                    continue;
                }
                let gamma = c(0.0, 2.0 * eo * dt * theta / mu.sqrt()) * e;
                let d = displacement_matrix(gamma, self.cutoff)?;
                let block = &mut psi[s * lay.mdim..(s + 1) * lay.mdim];
                for base in 0..lay.mdim {
                    if !(base / stride).is_multiple_of(lay.dim) {
                        continue;
                    }
                    for (m, out) in scratch.iter_mut().enumerate() {
                        *out = (0..lay.dim)
                            .map(|k| d.entry(m, k) * block[base + k * stride])
                            .sum();
                    }
                    for (m, v) in scratch.iter().enumerate() {
                        block[base + m * stride] = *v;
                    }
                }
            }
        }
        Ok(())
    }

    /// Conditional motional state after `steps` midpoint steps.
    fn evolve(&self, steps: usize, full: bool) -> Result<Vec<Complex64>> {
        let mut psi = self.initial()?;
        let dt = self.t / steps as f64;
        for k in 0..steps {
            let tm = (k as f64 + 0.5) * dt;
            let half = self.params.omega * (self.params.delta * tm).cos() * dt;
            if full {
                self.rotate_spins(&mut psi, half);
            }
            self.displace(&mut psi, tm, dt, full)?;
            if full {
                self.rotate_spins(&mut psi, half);
            }
        }
        Ok(self.condition(&psi))
    }

    fn prediction(&self, variant: BetaVariant) -> Result<Vec<Complex64>> {
        let plan = ProtocolPlan::from_weights(*self.params, self.alpha, self.t, &self.weights)?;
        let betas = cycle_displacements(self.modes, self.params, self.t, variant)?;
        expand_exact(&plan, &betas, &ExpansionOptions::default())?
            .state
            .to_fock(self.cutoff)
    }

    fn tail_weight(&self, state: &[Complex64]) -> f64 {
        let lay = &self.layout;
        let total: f64 = state.iter().map(|z| z.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        (0..lay.n)
            .map(|l| {
                let stride = lay.stride(l);
                let w: f64 = state
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| (k / stride) % lay.dim + TAIL_WINDOW > self.cutoff)
                    .map(|(_, z)| z.norm_sqr())
                    .sum();
                w / total
            })
            .fold(0.0, f64::max)
    }
}

fn distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn vector_fidelity(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::numerical("fidelity of a zero-norm state"));
    }
    let ov: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    Ok((ov.norm_sqr() / (na * nb)).clamp(0.0, 1.0))
}

/// Conditional motional state from stepping alone, in the product Fock
/// basis (mode 0 most significant).
pub fn trotter_state(
    params: &PhysicalParams,
    modes: &ModeTable,
    t: f64,
    cfg: &TrotterConfig,
) -> Result<Vec<Complex64>> {
    problem(params, modes, t, cfg)?.evolve(cfg.steps, cfg.include_full_eq2_terms)
}

fn problem<'a>(
    params: &'a PhysicalParams,
    modes: &'a ModeTable,
    t: f64,
    cfg: &TrotterConfig,
) -> Result<Problem<'a>> {
    params.validate()?;
    let n = params.n_ions;
    if n > MAX_TROTTER_IONS {
        return Err(Error::input(format!(
            "stepping supports at most {MAX_TROTTER_IONS} ions, got {n}"
        )));
    }
    if modes.n_modes() != n {
        return Err(Error::input("mode table does not match the ion count"));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::input("duration must be positive"));
    }
    if cfg.steps < 10 {
        return Err(Error::input("at least 10 steps are required"));
    }
    if cfg.cutoff < 2 {
        return Err(Error::input("cutoff must be at least 2"));
    }
    let dim = cfg.cutoff + 1;
    let mdim = dim.pow(n as u32);
    if mdim > MAX_FOCK_DIM {
        return Err(Error::input(format!(
            "Fock dimension {mdim} exceeds {MAX_FOCK_DIM}"
        )));
    }
    let weights = cfg.weights.clone().unwrap_or_else(|| vec![c(0.0, 0.0); n]);
    if weights.len() != n || weights.iter().any(|p| !p.is_finite()) {
        return Err(Error::input(format!("expected {n} finite weights")));
    }
    if !cfg.alpha.is_finite() {
        return Err(Error::input("alpha must be finite"));
    }
    Ok(Problem {
        params,
        modes,
        t,
        layout: Layout {
            n,
            dim,
            mdim,
            configs: 1 << n,
        },
        weights,
        alpha: cfg.alpha,
        cutoff: cfg.cutoff,
    })
}

/// Steps the rotating-wave Hamiltonian at `steps`, `2 steps` and `4 steps`,
/// compares the finest state against both closed-form predictions, and
/// optionally measures the effect of the terms the rotating-wave form drops.
pub fn trotter_validate(
    params: &PhysicalParams,
    modes: &ModeTable,
    t: f64,
    cfg: &TrotterConfig,
) -> Result<TrotterReport> {
    let prob = problem(params, modes, t, cfg)?;
    let s1 = prob.evolve(cfg.steps, false)?;
    let s2 = prob.evolve(2 * cfg.steps, false)?;
    let s4 = prob.evolve(4 * cfg.steps, false)?;
    let d1 = distance(&s1, &s2);
    let d2 = distance(&s2, &s4);
    let convergence_ratio = if d2 > DEVIATION_FLOOR {
        Some(d1 / d2)
    } else {
        None
    };
    if let Some(r) = convergence_ratio {
        if !(RATIO_BAND.0..=RATIO_BAND.1).contains(&r) {
            return Err(Error::NoConvergence {
                message: format!(
                    "step-halving ratio {r:.3} is outside [{}, {}]",
                    RATIO_BAND.0, RATIO_BAND.1
                ),
                residual: d2,
            });
        }
    }
    let fidelity_integrated = vector_fidelity(&s4, &prob.prediction(BetaVariant::Integrated)?)?;
    let fidelity_paper = vector_fidelity(&s4, &prob.prediction(BetaVariant::Paper)?)?;
    let success_probability = s4.iter().map(|z| z.norm_sqr()).sum();

    let full_terms = if cfg.include_full_eq2_terms {
        // resolve the carrier and counter-rotating oscillations
        let fastest = modes.frequencies.iter().fold(0.0, |m: f64, &x| m.max(x)) + params.delta;
        let steps = (4 * cfg.steps).max((8.0 * fastest * t).ceil() as usize);
        let rwa = if steps == 4 * cfg.steps {
            s4.clone()
        } else {
            prob.evolve(steps, false)?
        };
        let full = prob.evolve(steps, true)?;
        let p_full: f64 = full.iter().map(|z| z.norm_sqr()).sum();
        let p_rwa: f64 = rwa.iter().map(|z| z.norm_sqr()).sum();
        Some(FullTermsEffect {
            steps,
            fidelity_vs_rwa: vector_fidelity(&full, &rwa)?,
            probability_shift: p_full - p_rwa,
        })
    } else {
        None
    };

    Ok(TrotterReport {
        steps: 4 * cfg.steps,
        fidelity_integrated,
        fidelity_paper,
        success_probability,
        step_deviations: [d1, d2],
        convergence_ratio,
        tail_weight: prob.tail_weight(&s4),
        full_terms,
        state: s4,
    })
}
