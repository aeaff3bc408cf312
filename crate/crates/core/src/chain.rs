//! Linear ion crystal: equilibrium positions, axial normal modes and
//! per-ion Lamb-Dicke parameters.
//!
//! Units are dimensionless. Lengths are measured in the Coulomb-harmonic
//! length scale, so the potential is `V(u) = sum u_i^2/2 + sum_{i<j} 1/|u_i - u_j|`,
//! and frequencies are in units of the COM frequency.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_IONS: usize = 64;
const COM_SNAP_TOL: f64 = 1e-9;

const GRADIENT_TOLERANCE: f64 = 1e-12;
const MAX_NEWTON_ITERATIONS: usize = 200;
const MIN_EIGEN_GAP: f64 = 1e-6;

/// Equilibrium configuration of `n_ions` ions, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainGeometry {
    pub positions: Vec<f64>,
}

impl ChainGeometry {
    pub fn n_ions(&self) -> usize {
        self.positions.len()
    }

    /// Max-norm of the potential gradient at the stored positions.
    pub fn gradient_residual(&self) -> f64 {
        gradient(&self.positions).amax()
    }
}

/// Normal modes sorted by ascending frequency.
///
/// `vectors[(i, l)]` is the participation `b_i^l` of ion `i` in mode `l`;
/// columns are orthonormal and the first nonzero entry of each column is
/// positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTable {
    pub frequencies: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl ModeTable {
    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    pub fn b(&self, ion: usize, mode: usize) -> f64 {
        self.vectors[(ion, mode)]
    }

    /// Largest deviation of `B^T B` and `B B^T` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.n_modes();
        let id = DMatrix::<f64>::identity(n, n);
        let a = (self.vectors.transpose() * &self.vectors - &id).amax();
        let b = (&self.vectors * self.vectors.transpose() - &id).amax();
        a.max(b)
    }
}

/// Lamb-Dicke parameters `eta_{i,l} = eta sqrt(N) b_i^l / sqrt(mu_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambDickeTable {
    pub eta_com: f64,
    pub entries: DMatrix<f64>,
}

impl LambDickeTable {
    pub fn get(&self, ion: usize, mode: usize) -> f64 {
        self.entries[(ion, mode)]
    }
}

fn gradient(u: &[f64]) -> DVector<f64> {
    let n = u.len();
    DVector::from_fn(n, |i, _| {
        let mut g = u[i];
        for (j, &uj) in u.iter().enumerate() {
            if j != i {
                let d = u[i] - uj;
                g -= d.signum() / (d * d);
            }
        }
        g
    })
}

fn hessian(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = 1.0;
        for j in 0..n {
            if j != i {
                let c = 2.0 / (u[i] - u[j]).abs().powi(3);
                h[(i, i)] += c;
                h[(i, j)] = -c;
            }
        }
    }
    h
}

fn potential(u: &[f64]) -> f64 {
    let mut v = 0.0;
    for i in 0..u.len() {
        v += 0.5 * u[i] * u[i];
        for j in i + 1..u.len() {
            v += 1.0 / (u[i] - u[j]).abs();
        }
    }
    v
}

fn strictly_ascending(u: &[f64]) -> bool {
    u.windows(2).all(|w| w[0] < w[1])
}

/// Equilibrium positions by damped Newton iteration on the potential
/// gradient, starting from a uniform chain of half-length `N^0.56`.
pub fn equilibrium_positions(n_ions: usize) -> Result<ChainGeometry> {
    if n_ions == 0 || n_ions > MAX_IONS {
        return Err(Error::input(format!(
            "n_ions must lie in 1..={MAX_IONS}, got {n_ions}"
        )));
    }
    if n_ions == 1 {
        return Ok(ChainGeometry {
            positions: vec![0.0],
        });
    }
    let half = (n_ions as f64).powf(0.56);
    let mut u: Vec<f64> = (0..n_ions)
        .map(|i| -half + 2.0 * half * i as f64 / (n_ions - 1) as f64)
        .collect();

    let mut residual = gradient(&u).amax();
    for _ in 0..MAX_NEWTON_ITERATIONS {
        if residual <= GRADIENT_TOLERANCE {
            break;
        }
        let g = gradient(&u);
        let step = hessian(&u)
            .cholesky()
            .ok_or_else(|| {
                Error::numerical("Hessian lost positive definiteness during relaxation")
            })?
            .solve(&g);
        // backtrack until the ordering survives and the energy does not rise
        let v0 = potential(&u);
        let mut lambda = 1.0;
        let next = loop {
            let trial: Vec<f64> = u
                .iter()
                .zip(step.iter())
                .map(|(x, s)| x - lambda * s)
                .collect();
            if strictly_ascending(&trial) && potential(&trial) <= v0 + 1e-14 * v0.abs() {
                break Some(trial);
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                break None;
            }
        };
        match next {
            Some(t) => u = t,
            None => {
                return Err(Error::NoConvergence {
                    message: format!("line search stalled for N={n_ions}"),
                    residual,
                })
            }
        }
        // the true equilibrium is mirror symmetric
        let mirrored: Vec<f64> = (0..n_ions)
            .map(|i| 0.5 * (u[i] - u[n_ions - 1 - i]))
            .collect();
        u = mirrored;
        residual = gradient(&u).amax();
    }
    if residual > 1e-10 {
        return Err(Error::NoConvergence {
            message: format!(
                "equilibrium for N={n_ions} not reached in {MAX_NEWTON_ITERATIONS} iterations"
            ),
            residual,
        });
    }
    Ok(ChainGeometry { positions: u })
}

/// Diagonalizes the Hessian of the potential at equilibrium.
pub fn normal_modes(geometry: &ChainGeometry) -> Result<ModeTable> {
    let n = geometry.n_ions();
    if n == 0 {
        return Err(Error::input("empty chain"));
    }
    if !strictly_ascending(&geometry.positions) {
        return Err(Error::input("positions must be strictly ascending"));
    }
    let eig = SymmetricEigen::new(hessian(&geometry.positions));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut frequencies = Vec::with_capacity(n);
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (l, &idx) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[idx];
        if lambda <= 0.0 {
            return Err(Error::numerical(format!(
                "non-positive Hessian eigenvalue {lambda:e}; geometry is not an equilibrium"
            )));
        }
        if l > 0 && lambda.sqrt() - frequencies[l - 1] < MIN_EIGEN_GAP {
            return Err(Error::numerical(format!(
                "degenerate mode frequencies near {:.9}",
                lambda.sqrt()
            )));
        }
        frequencies.push(lambda.sqrt());
        let mut col = eig.eigenvectors.column(idx).into_owned();
        col /= col.norm();
        let lead = col.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
        if lead < 0.0 {
            col = -col;
        }
        vectors.set_column(l, &col);
    }
    // At equilibrium the COM pair is exactly (1, 1/sqrt(N)); remove the
    // eigensolver roundoff so downstream identities hold to the last bit.
    let uniform = 1.0 / (n as f64).sqrt();
    if (frequencies[0] - 1.0).abs() < COM_SNAP_TOL
        && vectors
            .column(0)
            .iter()
            .all(|b| (b - uniform).abs() < COM_SNAP_TOL)
    {
        frequencies[0] = 1.0;
        vectors.column_mut(0).fill(uniform);
    }
    Ok(ModeTable {
        frequencies,
        vectors,
    })
}

/// Equilibrium plus normal modes in one call.
pub fn modes_for(n_ions: usize) -> Result<(ChainGeometry, ModeTable)> {
    let geometry = equilibrium_positions(n_ions)?;
    let modes = normal_modes(&geometry)?;
    Ok((geometry, modes))
}

pub fn lamb_dicke(modes: &ModeTable, eta: f64) -> Result<LambDickeTable> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::input(format!(
            "Lamb-Dicke parameter must be positive, got {eta}"
        )));
    }
    let n = modes.n_modes();
    let sqrt_n = (n as f64).sqrt();
    let entries = DMatrix::from_fn(n, n, |i, l| {
        eta * sqrt_n * modes.b(i, l) / modes.frequencies[l].sqrt()
    });
    Ok(LambDickeTable {
        eta_com: eta,
        entries,
    })
}
