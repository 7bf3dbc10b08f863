//! Generators for the three benchmark systems with known coupling structure.
//!
//! - S1: a five-variable VAR(4) process driven by unit Gaussian innovations.
//! - S2: a five-variable stochastic system mixing linear and quadratic
//!   couplings, all ultimately driven by an AR(2) first variable.
//! - S3: a lattice of coupled Henon maps of configurable size K; the end
//!   nodes run free and every interior node is driven by both neighbors with
//!   coupling strength c.
//!
//! Realizations are bit-reproducible functions of the seed. S1/S2 start from
//! a zero state, S3 from uniform(-0.5, 0.5) initial conditions with a
//! restart-on-divergence guard (chaotic maps can escape for unlucky starts).
//! The first `burn_in` generated steps are always discarded.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::CouplingMatrix;
use crate::rng::{rng_from, stream};
use crate::timeseries::Dataset;

/// Default number of discarded initial steps.
pub const DEFAULT_BURN_IN: usize = 1000;
const MIN_BURN_IN: usize = 100;
const DIVERGENCE_BOUND: f64 = 10.0;
const MAX_RESTARTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemId {
    S1,
    S2,
    S3,
}

impl std::fmt::Display for SystemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SystemId::S1 => write!(f, "s1"),
            SystemId::S2 => write!(f, "s2"),
            SystemId::S3 => write!(f, "s3"),
        }
    }
}

impl std::str::FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(SystemId::S1),
            "s2" => Ok(SystemId::S2),
            "s3" => Ok(SystemId::S3),
            other => Err(Error::InvalidParameter(format!("unknown system '{other}'"))),
        }
    }
}

/// Full description of one simulated realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub id: SystemId,
    pub k: usize,
    /// Coupling strength, used by S3 only.
    pub c: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl SystemSpec {
    pub fn new(id: SystemId, k: usize, c: f64, burn_in: usize, seed: u64) -> Result<Self> {
        match id {
            SystemId::S1 | SystemId::S2 => {
                if k != 5 {
                    return Err(Error::InvalidParameter(format!(
                        "{id} is a fixed five-variable system, got K={k}"
                    )));
                }
            }
            SystemId::S3 => {
                if k < 3 {
                    return Err(Error::InvalidParameter(format!(
                        "s3 needs K >= 3 variables, got K={k}"
                    )));
                }
            }
        }
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidParameter(format!("coupling c must lie in [0,1], got {c}")));
        }
        if burn_in < MIN_BURN_IN {
            return Err(Error::InvalidParameter(format!(
                "burn_in must be >= {MIN_BURN_IN}, got {burn_in}"
            )));
        }
        Ok(Self { id, k, c, burn_in, seed })
    }

    pub fn s1(seed: u64) -> Self {
        Self { id: SystemId::S1, k: 5, c: 0.0, burn_in: DEFAULT_BURN_IN, seed }
    }

    pub fn s2(seed: u64) -> Self {
        Self { id: SystemId::S2, k: 5, c: 0.0, burn_in: DEFAULT_BURN_IN, seed }
    }

    pub fn s3(k: usize, c: f64, seed: u64) -> Result<Self> {
        Self::new(SystemId::S3, k, c, DEFAULT_BURN_IN, seed)
    }

    /// Embedding dimension implied by the maximum lag of the equations.
    pub fn default_m(&self) -> usize {
        match self.id {
            SystemId::S1 => 4,
            SystemId::S2 => 3,
            SystemId::S3 => 2,
        }
    }

    /// Ground-truth direct-coupling adjacency, derived from which lagged
    /// variables enter each update equation.
    pub fn truth(&self) -> CouplingMatrix {
        match self.id {
            // 5->1, 1->2, 5->2, 5->3, 1->4, 2->4, 4->5 (0-based below)
            SystemId::S1 => CouplingMatrix::from_edges(
                5,
                &[(4, 0), (0, 1), (4, 1), (4, 2), (0, 3), (1, 3), (3, 4)],
            ),
            // 1->2, 1->3, 1->4, 4->5, 5->4
            SystemId::S2 => {
                CouplingMatrix::from_edges(5, &[(0, 1), (0, 2), (0, 3), (3, 4), (4, 3)])
            }
            // interior node i is driven by both lattice neighbors
            SystemId::S3 => {
                let mut edges = Vec::new();
                for i in 1..self.k - 1 {
                    edges.push((i - 1, i));
                    edges.push((i + 1, i));
                }
                CouplingMatrix::from_edges(self.k, &edges)
            }
        }
    }

    pub fn labels(&self) -> Vec<String> {
        (1..=self.k).map(|i| format!("X{i}")).collect()
    }

    pub fn simulate(&self, n: usize) -> Result<Dataset> {
        if n < 1 {
            return Err(Error::InvalidParameter("simulation length must be >= 1".into()));
        }
        let rows = match self.id {
            SystemId::S1 => s1_rows(n, self.burn_in, self.seed, 1.0),
            SystemId::S2 => s2_rows(n, self.burn_in, self.seed, 1.0),
            SystemId::S3 => s3_rows(n, self.k, self.c, self.burn_in, self.seed)?,
        };
        let cols: Vec<Vec<f64>> =
            (0..self.k).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Dataset::from_columns(&cols, self.labels())
    }
}

/// VAR(4) benchmark (S1) with unit-variance Gaussian innovations.
pub fn simulate_s1(n: usize, seed: u64) -> Result<Dataset> {
    SystemSpec::s1(seed).simulate(n)
}

/// Mixed linear/quadratic stochastic benchmark (S2).
pub fn simulate_s2(n: usize, seed: u64) -> Result<Dataset> {
    SystemSpec::s2(seed).simulate(n)
}

/// Coupled Henon lattice (S3) in K variables with coupling strength c.
pub fn simulate_s3(n: usize, k: usize, c: f64, seed: u64) -> Result<Dataset> {
    SystemSpec::s3(k, c, seed)?.simulate(n)
}

fn s1_rows(n: usize, burn_in: usize, seed: u64, noise_std: f64) -> Vec<Vec<f64>> {
    let total = burn_in + n;
    // four leading zero rows form the initial state
    let mut x = vec![vec![0.0f64; 5]; total + 4];
    let mut rng = rng_from(seed, &[stream::SIMULATE]);
    for t in 4..total + 4 {
        let mut e = [0.0f64; 5];
        for v in &mut e {
            *v = noise_std * rng.sample::<f64, _>(StandardNormal);
        }
        x[t][0] = 0.4 * x[t - 1][0] - 0.5 * x[t - 2][0] + 0.4 * x[t - 1][4] + e[0];
        x[t][1] = 0.4 * x[t - 1][1] - 0.3 * x[t - 4][0] + 0.4 * x[t - 2][4] + e[1];
        x[t][2] = 0.5 * x[t - 1][2] - 0.7 * x[t - 2][2] - 0.3 * x[t - 3][4] + e[2];
        x[t][3] = 0.8 * x[t - 3][3] + 0.4 * x[t - 2][0] + 0.3 * x[t - 3][1] + e[3];
        x[t][4] = 0.7 * x[t - 1][4] - 0.5 * x[t - 2][4] - 0.4 * x[t - 1][3] + e[4];
    }
    x.split_off(4 + burn_in)
}

fn s2_rows(n: usize, burn_in: usize, seed: u64, noise_std: f64) -> Vec<Vec<f64>> {
    let r2 = std::f64::consts::SQRT_2;
    let total = burn_in + n;
    let mut x = vec![vec![0.0f64; 5]; total + 3];
    let mut rng = rng_from(seed, &[stream::SIMULATE]);
    for t in 3..total + 3 {
        let mut e = [0.0f64; 5];
        for v in &mut e {
            *v = noise_std * rng.sample::<f64, _>(StandardNormal);
        }
        x[t][0] = 0.95 * r2 * x[t - 1][0] - 0.9025 * x[t - 2][0] + e[0];
        x[t][1] = 0.5 * x[t - 2][0] * x[t - 2][0] + e[1];
        x[t][2] = -0.4 * x[t - 3][0] + e[2];
        x[t][3] = -0.5 * x[t - 2][0] * x[t - 2][0]
            + 0.25 * r2 * x[t - 1][3]
            + 0.25 * r2 * x[t - 1][4]
            + e[3];
        x[t][4] = -0.25 * r2 * x[t - 1][3] + 0.25 * r2 * x[t - 1][4] + e[4];
    }
    x.split_off(3 + burn_in)
}

fn s3_rows(n: usize, k: usize, c: f64, burn_in: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let total = burn_in + n;
    'attempt: for attempt in 0..MAX_RESTARTS {
        let mut rng = rng_from(seed, &[stream::SIMULATE, attempt as u64]);
        let mut x = vec![vec![0.0f64; k]; total + 2];
        for t in 0..2 {
            for i in 0..k {
                x[t][i] = rng.gen_range(-0.5..0.5);
            }
        }
        for t in 2..total + 2 {
            for i in 0..k {
                let drive = if i == 0 || i == k - 1 {
                    x[t - 1][i]
                } else {
                    0.5 * c * (x[t - 1][i - 1] + x[t - 1][i + 1]) + (1.0 - c) * x[t - 1][i]
                };
                let v = 1.4 - drive * drive + 0.3 * x[t - 2][i];
                if v.abs() > DIVERGENCE_BOUND {
                    continue 'attempt;
                }
                x[t][i] = v;
            }
        }
        return Ok(x.split_off(2 + burn_in));
    }
    Err(Error::DivergenceAfterRetries { attempts: MAX_RESTARTS })
}
