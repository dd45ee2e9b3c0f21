//! Seeded single-objective test problems.
//!
//! Ten BBOB-style base functions with a simplified instance model: each
//! instance rotates (non-separable functions only), shifts and offsets the
//! base function using a stream seeded by `(fid, instance, dim)`. Instance 0
//! is the untransformed function.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::engine::Objective;
use crate::error::{contract, Error, Result};
use crate::seed::{derive, domain};

pub const FUNCTION_IDS: [u32; 10] = [1, 2, 3, 5, 8, 10, 12, 14, 15, 20];
pub const MULTIMODAL_IDS: [u32; 3] = [3, 15, 20];

const SCHWEFEL_OPT: f64 = 4.209_687_462_275_036e2;
const SLOPE_OPT: f64 = 5.0;

pub fn is_multimodal(fid: u32) -> bool {
    MULTIMODAL_IDS.contains(&fid)
}

pub fn function_name(fid: u32) -> Option<&'static str> {
    Some(match fid {
        1 => "sphere",
        2 => "ellipsoid",
        3 => "rastrigin",
        5 => "linear slope",
        8 => "rosenbrock",
        10 => "rotated ellipsoid",
        12 => "bent cigar",
        14 => "different powers",
        15 => "rotated rastrigin",
        20 => "schwefel",
        _ => return None,
    })
}

fn rotated(fid: u32) -> bool {
    matches!(fid, 10 | 12 | 14 | 15)
}

/// One instance of a test function.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub fid: u32,
    pub instance: u32,
    pub dim: usize,
    pub rotation: DMatrix<f64>,
    pub x_opt: Vec<f64>,
    pub f_opt: f64,
}

/// Build instance `instance` of function `fid` in dimension `dim`.
pub fn make_problem(fid: u32, instance: u32, dim: usize) -> Result<Problem> {
    if !FUNCTION_IDS.contains(&fid) {
        return Err(Error::UnsupportedFunction(fid));
    }
    if dim < 2 {
        return Err(contract(format!("problem dimension must be at least 2, got {dim}")));
    }
    if instance == 0 {
        let x_opt = if fid == 5 { vec![SLOPE_OPT; dim] } else { vec![0.0; dim] };
        return Ok(Problem { fid, instance, dim, rotation: DMatrix::identity(dim, dim), x_opt, f_opt: 0.0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(
        domain::PROBLEM,
        &[fid as u64, instance as u64, dim as u64],
    ));
    let rotation = if rotated(fid) { random_rotation(dim, &mut rng) } else { DMatrix::identity(dim, dim) };
    let x_opt: Vec<f64> = if fid == 5 {
        (0..dim)
            .map(|_| if rng.random::<bool>() { SLOPE_OPT } else { -SLOPE_OPT })
            .collect()
    } else {
        (0..dim).map(|_| rng.random_range(-4.0..=4.0)).collect()
    };
    let f_opt = rng.random_range(-100.0..=100.0);
    Ok(Problem { fid, instance, dim, rotation, x_opt, f_opt })
}

/// Haar-distributed orthogonal matrix from the QR factors of a Gaussian matrix.
fn random_rotation(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl Problem {
    pub fn id(&self) -> String {
        self.to_string()
    }

    /// Objective value at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::InvalidLength { expected: self.dim, got: x.len() });
        }
        Ok(self.eval_unchecked(x))
    }

    /// Target value `f_opt + precision`.
    pub fn target_for(&self, precision: f64) -> f64 {
        target_for(self, precision)
    }

    fn transformed(&self, x: &[f64]) -> Vec<f64> {
        let shifted: Vec<f64> = x.iter().zip(&self.x_opt).map(|(a, b)| a - b).collect();
        if !rotated(self.fid) {
            return shifted;
        }
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.rotation[(i, j)] * shifted[j]).sum())
            .collect()
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let n = self.dim as f64;
        let ratio = |i: usize| i as f64 / (n - 1.0);
        let base = match self.fid {
            1 => self.transformed(x).iter().map(|z| z * z).sum(),
            2 | 10 => self
                .transformed(x)
                .iter()
                .enumerate()
                .map(|(i, z)| 10f64.powf(6.0 * ratio(i)) * z * z)
                .sum(),
            3 | 15 => {
                let z = self.transformed(x);
                10.0 * (n - z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>())
                    + z.iter().map(|v| v * v).sum::<f64>()
            }
            5 => x
                .iter()
                .zip(&self.x_opt)
                .enumerate()
                .map(|(i, (&xi, &opt))| {
                    let s = opt.signum() * 10f64.powf(ratio(i));
                    let xi = if opt * xi < SLOPE_OPT * SLOPE_OPT { xi } else { opt };
                    SLOPE_OPT * s.abs() - s * xi
                })
                .sum(),
            8 => {
                let scale = (n.sqrt() / 8.0).max(1.0);
                let z: Vec<f64> = self.transformed(x).iter().map(|v| scale * v + 1.0).collect();
                z.windows(2)
                    .map(|w| 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2))
                    .sum()
            }
            12 => {
                let z = self.transformed(x);
                z[0] * z[0] + 1e6 * z[1..].iter().map(|v| v * v).sum::<f64>()
            }
            14 => self
                .transformed(x)
                .iter()
                .enumerate()
                .map(|(i, z)| z.abs().powf(2.0 + 4.0 * ratio(i)))
                .sum::<f64>()
                .sqrt(),
            20 => {
                let z: Vec<f64> = self.transformed(x).iter().map(|u| 100.0 * u + SCHWEFEL_OPT).collect();
                let g = |v: f64| v * v.abs().sqrt().sin();
                let penalty: f64 = z.iter().map(|v| (v.abs() / 100.0 - 5.0).max(0.0).powi(2)).sum();
                -z.iter().map(|&v| g(v)).sum::<f64>() / (100.0 * n) + g(SCHWEFEL_OPT) / 100.0
                    + 100.0 * penalty
            }
            _ => unreachable!("fid checked at construction"),
        };
        base + self.f_opt
    }
}

/// Target value `f_opt + precision`.
pub fn target_for(problem: &Problem, precision: f64) -> f64 {
    problem.f_opt + precision
}

impl Objective for Problem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval_unchecked(x)
    }

    fn fid(&self) -> u32 {
        self.fid
    }

    fn instance(&self) -> u32 {
        self.instance
    }

    fn optimum(&self) -> Option<f64> {
        Some(self.f_opt)
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}_I{}_D{}", self.fid, self.instance, self.dim)
    }
}

/// Parsed form of a `F<fid>_I<instance>_D<dim>` identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProblemId {
    pub fid: u32,
    pub instance: u32,
    pub dim: usize,
}

impl ProblemId {
    pub fn build(&self) -> Result<Problem> {
        make_problem(self.fid, self.instance, self.dim)
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("problem id {s:?} is not of the form F<fid>_I<instance>_D<dim>"));
        let parts: Vec<&str> = s.split('_').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let num = |p: &str, prefix: char| p.strip_prefix(prefix).and_then(|v| v.parse::<u64>().ok());
        match (num(parts[0], 'F'), num(parts[1], 'I'), num(parts[2], 'D')) {
            (Some(f), Some(i), Some(d)) => Ok(ProblemId { fid: f as u32, instance: i as u32, dim: d as usize }),
            _ => Err(bad()),
        }
    }
}
