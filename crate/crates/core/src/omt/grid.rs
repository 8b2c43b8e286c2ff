//! The target grid `g_ij = i/(n_R + 1) · s_j` in the positive-orthant unit ball.

use serde::{Deserialize, Serialize};

use super::halton::halton;
use super::sphere::tau_map;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of radii `n_R`.
    pub n_r: usize,
    /// Number of directions `n_S`.
    pub n_s: usize,
    pub dim: usize,
}

impl GridSpec {
    pub fn new(n_r: usize, n_s: usize, dim: usize) -> Result<Self> {
        if n_r == 0 || n_s == 0 {
            return Err(Error::config(format!(
                "grid needs n_R ≥ 1 and n_S ≥ 1, got n_R = {n_r}, n_S = {n_s}"
            )));
        }
        if dim < 2 {
            return Err(Error::config(format!(
                "grid dimension must be ≥ 2, got {dim}"
            )));
        }
        Ok(GridSpec { n_r, n_s, dim })
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_s
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The grid must have exactly one point per element of `{T_0, …, T_B}`.
    pub fn check_replicas(&self, replicas: usize) -> Result<()> {
        check_factorization(replicas, self.n_r, self.n_s)
    }
}

pub fn check_factorization(replicas: usize, n_r: usize, n_s: usize) -> Result<()> {
    if replicas + 1 != n_r * n_s {
        return Err(Error::config(format!(
            "B + 1 = {} must equal n_R · n_S = {n_r} · {n_s} = {}",
            replicas + 1,
            n_r * n_s
        )));
    }
    Ok(())
}

/// Unit directions in `[0, 1]^d` from mapped Halton points.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    pub directions: Vec<Vec<f64>>,
}

impl DirectionSet {
    pub fn halton(count: usize, dim: usize) -> Result<Self> {
        let directions = halton(count, dim - 1)
            .iter()
            .map(|x| tau_map(x, dim))
            .collect::<Result<Vec<_>>>()?;
        for a in 0..directions.len() {
            for b in (a + 1)..directions.len() {
                if directions[a] == directions[b] {
                    return Err(Error::Internal(format!("directions {a} and {b} coincide")));
                }
            }
        }
        Ok(DirectionSet { directions })
    }
}

/// Grid points ordered by radius (innermost first), then by direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSet {
    pub spec: GridSpec,
    pub points: Vec<Vec<f64>>,
    /// 1-based radius label `i` of each point.
    pub radius_index: Vec<usize>,
    /// 1-based direction label `j` of each point.
    pub direction_index: Vec<usize>,
}

impl GridSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nominal radius `i/(n_R + 1)` of point `p`.
    pub fn radius(&self, p: usize) -> f64 {
        self.radius_index[p] as f64 / (self.spec.n_r + 1) as f64
    }
}

pub fn build_grid(spec: &GridSpec) -> Result<GridSet> {
    let dirs = DirectionSet::halton(spec.n_s, spec.dim)?;
    let scale = (spec.n_r + 1) as f64;
    let mut points = Vec::with_capacity(spec.len());
    let mut radius_index = Vec::with_capacity(spec.len());
    let mut direction_index = Vec::with_capacity(spec.len());
    for i in 1..=spec.n_r {
        let r = i as f64 / scale;
        for (j, s) in dirs.directions.iter().enumerate() {
            points.push(s.iter().map(|c| r * c).collect());
            radius_index.push(i);
            direction_index.push(j + 1);
        }
    }
    Ok(GridSet {
        spec: *spec,
        points,
        radius_index,
        direction_index,
    })
}
