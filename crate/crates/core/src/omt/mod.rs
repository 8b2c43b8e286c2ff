//! Combining the vector statistic into one p-value by optimal transport.
//!
//! The replica cloud `{T_0, …, T_B}` is matched to the grid of [`grid`] by the
//! cost-minimizing bijection. A replica is "more extreme" when its image lies
//! on a radius at least as large as the image of `T_0`.

pub mod assignment;
pub mod grid;
pub mod halton;
pub mod sphere;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::permutation::ReplicaSet;

pub use assignment::{solve_assignment, Assignment};
pub use grid::{build_grid, check_factorization, DirectionSet, GridSet, GridSpec};
pub use halton::{halton, radical_inverse};
pub use sphere::{tau_map, tau_map_general};

#[derive(Debug, Clone, PartialEq)]
pub struct OmtResult {
    pub grid: GridSet,
    pub assignment: Assignment,
    /// `F*(T_0)`.
    pub image_of_t0: Vec<f64>,
    /// Radius label `i` of `F*(T_0)`.
    pub radius_of_t0: usize,
    pub p_hat: f64,
    pub p_tilde: f64,
    /// `(1 − p̃)²`.
    pub nonconformity: f64,
    /// `D_j² = F*_j(T_0)² / ‖F*(T_0)‖²`.
    pub contributions: Vec<f64>,
}

/// Classical one-sided permutation test, used when `T` has a single component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnivariateResult {
    pub p_hat: f64,
    /// `#{b : T_b ≥ T_0}`.
    pub exceedances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestOutcome {
    Omt(OmtResult),
    Univariate(UnivariateResult),
}

impl TestOutcome {
    pub fn p_hat(&self) -> f64 {
        match self {
            TestOutcome::Omt(r) => r.p_hat,
            TestOutcome::Univariate(r) => r.p_hat,
        }
    }
}

/// Grid, assignment, p-values and contributions for a replica set.
///
/// `n_R · n_S` must equal `B + 1`. One-dimensional statistics bypass the grid
/// and use the classical count `(1 + #{T_b ≥ T_0}) / (B + 1)`.
pub fn evaluate(replicas: &ReplicaSet, n_r: usize, n_s: usize) -> Result<TestOutcome> {
    let b = replicas.replicas.len();
    if b != replicas.plan.replicas {
        return Err(Error::validation(format!(
            "replica set holds {b} replicas, plan says {}",
            replicas.plan.replicas
        )));
    }
    check_factorization(b, n_r, n_s)?;
    let d = replicas.dim();
    if let Some(k) = replicas.replicas.iter().position(|t| t.dim() != d) {
        return Err(Error::validation(format!(
            "replica {} has dimension {}, expected {d}",
            k + 1,
            replicas.replicas[k].dim()
        )));
    }
    if d == 1 {
        let t0 = replicas.t0.values[0];
        let exceedances = replicas
            .replicas
            .iter()
            .filter(|t| t.values[0] >= t0)
            .count();
        return Ok(TestOutcome::Univariate(UnivariateResult {
            p_hat: (1 + exceedances) as f64 / (b + 1) as f64,
            exceedances,
        }));
    }

    let spec = GridSpec::new(n_r, n_s, d)?;
    let grid = build_grid(&spec)?;
    let cloud = replicas.cloud();
    let assignment = solve_assignment(&cloud, &grid.points)?;

    let radius_of = |i: usize| grid.radius_index[assignment.target[i]];
    let radius_of_t0 = radius_of(0);
    let exceed = (1..=b).filter(|&i| radius_of(i) >= radius_of_t0).count();
    let p_hat = (1 + exceed) as f64 / (b + 1) as f64;
    let p_tilde = 1.0 - radius_of_t0 as f64 / (n_r + 1) as f64;
    let nonconformity = (1.0 - p_tilde).powi(2);

    let image_of_t0 = grid.points[assignment.target[0]].clone();
    let norm2: f64 = image_of_t0.iter().map(|v| v * v).sum();
    let contributions = image_of_t0.iter().map(|v| v * v / norm2).collect();

    Ok(TestOutcome::Omt(OmtResult {
        grid,
        assignment,
        image_of_t0,
        radius_of_t0,
        p_hat,
        p_tilde,
        nonconformity,
        contributions,
    }))
}

/// Writes `cloud.csv`, `grid.csv` and `map.csv` into `dir` for external plotting.
pub fn dump_points(dir: &Path, replicas: &ReplicaSet, result: &OmtResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let d = replicas.dim();
    let coords = |prefix: &str| {
        (1..=d)
            .map(|k| format!("{prefix}{k}"))
            .collect::<Vec<_>>()
            .join(",")
    };

    let mut cloud = std::io::BufWriter::new(std::fs::File::create(dir.join("cloud.csv"))?);
    writeln!(cloud, "index,{}", coords("t"))?;
    for (i, point) in replicas.cloud().iter().enumerate() {
        writeln!(cloud, "{i},{}", join(point))?;
    }
    cloud.flush()?;

    let mut grid = std::io::BufWriter::new(std::fs::File::create(dir.join("grid.csv"))?);
    writeln!(grid, "index,radius,direction,{}", coords("g"))?;
    for (p, point) in result.grid.points.iter().enumerate() {
        writeln!(
            grid,
            "{p},{},{},{}",
            result.grid.radius_index[p],
            result.grid.direction_index[p],
            join(point)
        )?;
    }
    grid.flush()?;

    let mut map = std::io::BufWriter::new(std::fs::File::create(dir.join("map.csv"))?);
    writeln!(map, "cloud_index,grid_index")?;
    for (i, j) in result.assignment.target.iter().enumerate() {
        writeln!(map, "{i},{j}")?;
    }
    map.flush()?;
    Ok(())
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(",")
}
