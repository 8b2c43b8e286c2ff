//! Brownian-motion scenarios for size and power checks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::curves::{Curve, FunctionalSample, PooledDataset, QuadratureRule, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Process {
    /// Standard Brownian motion in every group.
    Brownian,
    /// Adds `delta · t` to the curves of the listed (1-based) groups.
    MeanShift { delta: f64, groups: Vec<usize> },
    /// Multiplies group `k`'s curves by `sigma[k]`.
    Scale { sigma: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub sizes: Vec<usize>,
    /// Number of equispaced points `J` on `[0, 1]`.
    pub grid_len: usize,
    pub process: Process,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 {
            return Err(Error::config("scenario needs K ≥ 2 groups"));
        }
        if self.sizes.iter().any(|&n| n < 2) {
            return Err(Error::config(
                "every scenario group needs at least 2 curves",
            ));
        }
        if self.grid_len < 2 {
            return Err(Error::config("scenario needs J ≥ 2"));
        }
        match &self.process {
            Process::Brownian => {}
            Process::MeanShift { delta, groups } => {
                if !delta.is_finite() {
                    return Err(Error::config("mean shift must be finite"));
                }
                if groups.iter().any(|&g| g == 0 || g > self.sizes.len()) {
                    return Err(Error::config("mean-shift group index out of range"));
                }
            }
            Process::Scale { sigma } => {
                if sigma.len() != self.sizes.len() {
                    return Err(Error::config(format!(
                        "need one scale per group ({}), got {}",
                        self.sizes.len(),
                        sigma.len()
                    )));
                }
                if sigma.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
                    return Err(Error::config("scales must be positive and finite"));
                }
            }
        }
        Ok(())
    }
}

/// Draws the scenario's curves; the same spec always yields the same dataset.
pub fn generate(spec: &ScenarioSpec) -> Result<PooledDataset> {
    spec.validate()?;
    let grid = TimeGrid::equispaced(spec.grid_len, QuadratureRule::Trapezoid)?;
    let steps: Vec<f64> = grid
        .points()
        .windows(2)
        .map(|w| (w[1] - w[0]).sqrt())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samples = spec
        .sizes
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let (shift, scale) = match &spec.process {
                Process::Brownian => (0.0, 1.0),
                Process::MeanShift { delta, groups } => (
                    if groups.contains(&(g + 1)) {
                        *delta
                    } else {
                        0.0
                    },
                    1.0,
                ),
                Process::Scale { sigma } => (0.0, sigma[g]),
            };
            let curves = (0..n)
                .map(|_| {
                    let mut x = 0.0;
                    let mut values = Vec::with_capacity(grid.len());
                    values.push(0.0);
                    for sd in &steps {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x += sd * z;
                        values.push(x);
                    }
                    let values = values
                        .iter()
                        .zip(grid.points())
                        .map(|(v, t)| scale * v + shift * t)
                        .collect();
                    Curve::new(values)
                })
                .collect::<Result<Vec<_>>>()?;
            FunctionalSample::new(format!("{}", g + 1), curves)
        })
        .collect::<Result<Vec<_>>>()?;
    PooledDataset::new(grid, samples)
}
