//! Exact minimum-cost bijection between two equal-size point sets under
//! squared Euclidean cost.
//!
//! Shortest augmenting path Hungarian method with row and column potentials,
//! `O(n³)`. Scans run over increasing indices with strict comparisons, and
//! cloud points with identical coordinates receive their (interchangeable)
//! targets in increasing index order, so equal inputs always give equal maps.

use crate::error::{Error, Result};

/// Optimal bijection: cloud point `i` goes to grid point `target[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub target: Vec<usize>,
    /// `Σ_i ‖g_{target[i]} − x_i‖²`, summed in cloud order.
    pub cost: f64,
}

impl Assignment {
    /// Inverse map: grid point `j` receives cloud point `source[j]`.
    pub fn source(&self) -> Vec<usize> {
        let mut inv = vec![0; self.target.len()];
        for (i, &j) in self.target.iter().enumerate() {
            inv[j] = i;
        }
        inv
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Total cost of mapping `cloud[i]` to `grid[target[i]]`.
pub fn assignment_cost(cloud: &[Vec<f64>], grid: &[Vec<f64>], target: &[usize]) -> f64 {
    target
        .iter()
        .enumerate()
        .map(|(i, &j)| squared_distance(&cloud[i], &grid[j]))
        .sum()
}

pub fn solve_assignment(cloud: &[Vec<f64>], grid: &[Vec<f64>]) -> Result<Assignment> {
    let n = cloud.len();
    if grid.len() != n {
        return Err(Error::validation(format!(
            "cloud has {n} points but grid has {}",
            grid.len()
        )));
    }
    if n == 0 {
        return Ok(Assignment {
            target: Vec::new(),
            cost: 0.0,
        });
    }
    let dim = cloud[0].len();
    if cloud.iter().chain(grid).any(|p| p.len() != dim) {
        return Err(Error::validation("points of differing dimension"));
    }
    if let Some(i) = cloud.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::validation(format!("cloud point {i} is not finite")));
    }

    let cost: Vec<f64> = cloud
        .iter()
        .flat_map(|x| grid.iter().map(move |g| squared_distance(x, g)))
        .collect();
    let mut target = hungarian(&cost, n);
    canonicalize_duplicates(cloud, &mut target);
    let total = assignment_cost(cloud, grid, &target);
    Ok(Assignment {
        target,
        cost: total,
    })
}

/// Row-major `n × n` cost matrix; returns the column assigned to each row.
fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-based internally; index 0 is the virtual root column
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![f64::INFINITY; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = row[j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut target = vec![0usize; n];
    for j in 1..=n {
        target[row_of[j] - 1] = j - 1;
    }
    target
}

/// Identical cloud points have identical cost rows; hand their targets out in
/// increasing order of cloud index.
fn canonicalize_duplicates(cloud: &[Vec<f64>], target: &mut [usize]) {
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    let key = |i: usize| &cloud[i];
    order.sort_by(|&a, &b| {
        key(a)
            .iter()
            .zip(key(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && cloud[order[end]] == cloud[order[start]] {
            end += 1;
        }
        if end - start > 1 {
            let members = &order[start..end];
            let mut targets: Vec<usize> = members.iter().map(|&i| target[i]).collect();
            targets.sort_unstable();
            for (&i, t) in members.iter().zip(targets) {
                target[i] = t;
            }
        }
        start = end;
    }
}
