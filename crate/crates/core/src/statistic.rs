//! Pairwise two-sample statistics and the vector statistic `T`.
//!
//! The characteristic-functional Cramér–von Mises statistic integrates
//! `|φ̂_j(w) − φ̂_l(w)|²` against a centred Gaussian measure with covariance
//! `V`. Integrating each `exp(i⟨w, x − y⟩)` term against that measure gives
//! the Gaussian kernel
//!
//! ```text
//! k(x, y) = exp(−½ (x − y)ᵀ D V D (x − y)),   D = diag(Δ_1, …, Δ_J)
//! ```
//!
//! so the statistic is an MMD-type sum over within- and between-sample kernel
//! values. [`ecf_cvm_oracle`] evaluates the same integral by Monte Carlo and is
//! kept independent of the kernel path.

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::curves::{weighted_dot, Curve, FunctionalSample, PooledDataset, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::{check_psd, check_symmetric, psd_sqrt, sorted_eigen};

/// Relative tolerance for the symmetry and PSD checks on weight matrices.
pub const MATRIX_TOL: f64 = 1e-10;

/// Eigenvalues at or below this fraction of the largest are never inverted.
pub const EIGEN_THRESHOLD: f64 = 1e-10;

/// Default number of leading eigenvalues kept by the approximate inverse.
pub const DEFAULT_RANK: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Identity,
    InvOverall,
    InvPooled,
    Custom,
}

/// The `J × J` matrix `V = (v(t_i, t_j))` defining the Gaussian measure.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
    provenance: Provenance,
    /// Number of eigenpairs kept, for truncated inverses.
    rank: Option<usize>,
}

impl WeightMatrix {
    /// Validates symmetry and positive semidefiniteness.
    pub fn new(entries: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        check_symmetric(&entries, MATRIX_TOL, "weight matrix")?;
        check_psd(&sorted_eigen(&entries), MATRIX_TOL, "weight matrix")?;
        Ok(WeightMatrix {
            entries,
            provenance,
            rank: None,
        })
    }

    pub fn identity(j: usize) -> Self {
        WeightMatrix {
            entries: DMatrix::identity(j, j),
            provenance: Provenance::Identity,
            rank: None,
        }
    }

    /// `V = 0`; used when the data carry no variation at all.
    pub fn zeros(j: usize, provenance: Provenance) -> Self {
        WeightMatrix {
            entries: DMatrix::zeros(j, j),
            provenance,
            rank: Some(0),
        }
    }

    /// Read a `J × J` matrix from delimited text (comma, tab or whitespace).
    pub fn from_reader<R: std::io::Read>(mut source: R) -> Result<Self> {
        let mut text = String::new();
        source.read_to_string(&mut text)?;
        let rows: Vec<Vec<f64>> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, line)| {
                line.split(|c: char| c == ',' || c == '\t' || c.is_whitespace())
                    .filter(|f| !f.is_empty())
                    .map(|f| {
                        f.parse::<f64>().map_err(|_| Error::Parse {
                            row: i + 1,
                            message: format!("'{f}' is not a number"),
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let j = rows.len();
        if let Some(i) = rows.iter().position(|r| r.len() != j) {
            return Err(Error::Parse {
                row: i + 1,
                message: format!("expected {j} entries, found {}", rows[i].len()),
            });
        }
        let entries = DMatrix::from_fn(j, j, |r, c| rows[r][c]);
        Self::new(entries, Provenance::Custom)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn rank(&self) -> Option<usize> {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMode {
    /// All `N` curves about the grand mean.
    Overall,
    /// Within-group covariances weighted by `n_j − 1`, divisor `N − K`.
    Pooled,
}

/// Sample covariance of the curve values, `J × J`.
pub fn sample_covariance(dataset: &PooledDataset, mode: CovarianceMode) -> Result<DMatrix<f64>> {
    let data = dataset.pooled_matrix();
    let groups = group_ranges(&dataset.sizes());
    let identity: Vec<usize> = (0..dataset.total()).collect();
    covariance_of(&data, &identity, &groups, mode)
}

pub(crate) fn group_ranges(sizes: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&n| {
            let r = start..start + n;
            start += n;
            r
        })
        .collect()
}

/// Sum of outer products of deviations from the mean, over `rows` of `data`.
fn scatter(data: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let j = data.ncols();
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(j);
    for &r in rows {
        mean += data.row(r).transpose();
    }
    mean /= n;
    let mut dev = DMatrix::zeros(rows.len(), j);
    for (i, &r) in rows.iter().enumerate() {
        for c in 0..j {
            dev[(i, c)] = data[(r, c)] - mean[c];
        }
    }
    dev.transpose() * dev
}

/// Covariance with `order` mapping positions to pooled rows and `groups`
/// cutting positions into samples.
fn covariance_of(
    data: &DMatrix<f64>,
    order: &[usize],
    groups: &[std::ops::Range<usize>],
    mode: CovarianceMode,
) -> Result<DMatrix<f64>> {
    let n = order.len();
    match mode {
        CovarianceMode::Overall => {
            if n < 2 {
                return Err(Error::validation(format!(
                    "overall covariance needs N ≥ 2, got {n}"
                )));
            }
            Ok(scatter(data, order) / (n - 1) as f64)
        }
        CovarianceMode::Pooled => {
            if let Some(g) = groups.iter().position(|g| g.len() < 2) {
                return Err(Error::validation(format!(
                    "pooled covariance needs every n_j ≥ 2; sample {} has {}",
                    g + 1,
                    groups[g].len()
                )));
            }
            let dof = n - groups.len();
            if dof == 0 {
                return Err(Error::validation(
                    "pooled covariance has no degrees of freedom",
                ));
            }
            let j = data.ncols();
            let mut acc = DMatrix::zeros(j, j);
            for g in groups {
                acc += scatter(data, &order[g.clone()]);
            }
            Ok(acc / dof as f64)
        }
    }
}

/// Approximate inverse from the `rank` largest eigenvalues.
///
/// Eigenvalues not exceeding [`EIGEN_THRESHOLD`] times the largest are dropped
/// even when `rank` would keep them; the rank actually used is recorded.
pub fn truncated_inverse(m: &DMatrix<f64>, rank: usize) -> Result<WeightMatrix> {
    let j = m.nrows();
    if rank == 0 || rank > j {
        return Err(Error::config(format!(
            "inverse rank must lie in 1..={j}, got {rank}"
        )));
    }
    check_symmetric(m, MATRIX_TOL, "covariance matrix")?;
    let eig = sorted_eigen(m);
    check_psd(&eig, MATRIX_TOL, "covariance matrix")?;
    let top = eig.values[0];
    let kept = eig
        .values
        .iter()
        .take(rank)
        .take_while(|&&l| top > 0.0 && l > EIGEN_THRESHOLD * top)
        .count();
    if kept == 0 {
        return Err(Error::Degenerate(format!(
            "all eigenvalues of the {j}×{j} covariance are below the inversion threshold"
        )));
    }
    let mut inv = DMatrix::zeros(j, j);
    for k in 0..kept {
        let e = eig.vectors.column(k);
        inv += (e * e.transpose()) / eig.values[k];
    }
    let inv = (&inv + inv.transpose()) * 0.5;
    Ok(WeightMatrix {
        entries: inv,
        provenance: Provenance::Custom,
        rank: Some(kept),
    })
}

/// Kernel matrix of the truncated inverse covariance operator.
///
/// The operator with kernel `C` acts on grid functions as `C D`. Its symmetric
/// form `S = D^{1/2} C D^{1/2}` is inverted from the `rank` largest eigenvalues
/// and mapped back, `V = D^{-1/2} S⁺ D^{-1/2}` (zero weights give zero rows), so
/// that `D V D = D^{1/2} S⁺ D^{1/2}` is the Mahalanobis form of the leading
/// principal components.
pub fn inverse_covariance_weight(
    cov: &DMatrix<f64>,
    grid: &TimeGrid,
    rank: usize,
) -> Result<WeightMatrix> {
    let j = grid.len();
    if cov.nrows() != j || cov.ncols() != j {
        return Err(Error::validation(format!(
            "covariance is {}×{}, grid has {j} points",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let root: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let scaled = DMatrix::from_fn(j, j, |a, b| root[a] * cov[(a, b)] * root[b]);
    let inv = truncated_inverse(&scaled, rank)?;
    let pinv_root: Vec<f64> = root
        .iter()
        .map(|&r| if r > 0.0 { 1.0 / r } else { 0.0 })
        .collect();
    let e = inv.entries();
    Ok(WeightMatrix {
        entries: DMatrix::from_fn(j, j, |a, b| pinv_root[a] * e[(a, b)] * pinv_root[b]),
        ..inv
    })
}

/// The Gaussian kernel `exp(−½ ‖Lᵀ(x − y)‖²)` with `L Lᵀ = D V D`.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    /// `J × q` factor `L`.
    factor: DMatrix<f64>,
}

impl GaussianKernel {
    pub fn new(v: &WeightMatrix, grid: &TimeGrid) -> Result<Self> {
        let j = grid.len();
        if v.dim() != j {
            return Err(Error::validation(format!(
                "weight matrix is {}×{}, grid has {j} points",
                v.dim(),
                v.dim()
            )));
        }
        let d = DVector::from_column_slice(grid.weights());
        let a = DMatrix::from_fn(j, j, |r, c| d[r] * v.entries()[(r, c)] * d[c]);
        let eig = sorted_eigen(&a);
        let q = eig.values.iter().take_while(|&&l| l > 0.0).count();
        let factor = DMatrix::from_fn(j, q, |r, c| eig.vectors[(r, c)] * eig.values[c].sqrt());
        Ok(GaussianKernel { factor })
    }

    /// Feature rows `Lᵀx` for every row `x` of `data`.
    fn features(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        data * &self.factor
    }

    pub fn eval(&self, x: &Curve, y: &Curve) -> f64 {
        let diff = DVector::from_iterator(
            x.len(),
            x.values().iter().zip(y.values()).map(|(a, b)| a - b),
        );
        let z = self.factor.tr_mul(&diff);
        (-0.5 * z.norm_squared()).exp()
    }

    /// Pooled `N × N` Gram matrix over the rows of `data`.
    fn gram(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let z = self.features(data);
        let n = z.nrows();
        let mut g = DMatrix::from_element(n, n, 1.0);
        for a in 0..n {
            for b in (a + 1)..n {
                let d2: f64 = z
                    .row(a)
                    .iter()
                    .zip(z.row(b).iter())
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum();
                let k = (-0.5 * d2).exp();
                g[(a, b)] = k;
                g[(b, a)] = k;
            }
        }
        g
    }
}

fn sample_matrix(samples: &[&FunctionalSample]) -> DMatrix<f64> {
    let curves: Vec<&Curve> = samples.iter().flat_map(|s| s.curves()).collect();
    let j = curves.first().map_or(0, |c| c.len());
    DMatrix::from_fn(curves.len(), j, |r, c| curves[r].values()[c])
}

/// `(1/n_j²) ΣΣ k(x,x') + (1/n_l²) ΣΣ k(y,y') − (2/(n_j n_l)) ΣΣ k(x,y)`,
/// with groups given as position ranges into `order`, which indexes `gram`.
fn mmd_from_gram(
    gram: &DMatrix<f64>,
    order: &[usize],
    first: std::ops::Range<usize>,
    second: std::ops::Range<usize>,
) -> f64 {
    let block = |a: &std::ops::Range<usize>, b: &std::ops::Range<usize>| -> f64 {
        let mut s = 0.0;
        for &p in &order[a.clone()] {
            for &q in &order[b.clone()] {
                s += gram[(p, q)];
            }
        }
        s / (a.len() * b.len()) as f64
    };
    let value = block(&first, &first) + block(&second, &second) - 2.0 * block(&first, &second);
    value.max(0.0)
}

/// Characteristic-functional Cramér–von Mises statistic for one pair of samples.
pub fn cf_cvm_pair(
    sample_j: &FunctionalSample,
    sample_l: &FunctionalSample,
    v: &WeightMatrix,
    grid: &TimeGrid,
) -> Result<f64> {
    sample_j.check_grid(grid)?;
    sample_l.check_grid(grid)?;
    let kernel = GaussianKernel::new(v, grid)?;
    let data = sample_matrix(&[sample_j, sample_l]);
    let gram = kernel.gram(&data);
    let (nj, nl) = (sample_j.len(), sample_l.len());
    let order: Vec<usize> = (0..nj + nl).collect();
    Ok(mmd_from_gram(&gram, &order, 0..nj, nj..nj + nl))
}

/// Empirical characteristic functional `(1/n) Σ exp(i⟨w, X_i⟩)`.
pub fn ecf_eval(sample: &FunctionalSample, w: &Curve, grid: &TimeGrid) -> Result<Complex<f64>> {
    sample.check_grid(grid)?;
    if w.len() != grid.len() {
        return Err(Error::validation(format!(
            "direction has {} values, grid has {} points",
            w.len(),
            grid.len()
        )));
    }
    Ok(ecf_at(sample, w.values(), grid.weights()))
}

fn ecf_at(sample: &FunctionalSample, w: &[f64], weights: &[f64]) -> Complex<f64> {
    let sum: Complex<f64> = sample
        .curves()
        .iter()
        .map(|x| Complex::from_polar(1.0, weighted_dot(w, x.values(), weights)))
        .sum();
    sum / sample.len() as f64
}

/// Monte Carlo estimate of the Cramér–von Mises integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub value: f64,
    pub std_error: f64,
    pub draws: usize,
    /// Set when fewer than 1000 draws were used.
    pub noisy: bool,
}

/// Average `|φ̂_j(w) − φ̂_l(w)|²` over `draws` Gaussian directions `w ~ N(0, V)`.
///
/// Directions are coloured through the eigendecomposition of `V` itself and
/// the characteristic functionals are evaluated by explicit quadrature, so no
/// part of the kernel closed form is reused.
pub fn ecf_cvm_oracle(
    sample_j: &FunctionalSample,
    sample_l: &FunctionalSample,
    v: &WeightMatrix,
    grid: &TimeGrid,
    draws: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    sample_j.check_grid(grid)?;
    sample_l.check_grid(grid)?;
    let j = grid.len();
    if v.dim() != j || draws == 0 {
        return Err(Error::validation(format!(
            "oracle needs a {j}×{j} weight matrix and at least one draw"
        )));
    }
    let eig = sorted_eigen(v.entries());
    let color = DMatrix::from_fn(j, j, |r, c| {
        eig.vectors[(r, c)] * eig.values[c].max(0.0).sqrt()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mean, mut m2) = (0.0, 0.0);
    for m in 0..draws {
        let xi = DVector::from_fn(j, |_, _| StandardNormal.sample(&mut rng));
        let w = &color * xi;
        let diff = ecf_at(sample_j, w.as_slice(), grid.weights())
            - ecf_at(sample_l, w.as_slice(), grid.weights());
        let x = diff.norm_sqr();
        // Welford update
        let delta = x - mean;
        mean += delta / (m + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = if draws > 1 {
        m2 / (draws - 1) as f64
    } else {
        0.0
    };
    Ok(OracleEstimate {
        value: mean,
        std_error: (var / draws as f64).sqrt(),
        draws,
        noisy: draws < 1000,
    })
}

/// Quadrature-scaled covariance `D^{1/2} C D^{1/2}`.
fn scaled_covariance(data: &DMatrix<f64>, rows: &[usize], sqrt_w: &[f64]) -> DMatrix<f64> {
    let c = scatter(data, rows) / (rows.len() - 1) as f64;
    DMatrix::from_fn(c.nrows(), c.ncols(), |r, k| {
        sqrt_w[r] * c[(r, k)] * sqrt_w[k]
    })
}

/// Square-root distance `‖C_j^{1/2} − C_l^{1/2}‖_F` between the two samples'
/// quadrature-scaled covariance matrices.
pub fn cov_sqrt_pair(
    sample_j: &FunctionalSample,
    sample_l: &FunctionalSample,
    grid: &TimeGrid,
) -> Result<f64> {
    sample_j.check_grid(grid)?;
    sample_l.check_grid(grid)?;
    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let data = sample_matrix(&[sample_j, sample_l]);
    let (nj, nl) = (sample_j.len(), sample_l.len());
    let rows: Vec<usize> = (0..nj + nl).collect();
    let a = psd_sqrt(&scaled_covariance(&data, &rows[..nj], &sqrt_w));
    let b = psd_sqrt(&scaled_covariance(&data, &rows[nj..], &sqrt_w));
    Ok((a - b).norm())
}

/// Which pairwise comparisons make up `T`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSelection {
    #[default]
    AllPairs,
    FirstVsRest,
    /// 1-based `(j, l)` with `j < l`.
    Custom(Vec<(usize, usize)>),
}

impl PairSelection {
    /// Selected pairs for `k` samples, 1-based and in lexicographic order.
    pub fn pairs(&self, k: usize) -> Result<Vec<(usize, usize)>> {
        let pairs = match self {
            PairSelection::AllPairs => (1..=k)
                .flat_map(|j| ((j + 1)..=k).map(move |l| (j, l)))
                .collect(),
            PairSelection::FirstVsRest => (2..=k).map(|l| (1, l)).collect(),
            PairSelection::Custom(list) => {
                for &(j, l) in list {
                    if j == 0 || l > k || j >= l {
                        return Err(Error::config(format!(
                            "pair ({j},{l}) invalid for K = {k}; need 1 ≤ j < l ≤ K"
                        )));
                    }
                }
                let mut sorted = list.clone();
                sorted.sort_unstable();
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::config("duplicate pair in selection"));
                }
                sorted
            }
        };
        if pairs.is_empty() {
            return Err(Error::validation("pair selection is empty"));
        }
        Ok(pairs)
    }
}

impl std::str::FromStr for PairSelection {
    type Err = Error;

    /// `all`, `first-vs-rest`, or a list such as `1-2,1-3` (optionally
    /// prefixed by `custom:`).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(PairSelection::AllPairs),
            "first-vs-rest" => Ok(PairSelection::FirstVsRest),
            list => list
                .strip_prefix("custom:")
                .unwrap_or(list)
                .split(',')
                .map(|item| {
                    let (j, l) = item.split_once('-').ok_or_else(|| {
                        Error::config(format!("pair '{item}' is not of the form j-l"))
                    })?;
                    let parse = |t: &str| {
                        t.trim().parse::<usize>().map_err(|_| {
                            Error::config(format!("pair '{item}' is not of the form j-l"))
                        })
                    };
                    Ok((parse(j)?, parse(l)?))
                })
                .collect::<Result<Vec<_>>>()
                .map(PairSelection::Custom),
        }
    }
}

/// `T = (S_{j,l})` over the selected pairs, lexicographically ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatVector {
    pub values: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
}

impl StatVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatKind {
    #[default]
    CfCvm,
    CovSqrt,
}

impl std::str::FromStr for StatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cf-cvm" => Ok(StatKind::CfCvm),
            "cov-sqrt" => Ok(StatKind::CovSqrt),
            other => Err(Error::config(format!(
                "statistic must be 'cf-cvm' or 'cov-sqrt', got '{other}'"
            ))),
        }
    }
}

/// Computes `T` for every selected pair of `dataset`.
pub fn pairwise_vector(
    dataset: &PooledDataset,
    stat: StatKind,
    v: Option<&WeightMatrix>,
    selection: &PairSelection,
) -> Result<StatVector> {
    let pairs = selection.pairs(dataset.k())?;
    let grid = dataset.grid();
    let samples = dataset.samples();
    let values = match (stat, v) {
        (StatKind::CfCvm, Some(v)) => pairs
            .iter()
            .map(|&(j, l)| cf_cvm_pair(&samples[j - 1], &samples[l - 1], v, grid))
            .collect::<Result<Vec<_>>>()?,
        (StatKind::CovSqrt, None) => pairs
            .iter()
            .map(|&(j, l)| cov_sqrt_pair(&samples[j - 1], &samples[l - 1], grid))
            .collect::<Result<Vec<_>>>()?,
        (StatKind::CfCvm, None) => {
            return Err(Error::validation(
                "cf-cvm statistic requires a weight matrix",
            ))
        }
        (StatKind::CovSqrt, Some(_)) => {
            return Err(Error::validation(
                "cov-sqrt statistic takes no weight matrix",
            ))
        }
    };
    Ok(StatVector { values, pairs })
}

/// How `V` is chosen for the cf-cvm statistic.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    Identity,
    /// Truncated inverse of the covariance operator of all pooled curves.
    InvOverall {
        rank: usize,
    },
    /// Truncated inverse of the pooled within-group covariance operator. Depends on the
    /// grouping, so it is recomputed for every relabelling.
    InvPooled {
        rank: usize,
    },
    Custom(WeightMatrix),
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::InvOverall { rank: DEFAULT_RANK }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatConfig {
    pub kind: StatKind,
    pub weight: WeightSpec,
    pub selection: PairSelection,
}

/// Summary of the `V` used for the observed grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub provenance: Provenance,
    pub rank: Option<usize>,
}

fn weight_from_covariance(
    cov: &DMatrix<f64>,
    grid: &TimeGrid,
    rank: usize,
    provenance: Provenance,
) -> Result<(WeightMatrix, bool)> {
    let weights = grid.weights();
    let varies = (0..cov.nrows()).any(|a| weights[a] > 0.0 && cov[(a, a)] > 0.0);
    if !varies {
        return Ok((WeightMatrix::zeros(cov.nrows(), provenance), true));
    }
    let v = inverse_covariance_weight(cov, grid, rank)?;
    Ok((v.with_provenance(provenance), false))
}

enum Prepared {
    /// Kernel does not depend on the grouping: one pooled Gram matrix.
    Gram(DMatrix<f64>),
    /// `V` from the pooled covariance of each relabelling.
    PooledWeights {
        rank: usize,
    },
    CovSqrt {
        sqrt_w: Vec<f64>,
    },
}

/// Evaluates `T` for arbitrary relabellings of one dataset.
///
/// A relabelling is an `order` over pooled indices: position `i` holds pooled
/// curve `order[i]`, and positions are cut into groups with the original sizes.
pub struct StatEvaluator {
    data: DMatrix<f64>,
    grid: TimeGrid,
    groups: Vec<std::ops::Range<usize>>,
    pairs: Vec<(usize, usize)>,
    prepared: Prepared,
    weight: Option<WeightSummary>,
    warnings: Vec<String>,
}

impl StatEvaluator {
    pub fn new(dataset: &PooledDataset, config: &StatConfig) -> Result<Self> {
        let pairs = config.selection.pairs(dataset.k())?;
        let data = dataset.pooled_matrix();
        let grid = dataset.grid().clone();
        let groups = group_ranges(&dataset.sizes());
        let j = grid.len();
        let mut warnings = Vec::new();

        let (prepared, weight) = match (config.kind, &config.weight) {
            (StatKind::CovSqrt, _) => (
                Prepared::CovSqrt {
                    sqrt_w: grid.weights().iter().map(|w| w.sqrt()).collect(),
                },
                None,
            ),
            (StatKind::CfCvm, WeightSpec::InvPooled { rank }) => {
                let identity: Vec<usize> = (0..data.nrows()).collect();
                let cov = covariance_of(&data, &identity, &groups, CovarianceMode::Pooled)?;
                let (v, degenerate) =
                    weight_from_covariance(&cov, &grid, *rank, Provenance::InvPooled)?;
                if degenerate {
                    warnings.push(
                        "pooled covariance is identically zero; V = 0 and every statistic is 0"
                            .into(),
                    );
                }
                (
                    Prepared::PooledWeights { rank: *rank },
                    Some(WeightSummary {
                        provenance: Provenance::InvPooled,
                        rank: v.rank(),
                    }),
                )
            }
            (StatKind::CfCvm, spec) => {
                let v = match spec {
                    WeightSpec::Identity => WeightMatrix::identity(j),
                    WeightSpec::Custom(v) => v.clone(),
                    WeightSpec::InvOverall { rank } => {
                        let identity: Vec<usize> = (0..data.nrows()).collect();
                        let cov =
                            covariance_of(&data, &identity, &groups, CovarianceMode::Overall)?;
                        let (v, degenerate) =
                            weight_from_covariance(&cov, &grid, *rank, Provenance::InvOverall)?;
                        if degenerate {
                            warnings.push(
                                "overall covariance is identically zero; V = 0 and every statistic is 0"
                                    .into(),
                            );
                        }
                        v
                    }
                    WeightSpec::InvPooled { .. } => unreachable!(),
                };
                let kernel = GaussianKernel::new(&v, &grid)?;
                let summary = WeightSummary {
                    provenance: v.provenance(),
                    rank: v.rank(),
                };
                (Prepared::Gram(kernel.gram(&data)), Some(summary))
            }
        };

        Ok(StatEvaluator {
            data,
            grid,
            groups,
            pairs,
            prepared,
            weight,
            warnings,
        })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn weight(&self) -> Option<&WeightSummary> {
        self.weight.as_ref()
    }

    /// Notes about degenerate input discovered while preparing.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn pooled_len(&self) -> usize {
        self.data.nrows()
    }

    /// `T` for the observed grouping.
    pub fn observed(&self) -> Result<StatVector> {
        let identity: Vec<usize> = (0..self.data.nrows()).collect();
        self.evaluate(&identity)
    }

    pub fn evaluate(&self, order: &[usize]) -> Result<StatVector> {
        if order.len() != self.data.nrows() {
            return Err(Error::validation(format!(
                "relabelling has {} entries, dataset has {}",
                order.len(),
                self.data.nrows()
            )));
        }
        let values = match &self.prepared {
            Prepared::Gram(gram) => self.mmd_values(gram, order),
            Prepared::PooledWeights { rank } => {
                let cov = covariance_of(&self.data, order, &self.groups, CovarianceMode::Pooled)?;
                let (v, _) =
                    weight_from_covariance(&cov, &self.grid, *rank, Provenance::InvPooled)?;
                let kernel = GaussianKernel::new(&v, &self.grid)?;
                self.mmd_values(&kernel.gram(&self.data), order)
            }
            Prepared::CovSqrt { sqrt_w } => {
                let k = self.groups.len();
                let mut roots: Vec<Option<DMatrix<f64>>> = vec![None; k];
                for &(j, l) in &self.pairs {
                    for g in [j - 1, l - 1] {
                        if roots[g].is_none() {
                            let rows = &order[self.groups[g].clone()];
                            roots[g] = Some(psd_sqrt(&scaled_covariance(&self.data, rows, sqrt_w)));
                        }
                    }
                }
                self.pairs
                    .iter()
                    .map(|&(j, l)| match (&roots[j - 1], &roots[l - 1]) {
                        (Some(a), Some(b)) => (a - b).norm(),
                        _ => unreachable!("roots computed above"),
                    })
                    .collect()
            }
        };
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("statistic evaluated to {bad}")));
        }
        Ok(StatVector {
            values,
            pairs: self.pairs.clone(),
        })
    }

    fn mmd_values(&self, gram: &DMatrix<f64>, order: &[usize]) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|&(j, l)| {
                mmd_from_gram(
                    gram,
                    order,
                    self.groups[j - 1].clone(),
                    self.groups[l - 1].clone(),
                )
            })
            .collect()
    }
}
