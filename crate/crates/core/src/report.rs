//! End-to-end runs: ingestion, statistic, permutation replicas, transport
//! combination, and the JSON report.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::curves::{load_curves, IngestFormat, LabelColumn, PooledDataset, QuadratureRule};
use crate::error::{Error, Result};
use crate::omt::{check_factorization, dump_points, evaluate, TestOutcome};
use crate::permutation::{replicate_with, PermutationPlan, ReplicaSet};
use crate::statistic::{
    PairSelection, StatConfig, StatEvaluator, StatKind, WeightMatrix, WeightSpec, WeightSummary,
    DEFAULT_RANK,
};

pub const SCHEMA_VERSION: u32 = 1;

/// How the weight matrix `V` is obtained.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VChoice {
    Identity,
    #[default]
    InvOverall,
    InvPooled,
    Custom(PathBuf),
}

impl std::str::FromStr for VChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(VChoice::Identity),
            "inv-overall" => Ok(VChoice::InvOverall),
            "inv-pooled" => Ok(VChoice::InvPooled),
            other => match other.strip_prefix("custom:") {
                Some(path) if !path.is_empty() => Ok(VChoice::Custom(PathBuf::from(path))),
                _ => Err(Error::config(format!(
                    "v-matrix must be identity, inv-overall, inv-pooled or custom:<path>, got '{other}'"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub label_column: LabelColumn,
    pub has_header: bool,
    pub statistic: StatKind,
    pub v_matrix: VChoice,
    /// Eigenpairs kept by the approximate inverse.
    pub rank: usize,
    pub pairs: PairSelection,
    /// Number of permutation replicas `B`.
    pub replicas: usize,
    pub n_r: usize,
    pub n_s: usize,
    pub seed: u64,
    pub quadrature: QuadratureRule,
    pub output: PathBuf,
    /// Directory for `cloud.csv`, `grid.csv` and `map.csv`.
    pub emit_points: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: PathBuf::new(),
            label_column: LabelColumn::default(),
            has_header: true,
            statistic: StatKind::CfCvm,
            v_matrix: VChoice::InvOverall,
            rank: DEFAULT_RANK,
            pairs: PairSelection::AllPairs,
            replicas: 999,
            n_r: 40,
            n_s: 25,
            seed: 1,
            quadrature: QuadratureRule::Trapezoid,
            output: PathBuf::from("report.json"),
            emit_points: None,
        }
    }
}

impl RunConfig {
    /// Checks that need no data: `B ≥ 1`, `r ≥ 1`, and `B + 1 = n_R · n_S`.
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::config("replicas (B) must be ≥ 1"));
        }
        if self.rank == 0 {
            return Err(Error::config("rank (r) must be ≥ 1"));
        }
        check_factorization(self.replicas, self.n_r, self.n_s)
    }

    pub fn stat_config(&self) -> Result<StatConfig> {
        let weight = match &self.v_matrix {
            VChoice::Identity => WeightSpec::Identity,
            VChoice::InvOverall => WeightSpec::InvOverall { rank: self.rank },
            VChoice::InvPooled => WeightSpec::InvPooled { rank: self.rank },
            VChoice::Custom(path) => {
                let file = File::open(path).map_err(|e| {
                    Error::config(format!("cannot open v-matrix file {}: {e}", path.display()))
                })?;
                WeightSpec::Custom(WeightMatrix::from_reader(file)?)
            }
        };
        Ok(StatConfig {
            kind: self.statistic,
            weight,
            selection: self.pairs.clone(),
        })
    }

    pub fn ingest_format(&self) -> IngestFormat {
        IngestFormat {
            delimiter: None,
            has_header: self.has_header,
            label_column: self.label_column.clone(),
            rule: self.quadrature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub groups: Vec<GroupSummary>,
    pub grid_len: usize,
    pub pooled_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub pair: (usize, usize),
    pub labels: (String, String),
    pub t0: f64,
    /// Relative contribution `D²`; absent for one-dimensional statistics.
    pub contribution: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Optimal-transport combination of a vector statistic.
    Omt,
    /// Classical permutation p-value for a single pairwise statistic.
    Univariate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema_version: u32,
    pub software_version: String,
    pub config: RunConfig,
    pub data: DataSummary,
    pub weight: Option<WeightSummary>,
    pub method: Method,
    pub pairs: Vec<PairReport>,
    pub p_hat: f64,
    pub p_tilde: Option<f64>,
    pub nonconformity: Option<f64>,
    pub image_of_t0: Option<Vec<f64>>,
    pub radius_of_t0: Option<usize>,
    pub warnings: Vec<String>,
    pub timing_ms: f64,
}

impl TestReport {
    /// The report without timing and version, for reproducibility comparisons.
    pub fn payload(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("timing_ms");
            map.remove("software_version");
        }
        Ok(serde_json::to_string(&value)?)
    }

    pub fn contributions(&self) -> Option<Vec<f64>> {
        self.pairs.iter().map(|p| p.contribution).collect()
    }
}

/// Everything computed by one analysis.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: TestReport,
    pub replicas: ReplicaSet,
    pub outcome: TestOutcome,
}

/// Runs the test on an in-memory dataset. `config.input` and `config.output`
/// are only echoed.
pub fn analyze(dataset: &PooledDataset, config: &RunConfig) -> Result<Analysis> {
    let started = Instant::now();
    config.validate()?;
    let dataset = if dataset.grid().rule() == config.quadrature {
        dataset.clone()
    } else {
        dataset.clone().with_rule(config.quadrature)
    };
    let stat_config = config.stat_config()?;
    let plan = PermutationPlan::new(config.replicas, config.seed)?;
    let evaluator = StatEvaluator::new(&dataset, &stat_config)?;
    let replicas = replicate_with(&evaluator, &plan)?;
    let outcome = evaluate(&replicas, config.n_r, config.n_s)?;

    let mut warnings = evaluator.warnings().to_vec();
    if replicas.t0.is_zero() {
        warnings.push("observed statistic is identically zero (degenerate data)".into());
    }

    let labels: Vec<&str> = dataset.samples().iter().map(|s| s.label()).collect();
    let contributions = match &outcome {
        TestOutcome::Omt(r) => r.contributions.iter().map(|&c| Some(c)).collect(),
        TestOutcome::Univariate(_) => vec![None; replicas.dim()],
    };
    let pairs = replicas
        .t0
        .pairs
        .iter()
        .zip(&replicas.t0.values)
        .zip(contributions)
        .map(|((&(j, l), &t0), contribution)| PairReport {
            pair: (j, l),
            labels: (labels[j - 1].to_string(), labels[l - 1].to_string()),
            t0,
            contribution,
        })
        .collect();

    let (method, p_tilde, nonconformity, image_of_t0, radius_of_t0) = match &outcome {
        TestOutcome::Omt(r) => (
            Method::Omt,
            Some(r.p_tilde),
            Some(r.nonconformity),
            Some(r.image_of_t0.clone()),
            Some(r.radius_of_t0),
        ),
        TestOutcome::Univariate(_) => (Method::Univariate, None, None, None, None),
    };

    let report = TestReport {
        schema_version: SCHEMA_VERSION,
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        data: DataSummary {
            groups: dataset
                .samples()
                .iter()
                .map(|s| GroupSummary {
                    label: s.label().to_string(),
                    size: s.len(),
                })
                .collect(),
            grid_len: dataset.grid().len(),
            pooled_size: dataset.total(),
        },
        weight: evaluator.weight().cloned(),
        method,
        pairs,
        p_hat: outcome.p_hat(),
        p_tilde,
        nonconformity,
        image_of_t0,
        radius_of_t0,
        warnings,
        timing_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok(Analysis {
        report,
        replicas,
        outcome,
    })
}

/// Reads the input named in `config`, runs the test, writes the report to
/// `config.output` and, if requested, the point dumps.
pub fn run(config: &RunConfig) -> Result<TestReport> {
    config.validate()?;
    let file = File::open(&config.input).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot open input {}: {e}", config.input.display()),
        ))
    })?;
    let dataset = load_curves(std::io::BufReader::new(file), &config.ingest_format())?;
    let analysis = analyze(&dataset, config)?;
    if let (Some(dir), TestOutcome::Omt(result)) = (&config.emit_points, &analysis.outcome) {
        dump_points(dir, &analysis.replicas, result)?;
    }
    write_report(&analysis.report, &config.output)?;
    Ok(analysis.report)
}

pub fn write_report(report: &TestReport, path: &Path) -> Result<()> {
    let mut sink = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut sink, report)?;
    std::io::Write::write_all(&mut sink, b"\n")?;
    std::io::Write::flush(&mut sink)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<TestReport> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedPair {
    pub pair: (usize, usize),
    pub labels: (String, String),
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub alpha: f64,
    pub reject: bool,
    /// `(1 − α)²` for transport-combined tests.
    pub threshold: Option<f64>,
    /// The p-value is the smallest the permutation scheme can produce.
    pub at_minimum: bool,
    /// Pairs by decreasing contribution.
    pub ranked: Vec<RankedPair>,
    pub summary: String,
}

/// Level-`alpha` decision: reject iff the non-conformity score exceeds `(1 − α)²`.
pub fn interpret(report: &TestReport, alpha: f64) -> Result<Decision> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let (reject, threshold, minimum) = match (report.method, report.nonconformity) {
        (Method::Omt, Some(score)) => {
            let threshold = (1.0 - alpha).powi(2);
            (
                score > threshold,
                Some(threshold),
                1.0 / report.config.n_r as f64,
            )
        }
        (Method::Omt, None) => {
            return Err(Error::validation("report lacks a non-conformity score"));
        }
        (Method::Univariate, _) => (
            report.p_hat <= alpha,
            None,
            1.0 / (report.config.replicas + 1) as f64,
        ),
    };
    let at_minimum = report.p_hat <= minimum;

    let mut ranked: Vec<RankedPair> = report
        .pairs
        .iter()
        .filter_map(|p| {
            p.contribution.map(|c| RankedPair {
                pair: p.pair,
                labels: p.labels.clone(),
                contribution: c,
            })
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.contribution
            .total_cmp(&a.contribution)
            .then(a.pair.cmp(&b.pair))
    });

    let mut summary = format!(
        "{} the null hypothesis of equal distributions at level {alpha} (p̂ = {:.4}",
        if reject { "Reject" } else { "Do not reject" },
        report.p_hat
    );
    if let Some(p) = report.p_tilde {
        summary.push_str(&format!(", p̃ = {p:.4}"));
    }
    summary.push_str(").");
    if at_minimum {
        summary.push_str(&format!(
            " p̂ equals the smallest attainable value {minimum}; given the discreteness of the \
             permutation p-value this is to be read as significant."
        ));
    }
    if let Some(top) = ranked.first() {
        summary.push_str(&format!(
            " Largest contribution: pair ({}, {}) = {} vs {} with D² = {:.3}.",
            top.pair.0, top.pair.1, top.labels.0, top.labels.1, top.contribution
        ));
    }
    Ok(Decision {
        alpha,
        reject,
        threshold,
        at_minimum,
        ranked,
        summary,
    })
}
