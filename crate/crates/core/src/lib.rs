//! K-sample testing for discretized functional data.
//!
//! Pairwise characteristic-functional Cramér–von Mises statistics form a
//! vector statistic `T`; its significance is assessed by a permutation test
//! that maps `T` and its permutation replicas onto a fixed grid in the
//! positive-orthant unit ball by discrete optimal transport, giving a single
//! p-value and per-pair contribution diagnostics.

pub mod curves;
pub mod error;
mod linalg;
pub mod omt;
pub mod permutation;
pub mod report;
pub mod statistic;
pub mod synthetic;

pub use curves::{
    inner_product, load_curves, log_cir, quadrature_weights, write_curves, Curve, FunctionalSample,
    IngestFormat, LabelColumn, PooledDataset, QuadratureRule, TimeGrid,
};
pub use error::{Error, Result};
pub use omt::{
    build_grid, dump_points, evaluate, halton, solve_assignment, tau_map, Assignment, GridSet,
    GridSpec, OmtResult, TestOutcome, UnivariateResult,
};
pub use permutation::{permute_dataset, replicate, replicate_with, PermutationPlan, ReplicaSet};
pub use report::{
    analyze, interpret, read_report, run, write_report, Analysis, Decision, Method, RunConfig,
    TestReport, VChoice,
};
pub use statistic::{
    cf_cvm_pair, cov_sqrt_pair, ecf_cvm_oracle, ecf_eval, inverse_covariance_weight,
    pairwise_vector, sample_covariance, truncated_inverse, CovarianceMode, PairSelection,
    StatConfig, StatEvaluator, StatKind, StatVector, WeightMatrix, WeightSpec,
};
pub use synthetic::{generate, Process, ScenarioSpec};
