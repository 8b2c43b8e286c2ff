use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use fkomt_core::{
    generate, interpret, read_report, run, write_curves, LabelColumn, PairSelection, Process,
    QuadratureRule, RunConfig, ScenarioSpec, StatKind, VChoice,
};

/// Environment variable that fixes the number of worker threads.
const THREADS_VAR: &str = "FKOMT_THREADS";

#[derive(Parser)]
#[command(
    name = "fkomt",
    version,
    about = "K-sample test for functional data with optimal-transport p-values"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the permutation test on a curve table and write a JSON report.
    Run(RunArgs),
    /// Write a synthetic Brownian-motion dataset.
    Generate(GenerateArgs),
    /// Level-alpha decision and pair ranking for an existing report.
    Interpret(InterpretArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Curve table: one row per curve, a label column and J value columns.
    #[arg(long)]
    input: PathBuf,
    /// Label column, as a 0-based index or a header name.
    #[arg(long, default_value = "0")]
    label_column: LabelColumn,
    /// The first row holds values, not column names.
    #[arg(long)]
    no_header: bool,
    #[arg(long, default_value = "cf-cvm")]
    statistic: StatKind,
    /// identity, inv-overall, inv-pooled or custom:<path>.
    #[arg(long, default_value = "inv-overall")]
    v_matrix: VChoice,
    /// Eigenpairs kept by the approximate inverse.
    #[arg(long, default_value_t = 9)]
    rank: usize,
    /// all, first-vs-rest, or a list such as 1-2,1-3.
    #[arg(long, default_value = "all")]
    pairs: PairSelection,
    /// Number of permutation replicas B.
    #[arg(short = 'b', long, default_value_t = 999)]
    replicas: usize,
    /// Number of grid radii; B + 1 must equal n_R · n_S.
    #[arg(long, default_value_t = 40)]
    n_r: usize,
    /// Number of grid directions.
    #[arg(long, default_value_t = 25)]
    n_s: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "trapezoid")]
    quadrature: QuadratureRule,
    #[arg(short, long, default_value = "report.json")]
    output: PathBuf,
    /// Directory for cloud.csv, grid.csv and map.csv.
    #[arg(long)]
    emit_points: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> RunConfig {
        RunConfig {
            input: self.input,
            label_column: self.label_column,
            has_header: !self.no_header,
            statistic: self.statistic,
            v_matrix: self.v_matrix,
            rank: self.rank,
            pairs: self.pairs,
            replicas: self.replicas,
            n_r: self.n_r,
            n_s: self.n_s,
            seed: self.seed,
            quadrature: self.quadrature,
            output: self.output,
            emit_points: self.emit_points,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProcessKind {
    Brownian,
    MeanShift,
    Scale,
}

#[derive(Args)]
struct GenerateArgs {
    /// Group sizes, e.g. 20,20,20.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    /// Number of equispaced grid points on [0, 1].
    #[arg(long, default_value_t = 24)]
    grid_len: usize,
    #[arg(long, value_enum, default_value = "brownian")]
    process: ProcessKind,
    /// Drift added to the shifted groups (mean-shift).
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// 1-based groups receiving the drift (mean-shift).
    #[arg(long, value_delimiter = ',')]
    groups: Vec<usize>,
    /// One scale per group (scale).
    #[arg(long, value_delimiter = ',')]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct InterpretArgs {
    report: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Print the decision as JSON.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Run(args) => run_command(args),
        Command::Generate(args) => generate_command(args),
        Command::Interpret(args) => interpret_command(args),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 configuration, 3 data, 4 numerical degeneracy, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use fkomt_core::Error;
    match err.downcast_ref::<Error>().map(Error::root) {
        Some(Error::Config(_)) => 2,
        Some(Error::Parse { .. } | Error::Validation(_) | Error::Domain { .. } | Error::Csv(_)) => {
            3
        }
        Some(Error::Degenerate(_)) => 4,
        _ => 1,
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads = match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => n,
        _ => {
            return Err(fkomt_core::Error::Config(format!(
                "{THREADS_VAR} must be a positive integer, got '{value}'"
            ))
            .into())
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("cannot configure the thread pool")
}

fn run_command(args: RunArgs) -> anyhow::Result<()> {
    let config = args.into_config();
    let report = run(&config)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    print!("p_hat = {}", report.p_hat);
    if let (Some(p), Some(score)) = (report.p_tilde, report.nonconformity) {
        print!("  p_tilde = {p}  nonconformity = {score}");
    }
    println!();
    for pair in &report.pairs {
        let share = pair
            .contribution
            .map(|c| format!("  D2 = {c:.4}"))
            .unwrap_or_default();
        println!(
            "  ({}, {}) {} vs {}: T0 = {:.6e}{share}",
            pair.pair.0, pair.pair.1, pair.labels.0, pair.labels.1, pair.t0
        );
    }
    println!("report written to {}", config.output.display());
    Ok(())
}

fn generate_command(args: GenerateArgs) -> anyhow::Result<()> {
    let process = match args.process {
        ProcessKind::Brownian => Process::Brownian,
        ProcessKind::MeanShift => Process::MeanShift {
            delta: args.delta,
            groups: args.groups,
        },
        ProcessKind::Scale => Process::Scale { sigma: args.sigma },
    };
    let spec = ScenarioSpec {
        sizes: args.sizes,
        grid_len: args.grid_len,
        process,
        seed: args.seed,
    };
    let dataset = generate(&spec)?;
    let file = File::create(&args.output)
        .with_context(|| format!("cannot create {}", args.output.display()))?;
    write_curves(&dataset, BufWriter::new(file), b',')?;
    println!(
        "wrote {} curves on {} grid points to {}",
        dataset.total(),
        dataset.grid().len(),
        args.output.display()
    );
    Ok(())
}

fn interpret_command(args: InterpretArgs) -> anyhow::Result<()> {
    let report = read_report(&args.report)
        .with_context(|| format!("cannot read report {}", args.report.display()))?;
    let decision = interpret(&report, args.alpha)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&decision)?);
        return Ok(());
    }
    println!("{}", decision.summary);
    for (rank, pair) in decision.ranked.iter().enumerate() {
        println!(
            "{:>3}. ({}, {}) {} vs {}: D2 = {:.4}",
            rank + 1,
            pair.pair.0,
            pair.pair.1,
            pair.labels.0,
            pair.labels.1,
            pair.contribution
        );
    }
    Ok(())
}
