use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use atomkde::formats::{self, AtomReport, EstimateJson, GridJson, SummarySidecar};
use atomkde::io::{read_dataset, read_labels, InputError};
use atomkde::runner::{self, RunError};
use atomkde_core::density::{fit_kde_naive, fit_kde_unique, grid_export};
use atomkde_core::estimators::{estimate, estimate_two, Warning};
use atomkde_core::functionals::Arity;
use atomkde_core::sample::{atom_table, partition};
use atomkde_core::simlab::ExperimentSpec;
use atomkde_core::{
    BandwidthRule, BuiltinFunctional, EstimatorConfig, Functional, GridBox, KernelSpec, Method,
    QuadratureConfig, TieRule,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Atom-aware density and functional estimation for samples that mix a
/// continuous distribution with point masses.
#[derive(Parser)]
#[command(name = "atomkde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a sample into unique and repeated values and report the atoms.
    Partition(PartitionArgs),
    /// Evaluate the density estimate on a regular grid.
    FitDensity(FitArgs),
    /// Estimate a density functional from one or two samples.
    Estimate(EstimateArgs),
    /// Run a Monte-Carlo experiment described by a JSON spec.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct TieArgs {
    /// How observations are compared: exact | quantized:WIDTH.
    #[arg(long, default_value = "exact")]
    tie: TieRule,
}

#[derive(Args)]
struct SmoothingArgs {
    /// gaussian | epanechnikov | rectangular | order:L
    #[arg(long, default_value = "gaussian")]
    kernel: KernelSpec,
    /// silverman | fixed:H | theory:ALPHA,S
    #[arg(long, default_value = "silverman")]
    bandwidth: BandwidthRule,
    #[command(flatten)]
    tie: TieArgs,
}

#[derive(Args)]
struct PartitionArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    tie: TieArgs,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy)]
struct GridArg {
    lo: f64,
    hi: f64,
    points: usize,
}

impl FromStr for GridArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, points] = parts.as_slice() else {
            return Err(format!("expected LO:HI:POINTS, got '{s}'"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number '{t}'"));
        let g = GridArg {
            lo: num(lo)?,
            hi: num(hi)?,
            points: points.trim().parse().map_err(|_| format!("bad point count '{points}'"))?,
        };
        if !(g.lo < g.hi) || g.points < 2 {
            return Err(format!("grid '{s}' needs LO < HI and at least 2 points"));
        }
        Ok(g)
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// LO:HI:POINTS, applied to every coordinate.
    #[arg(long, allow_hyphen_values = true)]
    grid: GridArg,
    /// Classical KDE over every observation, repeats included.
    #[arg(long, conflicts_with = "atoms")]
    naive: bool,
    #[command(flatten)]
    smoothing: SmoothingArgs,
    /// Grid output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the estimated atoms here.
    #[arg(long)]
    atoms: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct EstimateArgs {
    /// entropy | quadratic | renyi:ALPHA | kl | inner
    #[arg(long)]
    functional: BuiltinFunctional,
    /// ds | loo | naive-ds | naive-loo | oracle-ds | oracle-loo
    #[arg(long, default_value = "loo")]
    method: Method,
    #[arg(long)]
    input: PathBuf,
    /// Second sample, for two-sample functionals.
    #[arg(long)]
    input2: Option<PathBuf>,
    /// Labels for the first sample (1 = drawn from the discrete component).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Labels for the second sample.
    #[arg(long)]
    labels2: Option<PathBuf>,
    #[command(flatten)]
    smoothing: SmoothingArgs,
    /// Exit with status 4 when too many density evaluations hit the floor.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    spec: PathBuf,
    /// Override the number of replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Override the master seed (the spec's seed, or 42, otherwise).
    #[arg(long)]
    seed: Option<u64>,
    /// Table output; a `.json` sidecar is written alongside. Standard output
    /// (table only) when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
}

enum Failure {
    Usage(String),
    Input(String),
    Unreliable(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Input(_) => 3,
            Failure::Unreliable(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Unreliable(m) => m,
        }
    }
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<atomkde_core::Error> for Failure {
    fn from(e: atomkde_core::Error) -> Self {
        match e {
            atomkde_core::Error::Contract(_) => Failure::Usage(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Core(e) => e.into(),
            RunError::Pool(e) => Failure::Input(e.to_string()),
        }
    }
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), Failure> {
    match out {
        Some(p) => formats::write_atomic(p, contents.as_bytes())
            .map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn cmd_partition(a: PartitionArgs) -> Result<(), Failure> {
    let data = read_dataset(&a.input)?;
    let p = partition(&data, a.tie.tie)?;
    let report = AtomReport::new(&atom_table(&p, &data)?);
    emit(a.out.as_deref(), &formats::to_json(&report))?;
    if a.out.is_some() {
        println!(
            "n={} unique={} atoms={} pi_hat={}",
            report.n,
            report.n_unique,
            report.atoms.len(),
            report.pi_hat
        );
    }
    Ok(())
}

fn cmd_fit_density(a: FitArgs) -> Result<(), Failure> {
    let data = read_dataset(&a.input)?;
    let d = data.dim();
    if d > 2 {
        return Err(Failure::Usage(format!("grid export supports 1 or 2 dimensions, input has {d}")));
    }
    let s = &a.smoothing;
    let est = if a.naive {
        fit_kde_naive(&data, &s.kernel, &s.bandwidth)?
    } else {
        fit_kde_unique(&data, s.tie.tie, &s.kernel, &s.bandwidth)?
    };
    let bounds = GridBox::new(vec![a.grid.lo; d], vec![a.grid.hi; d])?;
    let grid = grid_export(&est, &bounds, a.grid.points)?;
    let grid_doc = match a.format {
        Format::Csv => formats::grid_csv(&grid),
        Format::Json => formats::to_json(&GridJson::new(&grid)),
    };
    emit(a.out.as_deref(), &grid_doc)?;
    if let Some(path) = &a.atoms {
        let table = atom_table(&partition(&data, s.tie.tie)?, &data)?;
        let doc = match a.format {
            Format::Csv => formats::atoms_csv(&table, d),
            Format::Json => formats::to_json(&AtomReport::new(&table)),
        };
        emit(Some(path), &doc)?;
    }
    Ok(())
}

fn cmd_estimate(a: EstimateArgs) -> Result<(), Failure> {
    let t = a.functional;
    match (t.arity(), &a.input2) {
        (Arity::Two, None) => {
            return Err(Failure::Usage(format!("functional '{t}' needs a second sample (--input2)")))
        }
        (Arity::One, Some(_)) => {
            return Err(Failure::Usage(format!("functional '{t}' takes a single sample")))
        }
        _ => {}
    }
    if a.labels2.is_some() && a.input2.is_none() {
        return Err(Failure::Usage("--labels2 needs --input2".into()));
    }
    let cfg = EstimatorConfig {
        method: a.method,
        kernel: a.smoothing.kernel.clone(),
        bw: a.smoothing.bandwidth,
        tie_rule: a.smoothing.tie.tie,
        quad: QuadratureConfig::default(),
    };
    let x = read_dataset(&a.input)?;
    let lx = a.labels.as_deref().map(read_labels).transpose()?;
    let report = match &a.input2 {
        Some(p) => {
            let y = read_dataset(p)?;
            let ly = a.labels2.as_deref().map(read_labels).transpose()?;
            estimate_two(&x, &y, lx.as_deref(), ly.as_deref(), &t, &cfg)?
        }
        None => estimate(&x, lx.as_deref(), &t, &cfg)?,
    };
    emit(a.out.as_deref(), &formats::to_json(&EstimateJson { schema_version: formats::SCHEMA_VERSION, report: &report }))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if a.strict && report.has_warning(|w| matches!(w, Warning::ClampBudgetExceeded { .. })) {
        return Err(Failure::Unreliable(format!(
            "{} influence terms hit the density floor (--strict)",
            report.clamp_count
        )));
    }
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.spec)
        .map_err(|e| Failure::Input(format!("{}: {e}", a.spec.display())))?;
    let mut spec: ExperimentSpec = serde_json::from_str(&text)
        .map_err(|e| Failure::Input(format!("{}: {e}", a.spec.display())))?;
    if let Some(r) = a.reps {
        spec.reps = r;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if a.threads == Some(0) {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let (table, _) = runner::run(&spec, a.threads)?;
    let csv = formats::summary_csv(&table);
    emit(a.out.as_deref(), &csv)?;
    if let Some(out) = &a.out {
        let sidecar = formats::to_json(&SummarySidecar::new(&table, &spec));
        emit(Some(&formats::sidecar_path(out)), &sidecar)?;
    }
    if table.warnings > 0 {
        eprintln!("warning: {} estimator warnings across replications", table.warnings);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Partition(a) => cmd_partition(a),
        Command::FitDensity(a) => cmd_fit_density(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
