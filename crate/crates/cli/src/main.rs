//! `runoff`: fit reserving models to claims run-off triangles, project
//! outstanding reserves, and bootstrap their prediction error.
//!
//! Three subcommands — `fit`, `reserve`, `bootstrap` — all read a triangle
//! CSV (long `origin,dev,value` or wide `origin,d0,...,dn` layout, values
//! incremental) and write machine-readable results to stdout. Every output
//! artifact embeds the run manifest, so results are traceable to the exact
//! invocation that produced them.
//!
//! Exit codes: 0 success, 1 input or validation error, 2 fit failure,
//! 3 degraded bootstrap (some replicates exhausted their redraw budget).

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use runoff_core::bootstrap::{
    bootstrap_run, error_quantiles, rmsep, BootstrapConfig, BootstrapResult, QuantileTable,
};
use runoff_core::error::Error;
use runoff_core::glm::{FitControls, PredictionErrorReport};
use runoff_core::hglm::random_effect_estimates;
use runoff_core::model::{FittedModel, ModelKind, ModelSpec};
use runoff_core::reserving::{reserve_report, ReserveReport};
use runoff_core::triangle::Triangle;
use runoff_core::tweedie::FamilyPower;

// -- argument surface ---------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "runoff",
    version,
    about = "Claims-triangle reserving: Tweedie GLM and hierarchical GLM fits, \
             reserve projections, and bootstrap prediction errors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and print its parameter summary as JSON.
    Fit(ModelArgs),
    /// Fit a model and print the projected reserves.
    Reserve(ReserveArgs),
    /// Bootstrap the reserve prediction error (RMSEP and error quantiles).
    Bootstrap(BootstrapArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Triangle CSV: long `origin,dev,value` or wide `origin,d0,...,dn`.
    #[arg(long)]
    input: PathBuf,

    /// Model to fit.
    #[arg(long, value_enum, default_value_t = ModelKindArg::Glm)]
    model: ModelKindArg,

    /// Tweedie variance power for the data, in [1, 2]
    /// (1 = over-dispersed Poisson, 2 = gamma).
    #[arg(long, default_value_t = 1.0)]
    p: f64,

    /// Tweedie variance power for the random effects (hierarchical model;
    /// only 2 = gamma is supported).
    #[arg(long = "p-random", default_value_t = 2.0)]
    p_random: f64,

    /// Fix the response dispersion phi instead of estimating it.
    #[arg(long = "fix-phi")]
    fix_phi: Option<f64>,

    /// Fix the random-effect dispersion phi_u instead of estimating it
    /// (hierarchical model only).
    #[arg(long = "fix-phi-u")]
    fix_phi_u: Option<f64>,
}

#[derive(Args)]
struct ReserveArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Output layout for the reserve table.
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Number of bootstrap replicates.
    #[arg(long, default_value_t = 1000)]
    boot: usize,

    /// RNG seed. Required: runs must be reproducible, so there is no
    /// silent entropy source.
    #[arg(long)]
    seed: u64,

    /// Quantile probabilities for the absolute prediction error,
    /// comma-separated, each strictly between 0 and 1.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.75, 0.9, 0.95])]
    quantiles: Vec<f64>,

    /// Worker threads for the replicate loop. Any value produces output
    /// byte-identical to --threads 1.
    #[arg(long, default_value_t = 1)]
    threads: usize,

    /// Also write every replicate's per-origin predicted and simulated
    /// sums to this CSV file.
    #[arg(long = "dump-replicates")]
    dump_replicates: Option<PathBuf>,

    /// Also write a tidy plot CSV (`origin,stat,value` with stat = rmsep,
    /// q50, ...) to this file.
    #[arg(long = "plot-data")]
    plot_data: Option<PathBuf>,

    /// Exclude the two structurally-zero corner residuals from the
    /// resampling pool.
    #[arg(long = "drop-zero-residuals")]
    drop_zero_residuals: bool,

    /// Inflate the residual pool by sqrt(N / (N - k)) for the k mean
    /// parameters before resampling.
    #[arg(long = "dof-inflation")]
    dof_inflation: bool,

    /// Redraw budget per replicate when a refit fails.
    #[arg(long = "max-redraws", default_value_t = 100)]
    max_redraws: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKindArg {
    Glm,
    Hglm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

impl OutputFormat {
    fn name(self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        }
    }
}

// -- run manifest -------------------------------------------------------------

/// Everything needed to rerun the invocation, echoed into every artifact.
#[derive(Serialize)]
struct RunManifest {
    input: String,
    model: ModelKind,
    p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fix_phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fix_phi_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quantiles: Option<Vec<f64>>,
    format: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
}

impl RunManifest {
    fn new(args: &ModelArgs, spec: &ModelSpec) -> Self {
        RunManifest {
            input: args.input.display().to_string(),
            model: spec.kind,
            p: spec.p.value(),
            p_u: spec.p_u.map(FamilyPower::value),
            fix_phi: spec.fix_phi,
            fix_phi_u: spec.fix_phi_u,
            replicates: None,
            seed: None,
            quantiles: None,
            format: "json",
            threads: None,
        }
    }
}

// -- failure plumbing ---------------------------------------------------------

enum CliError {
    Core(Error),
    Io(PathBuf, std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(path, e) => write!(f, "{}: {e}", path.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

/// Exit status for an error: 1 for anything wrong with the inputs, 2 for a
/// fit that failed on valid inputs, 3 for a degraded bootstrap.
fn exit_status(err: &CliError) -> u8 {
    match err {
        CliError::Io(..) => 1,
        CliError::Core(e) => core_exit_status(e),
    }
}

fn core_exit_status(e: &Error) -> u8 {
    match e {
        Error::DuplicateCell { .. }
        | Error::IncompleteTriangle { .. }
        | Error::FutureCellPresent { .. }
        | Error::Parse(_)
        | Error::KindMismatch { .. }
        | Error::Domain(_)
        | Error::DegenerateTriangle => 1,
        Error::NoConvergence { .. } | Error::SingularDesign | Error::StaleFit => 2,
        // A bootstrap that cannot even start is classified by its cause.
        Error::BaseFit(inner) => core_exit_status(inner),
        Error::TooManyFailures { .. } => 3,
    }
}

type CliResult<T> = Result<T, CliError>;

// -- entry point ----------------------------------------------------------------

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are successes; anything else is a usage
            // error and exits 1 per the interface contract (clap's own
            // default would be 2, which this tool reserves for fit failures).
            let ok = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            e.print().ok();
            return if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };

    let outcome = match cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Reserve(args) => run_reserve(args),
        Command::Bootstrap(args) => run_bootstrap(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}

// -- shared steps ---------------------------------------------------------------

fn load_triangle(path: &Path) -> CliResult<Triangle> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    Ok(Triangle::parse_csv(&text)?)
}

fn model_spec(args: &ModelArgs) -> CliResult<ModelSpec> {
    let p = FamilyPower::new(args.p)?;
    let mut spec = match args.model {
        ModelKindArg::Glm => {
            if args.fix_phi_u.is_some() {
                return Err(
                    Error::Domain("--fix-phi-u applies to --model hglm only".into()).into(),
                );
            }
            ModelSpec::glm(p)
        }
        ModelKindArg::Hglm => {
            let mut spec = ModelSpec::hglm(p);
            spec.p_u = Some(FamilyPower::new(args.p_random)?);
            spec.fix_phi_u = args.fix_phi_u;
            spec
        }
    };
    spec.fix_phi = args.fix_phi;
    Ok(spec)
}

/// Writes to stdout, treating a closed pipe (e.g. `runoff ... | head`) as a
/// polite request to stop rather than a panic.
fn emit_stdout(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let done = out
        .write_all(text.as_bytes())
        .and_then(|()| out.flush())
        .is_err();
    if done {
        std::process::exit(0);
    }
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("could not serialize output: {e}")))?;
    text.push('\n');
    emit_stdout(&text);
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn manifest_comment(manifest: &RunManifest) -> String {
    let json = serde_json::to_string(manifest).expect("manifest serializes");
    format!("# manifest: {json}\n")
}

// -- fit ------------------------------------------------------------------------

#[derive(Serialize)]
struct RandomEffectOut {
    origin: usize,
    u: f64,
    v: f64,
}

#[derive(Serialize)]
struct FitOutput<'a> {
    manifest: &'a RunManifest,
    converged: bool,
    iterations: usize,
    dispersion: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    dispersion_u: Option<f64>,
    intercept: f64,
    /// Fixed origin-year effects (GLM only; index = origin, entry 0 is 0).
    #[serde(skip_serializing_if = "Option::is_none")]
    origin_effects: Option<Vec<f64>>,
    /// Development-year effects (index = dev, entry 0 is 0).
    dev_effects: Vec<f64>,
    /// Random origin-year effects (hierarchical only).
    #[serde(skip_serializing_if = "Option::is_none")]
    random_effects: Option<Vec<RandomEffectOut>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    full_shrinkage: Option<bool>,
    deviance: f64,
}

fn run_fit(args: ModelArgs) -> CliResult<ExitCode> {
    let triangle = load_triangle(&args.input)?;
    let spec = model_spec(&args)?;
    let manifest = RunManifest::new(&args, &spec);
    let fitted = FittedModel::fit(&triangle, &spec, &FitControls::default())?;
    let n = fitted.n();

    let output = match &fitted {
        FittedModel::Glm(fit) => FitOutput {
            manifest: &manifest,
            converged: fit.converged,
            iterations: fit.iterations,
            dispersion: fit.dispersion,
            dispersion_u: None,
            intercept: fit.intercept(),
            origin_effects: Some((0..=n).map(|i| fit.origin_effect(i)).collect()),
            dev_effects: (0..=n).map(|j| fit.dev_effect(j)).collect(),
            random_effects: None,
            full_shrinkage: None,
            deviance: fit.deviance,
        },
        FittedModel::Hglm(fit) => FitOutput {
            manifest: &manifest,
            converged: fit.converged,
            iterations: fit.outer_iterations,
            dispersion: fit.dispersion,
            dispersion_u: Some(fit.dispersion_u),
            intercept: fit.intercept,
            origin_effects: None,
            dev_effects: (0..=n).map(|j| fit.dev_effect(j)).collect(),
            random_effects: Some(
                random_effect_estimates(fit)
                    .into_iter()
                    .map(|(origin, u, v)| RandomEffectOut { origin, u, v })
                    .collect(),
            ),
            full_shrinkage: Some(fit.full_shrinkage),
            deviance: fit.h_deviance,
        },
    };
    print_json(&output)?;

    // An unconverged fit is still reported in full, but as a failure.
    if fitted.converged() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("error: {}", Error::NoConvergence { iterations: 0 });
        Ok(ExitCode::from(2))
    }
}

// -- reserve ----------------------------------------------------------------------

#[derive(Serialize)]
struct ReserveOutput<'a> {
    manifest: &'a RunManifest,
    converged: bool,
    dispersion: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    dispersion_u: Option<f64>,
    reserves: ReserveReport,
}

fn run_reserve(args: ReserveArgs) -> CliResult<ExitCode> {
    let triangle = load_triangle(&args.model.input)?;
    let spec = model_spec(&args.model)?;
    let mut manifest = RunManifest::new(&args.model, &spec);
    manifest.format = args.format.name();

    let fitted = FittedModel::fit(&triangle, &spec, &FitControls::default())?;
    let reserves = reserve_report(&fitted)?;

    match args.format {
        OutputFormat::Json => print_json(&ReserveOutput {
            manifest: &manifest,
            converged: fitted.converged(),
            dispersion: fitted.dispersion(),
            dispersion_u: fitted.dispersion_u(),
            reserves,
        })?,
        OutputFormat::Csv => {
            let mut out = manifest_comment(&manifest);
            out.push_str("origin,reserve\n");
            for row in &reserves.per_origin {
                out.push_str(&format!("{},{}\n", row.origin, row.reserve));
            }
            out.push_str(&format!("total,{}\n", reserves.total));
            emit_stdout(&out);
        }
    }
    Ok(ExitCode::SUCCESS)
}

// -- bootstrap ----------------------------------------------------------------------

#[derive(Serialize)]
struct BaseSummary {
    dispersion: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    dispersion_u: Option<f64>,
    reserves: ReserveReport,
}

#[derive(Serialize)]
struct BootstrapOutput<'a> {
    manifest: &'a RunManifest,
    base: BaseSummary,
    replicates: usize,
    failures: usize,
    degraded: bool,
    rmsep: PredictionErrorReport,
    quantiles: QuantileTable,
}

fn run_bootstrap(args: BootstrapArgs) -> CliResult<ExitCode> {
    let triangle = load_triangle(&args.model.input)?;
    let spec = model_spec(&args.model)?;

    if args.threads == 0 {
        return Err(Error::Domain("--threads must be at least 1".into()).into());
    }
    if args.boot < 2 {
        return Err(Error::Domain(
            "--boot must be at least 2: error quantiles need two replicates".into(),
        )
        .into());
    }
    let mut probs = args.quantiles.clone();
    if probs.is_empty() {
        return Err(Error::Domain("--quantiles needs at least one probability".into()).into());
    }
    if let Some(bad) = probs.iter().find(|p| !(0.0 < **p && **p < 1.0)) {
        return Err(Error::Domain(format!(
            "quantile probabilities must lie strictly between 0 and 1, got {bad}"
        ))
        .into());
    }
    probs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    probs.dedup();

    let mut manifest = RunManifest::new(&args.model, &spec);
    manifest.replicates = Some(args.boot);
    manifest.seed = Some(args.seed);
    manifest.quantiles = Some(probs.clone());
    manifest.threads = Some(args.threads);

    let mut config = BootstrapConfig::new(spec.clone(), args.boot, args.seed);
    config.drop_zero_residuals = args.drop_zero_residuals;
    config.dof_inflation = args.dof_inflation;
    config.max_redraws = args.max_redraws;

    match bootstrap_run(&triangle, &config, args.threads) {
        Ok(result) => {
            emit_bootstrap(&triangle, &spec, &manifest, &args, &result, &probs)?;
            Ok(ExitCode::SUCCESS)
        }
        // A degraded run still carries every completed replicate; report it
        // like a normal result (stdout and files), then fail with status 3.
        Err(err @ Error::TooManyFailures { .. }) => {
            if let Error::TooManyFailures { partial, .. } = &err {
                if partial.replicates.len() >= 2 {
                    emit_bootstrap(&triangle, &spec, &manifest, &args, partial, &probs)?;
                }
            }
            eprintln!("error: {err}");
            Ok(ExitCode::from(3))
        }
        Err(e) => Err(e.into()),
    }
}

fn emit_bootstrap(
    triangle: &Triangle,
    spec: &ModelSpec,
    manifest: &RunManifest,
    args: &BootstrapArgs,
    result: &BootstrapResult,
    probs: &[f64],
) -> CliResult<()> {
    let fitted = FittedModel::fit(triangle, spec, &FitControls::default())?;
    let output = BootstrapOutput {
        manifest,
        base: BaseSummary {
            dispersion: result.base_dispersion,
            dispersion_u: result.base_dispersion_u,
            reserves: reserve_report(&fitted)?,
        },
        replicates: result.replicates.len(),
        failures: result.failures,
        degraded: result.degraded,
        rmsep: rmsep(result),
        quantiles: error_quantiles(result, probs)?,
    };
    print_json(&output)?;

    if let Some(path) = &args.plot_data {
        write_file(
            path,
            &plot_csv(manifest, &output.rmsep, &output.quantiles, probs),
        )?;
    }
    if let Some(path) = &args.dump_replicates {
        write_file(path, &replicate_csv(manifest, result))?;
    }
    Ok(())
}

/// Probability -> tidy stat name: 0.5 -> "q50", 0.975 -> "q97.5".
fn stat_name(prob: f64) -> String {
    format!("q{}", prob * 100.0)
}

/// Tidy `origin,stat,value` table: per-origin rows then the totals, one row
/// per statistic (rmsep plus each requested quantile).
fn plot_csv(
    manifest: &RunManifest,
    report: &PredictionErrorReport,
    quantiles: &QuantileTable,
    probs: &[f64],
) -> String {
    let mut out = manifest_comment(manifest);
    out.push_str("origin,stat,value\n");
    for (origin, value) in report.per_origin.iter().enumerate() {
        out.push_str(&format!("{origin},rmsep,{value}\n"));
        for (k, prob) in probs.iter().enumerate() {
            out.push_str(&format!(
                "{origin},{},{}\n",
                stat_name(*prob),
                quantiles.per_origin[origin][k]
            ));
        }
    }
    out.push_str(&format!("total,rmsep,{}\n", report.total));
    for (k, prob) in probs.iter().enumerate() {
        out.push_str(&format!(
            "total,{},{}\n",
            stat_name(*prob),
            quantiles.total[k]
        ));
    }
    out
}

/// One row per replicate and origin year (plus a totals row per replicate):
/// `b,origin,predicted_sum,simulated_sum`.
fn replicate_csv(manifest: &RunManifest, result: &BootstrapResult) -> String {
    let mut out = manifest_comment(manifest);
    out.push_str("b,origin,predicted_sum,simulated_sum\n");
    for (b, record) in result.replicates.iter().enumerate() {
        for origin in 0..=result.n {
            out.push_str(&format!(
                "{b},{origin},{},{}\n",
                record.per_origin_predicted[origin], record.per_origin_simulated[origin]
            ));
        }
        out.push_str(&format!(
            "{b},total,{},{}\n",
            record.total_predicted, record.total_simulated
        ));
    }
    out
}
