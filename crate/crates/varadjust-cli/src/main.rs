//! Command-line interface for variance adjustment of constant multivariate
//! dynamic linear models.
//!
//! Exit codes: 0 on success, 1 for domain failures (inadmissible models,
//! dimension mismatches against data, singular transfer matrices), 2 for
//! I/O, parse, and file-structure failures.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use varadjust_core::adjust::{
    assemble_gram, bind_data, build_basis, constants_only_basis, project, repair_psd, PsdPolicy,
};
use varadjust_core::config::{
    adjustment_to_json, beliefs_from_file, diagnostics_to_csv, load_model_file,
    mixture_from_file, model_from_file, read_adjusted_targets, read_series_csv, series_to_csv,
    write_text, AdjustmentOutput, ConfigError, ModelFile, TargetOutput,
};
use varadjust_core::forecast::{run_filter, size_ratio_summary};
use varadjust_core::linalg::max_abs;
use varadjust_core::model::{compute_transfer, invertible_completion, validate_model, ModelSpec, TransferMatrix};
use varadjust_core::quadratic::{cov_target_quadratic, covariance_quadratic, AdjustTarget};
use varadjust_core::relations::{RelationCase, RelationOperands};
use varadjust_core::simulate::{
    generator_fourth_moments, monte_carlo_cov, monte_carlo_target_cov, simulate_series,
    ResidualGenerator,
};
use varadjust_core::Error as CoreError;
use varadjust_core::FourthOrderBeliefs;

#[derive(Parser)]
#[command(
    name = "varadjust",
    version,
    about = "Variance adjustment and forecasting for constant multivariate dynamic linear models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file for admissibility and report its transfer matrix.
    Validate {
        /// Model description JSON.
        model: PathBuf,
    },
    /// Simulate an observation series from the model.
    Simulate {
        /// Model description JSON.
        model: PathBuf,
        /// Series length.
        #[arg(long)]
        n: usize,
        /// Random seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Residual generator.
        #[arg(long, value_enum, default_value_t = GeneratorArg::Gaussian)]
        generator: GeneratorArg,
        /// Output CSV path; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Cross-check the covariance engine against closed forms or simulation.
    Verify {
        /// Model description JSON; must have identity F and G.
        model: PathBuf,
        /// Verification mode.
        #[arg(long, value_enum, default_value_t = VerifyMode::ClosedForm)]
        mode: VerifyMode,
        /// Monte Carlo replicates per relation.
        #[arg(long, default_value_t = 20_000)]
        n_reps: usize,
        /// Random seed for Monte Carlo mode.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Residual generator for Monte Carlo mode.
        #[arg(long, value_enum, default_value_t = GeneratorArg::Gaussian)]
        generator: GeneratorArg,
    },
    /// Project the uncertain covariance targets onto observed products.
    Adjust {
        /// Model description JSON with a fourth_order block.
        model: PathBuf,
        /// Observation series CSV.
        data: PathBuf,
        /// Horizon; defaults to the series length.
        #[arg(long)]
        n: Option<usize>,
        /// Handling of negative eigenvalues in the adjusted moments.
        #[arg(long, value_enum, default_value_t = PsdArg::Report)]
        psd: PsdArg,
        /// Project onto constants only, reproducing the prior means.
        #[arg(long)]
        prior_only: bool,
        /// Output JSON path.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the forecast filter and report calibration diagnostics.
    Forecast {
        /// Model description JSON.
        model: PathBuf,
        /// Observation series CSV.
        data: PathBuf,
        /// Covariance source: prior, adjusted:PATH, or both:PATH.
        #[arg(long, default_value = "prior")]
        covariances: String,
        /// Diagnostics CSV path; stdout when omitted (summary then goes to
        /// stderr).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    /// Fixed Gaussian residuals with the model's prior covariances.
    Gaussian,
    /// Two-point mixture from the model's mixture block.
    Mixture,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyMode {
    /// Compare the engine with the identity-model closed forms.
    #[value(name = "closed-form", alias = "appendix")]
    ClosedForm,
    /// Compare the engine with Monte Carlo simulation.
    #[value(name = "montecarlo", alias = "monte-carlo")]
    MonteCarlo,
}

#[derive(Clone, Copy, ValueEnum)]
enum PsdArg {
    /// Report the spectrum, leave the matrices unchanged.
    Report,
    /// Clip negative eigenvalues to zero.
    Clip,
}

impl From<PsdArg> for PsdPolicy {
    fn from(arg: PsdArg) -> Self {
        match arg {
            PsdArg::Report => PsdPolicy::ReportOnly,
            PsdArg::Clip => PsdPolicy::Clip,
        }
    }
}

/// A command failure with its exit code.
enum Failure {
    /// I/O, parse, or file-structure problem: exit 2.
    Config(ConfigError),
    /// Domain problem with the model or data: exit 1.
    Domain(CoreError),
    /// Other domain-level failure with a custom message: exit 1.
    Message(String),
}

impl From<ConfigError> for Failure {
    fn from(err: ConfigError) -> Self {
        Failure::Config(err)
    }
}

impl From<CoreError> for Failure {
    fn from(err: CoreError) -> Self {
        Failure::Domain(err)
    }
}

impl Failure {
    fn report(&self) -> (String, u8) {
        match self {
            Failure::Config(err) => (err.to_string(), 2),
            Failure::Domain(err) => (err.to_string(), 1),
            Failure::Message(message) => (message.clone(), 1),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { model } => cmd_validate(&model),
        Command::Simulate { model, n, seed, generator, output } => {
            cmd_simulate(&model, n, seed, generator, output.as_deref())
        }
        Command::Verify { model, mode, n_reps, seed, generator } => {
            cmd_verify(&model, mode, n_reps, seed, generator)
        }
        Command::Adjust { model, data, n, psd, prior_only, output } => {
            cmd_adjust(&model, &data, n, psd, prior_only, &output)
        }
        Command::Forecast { model, data, covariances, output } => {
            cmd_forecast(&model, &data, &covariances, output.as_deref())
        }
    };
    match outcome {
        Ok(code) => code,
        Err(failure) => {
            let (message, code) = failure.report();
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

fn load_model(path: &Path) -> Result<(ModelFile, ModelSpec), Failure> {
    let file = load_model_file(path)?;
    let spec = model_from_file(&file)?;
    Ok((file, spec))
}

fn build_generator(
    file: &ModelFile,
    spec: &ModelSpec,
    arg: GeneratorArg,
) -> Result<ResidualGenerator, Failure> {
    match arg {
        GeneratorArg::Gaussian => Ok(ResidualGenerator::gaussian_from_model(spec)),
        GeneratorArg::Mixture => mixture_from_file(file, spec)?.ok_or_else(|| {
            Failure::Message("the model file declares no mixture block".to_owned())
        }),
    }
}

fn print_matrix(label: &str, matrix: &DMatrix<f64>) {
    println!("{label}:");
    for i in 0..matrix.nrows() {
        let row: Vec<String> =
            (0..matrix.ncols()).map(|j| format!("{:12.6}", matrix[(i, j)])).collect();
        println!("  [{}]", row.join(", "));
    }
}

fn cmd_validate(model_path: &Path) -> Result<ExitCode, Failure> {
    let (file, spec) = load_model(model_path)?;
    println!("model: r = {}, p = {}", spec.obs_dim(), spec.state_dim());

    let report = validate_model(&spec);
    if report.is_admissible() {
        println!("prior moments: admissible");
    } else {
        println!("prior moments: NOT admissible");
        print!("{report}");
    }

    match beliefs_from_file(&file, &spec) {
        Ok(Some(_)) => println!("fourth-order beliefs: declared and admissible"),
        Ok(None) => println!("fourth-order beliefs: not declared"),
        Err(err) => {
            println!("fourth-order beliefs: NOT admissible ({err})");
            return Ok(ExitCode::from(1));
        }
    }
    match mixture_from_file(&file, &spec) {
        Ok(Some(_)) => println!("mixture generator: declared and admissible"),
        Ok(None) => {}
        Err(err) => {
            println!("mixture generator: NOT admissible ({err})");
            return Ok(ExitCode::from(1));
        }
    }

    let transfer = compute_transfer(&spec).map_err(Failure::Domain)?;
    print_matrix("transfer matrix H", &transfer.h);
    println!("transfer residual: {:.3e}", transfer.residual);
    if transfer.invertible {
        println!("H invertible: yes (condition estimate {:.3e})", transfer.condition_estimate);
    } else {
        println!("H invertible: no; an invertible completion is used where needed");
    }

    if report.is_admissible() {
        println!("validation: ok");
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn cmd_simulate(
    model_path: &Path,
    n: usize,
    seed: u64,
    generator: GeneratorArg,
    output: Option<&Path>,
) -> Result<ExitCode, Failure> {
    let (file, spec) = load_model(model_path)?;
    let generator = build_generator(&file, &spec, generator)?;
    let series = simulate_series(&spec, &generator, n, seed).map_err(Failure::Domain)?;
    let csv = series_to_csv(&series);
    match output {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

/// Engine value for one relation operand instance.
fn engine_value(
    operands: &RelationOperands,
    beliefs: &FourthOrderBeliefs,
    spec: &ModelSpec,
) -> DMatrix<f64> {
    match operands {
        RelationOperands::TargetProduct { target, product } => {
            cov_target_quadratic(*target, product, beliefs, spec)
        }
        RelationOperands::ProductPair { a, b } => covariance_quadratic(a, b, beliefs, spec),
    }
}

fn cmd_verify(
    model_path: &Path,
    mode: VerifyMode,
    n_reps: usize,
    seed: u64,
    generator: GeneratorArg,
) -> Result<ExitCode, Failure> {
    let (file, spec) = load_model(model_path)?;
    let mut failures = 0usize;
    let cases = RelationCase::all();

    match mode {
        VerifyMode::ClosedForm => {
            let beliefs = beliefs_from_file(&file, &spec)?.ok_or_else(|| {
                Failure::Message(
                    "closed-form verification needs a fourth_order block in the model file"
                        .to_owned(),
                )
            })?;
            for case in &cases {
                let formula = case.closed_form(&beliefs, &spec)?;
                let tolerance = 1e-10 * (1.0 + max_abs(&formula));
                let mut worst: f64 = 0.0;
                for operands in case.instances(&spec)? {
                    let engine = engine_value(&operands, &beliefs, &spec);
                    worst = worst.max(max_abs(&(engine - &formula)));
                }
                let ok = worst <= tolerance;
                failures += usize::from(!ok);
                println!(
                    "relation {:<42} max deviation {:9.3e} (tolerance {:.1e}) {}",
                    case.name(),
                    worst,
                    tolerance,
                    if ok { "ok" } else { "FAIL" }
                );
            }
        }
        VerifyMode::MonteCarlo => {
            let generator = build_generator(&file, &spec, generator)?;
            let beliefs = generator_fourth_moments(&generator).map_err(Failure::Domain)?;
            for case in &cases {
                let instances = case.instances(&spec)?;
                let operands = &instances[0];
                let (engine, estimate) = match operands {
                    RelationOperands::TargetProduct { target, product } => (
                        cov_target_quadratic(*target, product, &beliefs, &spec),
                        monte_carlo_target_cov(*target, product, &spec, &generator, n_reps, seed)
                            .map_err(Failure::Domain)?,
                    ),
                    RelationOperands::ProductPair { a, b } => (
                        covariance_quadratic(a, b, &beliefs, &spec),
                        monte_carlo_cov(a, b, &spec, &generator, n_reps, seed)
                            .map_err(Failure::Domain)?,
                    ),
                };
                let scale = 1.0 + max_abs(&engine);
                let mut outside = 0usize;
                let total = engine.nrows() * engine.ncols();
                for i in 0..engine.nrows() {
                    for j in 0..engine.ncols() {
                        let diff = (estimate.covariance[(i, j)] - engine[(i, j)]).abs();
                        let band = (3.0 * estimate.std_err[(i, j)]).max(1e-9 * scale);
                        outside += usize::from(diff > band);
                    }
                }
                let fraction = outside as f64 / total as f64;
                let ok = fraction <= 0.01;
                failures += usize::from(!ok);
                println!(
                    "relation {:<42} {:>5}/{} entries outside 3 standard errors {}",
                    case.name(),
                    outside,
                    total,
                    if ok { "ok" } else { "FAIL" }
                );
            }
        }
    }

    let passed = cases.len() - failures;
    println!("verify: {passed}/{} relations consistent", cases.len());
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

/// The transfer matrix used for adjustment: H itself when invertible,
/// otherwise its invertible completion.
fn adjustment_transfer(spec: &ModelSpec) -> Result<TransferMatrix, Failure> {
    let transfer = compute_transfer(spec).map_err(Failure::Domain)?;
    if transfer.invertible {
        Ok(transfer)
    } else {
        invertible_completion(spec, &transfer).map_err(Failure::Domain)
    }
}

fn cmd_adjust(
    model_path: &Path,
    data_path: &Path,
    n: Option<usize>,
    psd: PsdArg,
    prior_only: bool,
    output: &Path,
) -> Result<ExitCode, Failure> {
    let (file, spec) = load_model(model_path)?;
    let beliefs = beliefs_from_file(&file, &spec)?.ok_or_else(|| {
        Failure::Message(
            "adjustment needs a fourth_order block in the model file".to_owned(),
        )
    })?;
    let series = read_series_csv(data_path)?;
    let horizon = n.unwrap_or(series.len());

    let basis = if prior_only {
        constants_only_basis(&spec)
    } else {
        let transfer = adjustment_transfer(&spec)?;
        build_basis(&spec, &transfer, horizon).map_err(Failure::Domain)?
    };
    let system = assemble_gram(&basis, &beliefs, &spec);
    let projections = vec![
        project(&system, AdjustTarget::ObservationCov),
        project(&system, AdjustTarget::ProjectedEvolutionCov),
    ];
    let bound = bind_data(&system, &projections, &series).map_err(Failure::Domain)?;

    let policy: PsdPolicy = psd.into();
    let mut targets = Vec::new();
    for adjusted_target in &bound.targets {
        let (repaired, psd_report) = repair_psd(&adjusted_target.adjusted, policy);
        let projection = &adjusted_target.projection;
        println!(
            "{}: resolution {:.4}, effective rank {}/{}, min eigenvalue {:.4e}{}{}",
            projection.target.key(),
            projection.resolution,
            projection.effective_rank,
            system.gram.nrows(),
            psd_report.min_eigenvalue,
            if psd_report.modified { ", clipped to PSD" } else { "" },
            if projection.ill_conditioned { ", ill-conditioned basis" } else { "" },
        );
        targets.push(TargetOutput {
            key: projection.target.key().to_owned(),
            adjusted: repaired,
            coefficients: projection.coefficients.iter().copied().collect(),
            resolution: projection.resolution,
            effective_rank: projection.effective_rank,
            ill_conditioned: projection.ill_conditioned,
            eigenvalues: psd_report.eigenvalues.clone(),
            min_eigenvalue: psd_report.min_eigenvalue,
            modified: psd_report.modified,
        });
    }

    let output_value = AdjustmentOutput {
        n: bound.horizon,
        psd_policy: policy.key().to_owned(),
        targets,
    };
    write_text(output, &adjustment_to_json(&output_value))?;
    println!("adjustment written to {}", output.display());
    Ok(ExitCode::SUCCESS)
}

/// Parsed `--covariances` argument.
enum CovarianceSource {
    Prior,
    Adjusted(PathBuf),
    Both(PathBuf),
}

fn parse_covariances(arg: &str) -> Result<CovarianceSource, Failure> {
    if arg == "prior" {
        return Ok(CovarianceSource::Prior);
    }
    if let Some(path) = arg.strip_prefix("adjusted:") {
        return Ok(CovarianceSource::Adjusted(PathBuf::from(path)));
    }
    if let Some(path) = arg.strip_prefix("both:") {
        return Ok(CovarianceSource::Both(PathBuf::from(path)));
    }
    Err(Failure::Config(ConfigError::Structure {
        path: "--covariances".to_owned(),
        message: format!("expected prior, adjusted:PATH, or both:PATH, got {arg:?}"),
    }))
}

/// Loads the adjusted covariance pair (V, W) for the filter, which is only
/// meaningful when F = I so the projected evolution target is W itself.
fn adjusted_pair(spec: &ModelSpec, path: &Path) -> Result<(DMatrix<f64>, DMatrix<f64>), Failure> {
    if spec.state_dim() != spec.obs_dim()
        || spec.f != DMatrix::identity(spec.state_dim(), spec.obs_dim())
    {
        return Err(Failure::Message(
            "adjusted covariances feed the filter only when F is the identity, because the \
             evolution target is the projection FᵀWF"
                .to_owned(),
        ));
    }
    let targets = read_adjusted_targets(path)?;
    let v = targets.get("observation_cov").cloned().ok_or_else(|| {
        Failure::Config(ConfigError::Structure {
            path: path.display().to_string(),
            message: "missing targets.observation_cov".to_owned(),
        })
    })?;
    let w = targets.get("projected_evolution_cov").cloned().ok_or_else(|| {
        Failure::Config(ConfigError::Structure {
            path: path.display().to_string(),
            message: "missing targets.projected_evolution_cov".to_owned(),
        })
    })?;
    let r = spec.obs_dim();
    for (name, matrix) in [("observation_cov", &v), ("projected_evolution_cov", &w)] {
        if matrix.nrows() != r || matrix.ncols() != r {
            return Err(Failure::Domain(CoreError::DimensionMismatch {
                context: "adjusted covariance",
                expected: format!("{name} of size {r}×{r}"),
                actual: format!("{}×{}", matrix.nrows(), matrix.ncols()),
            }));
        }
    }
    Ok((v, w))
}

fn cmd_forecast(
    model_path: &Path,
    data_path: &Path,
    covariances: &str,
    output: Option<&Path>,
) -> Result<ExitCode, Failure> {
    let (_, spec) = load_model(model_path)?;
    let series = read_series_csv(data_path)?;
    let source = parse_covariances(covariances)?;

    let mut summaries: Vec<(String, f64)> = Vec::new();
    let diagnostics = match source {
        CovarianceSource::Prior => {
            let diagnostics =
                run_filter(&spec, &spec.v, &spec.w, &series).map_err(Failure::Domain)?;
            summaries
                .push(("prior".to_owned(), size_ratio_summary(&diagnostics).map_err(Failure::Domain)?));
            diagnostics
        }
        CovarianceSource::Adjusted(path) => {
            let (v, w) = adjusted_pair(&spec, &path)?;
            let diagnostics = run_filter(&spec, &v, &w, &series).map_err(Failure::Domain)?;
            summaries.push((
                "adjusted".to_owned(),
                size_ratio_summary(&diagnostics).map_err(Failure::Domain)?,
            ));
            diagnostics
        }
        CovarianceSource::Both(path) => {
            let prior = run_filter(&spec, &spec.v, &spec.w, &series).map_err(Failure::Domain)?;
            summaries
                .push(("prior".to_owned(), size_ratio_summary(&prior).map_err(Failure::Domain)?));
            let (v, w) = adjusted_pair(&spec, &path)?;
            let adjusted = run_filter(&spec, &v, &w, &series).map_err(Failure::Domain)?;
            summaries.push((
                "adjusted".to_owned(),
                size_ratio_summary(&adjusted).map_err(Failure::Domain)?,
            ));
            adjusted
        }
    };

    let csv = diagnostics_to_csv(&diagnostics);
    match output {
        Some(path) => {
            write_text(path, &csv)?;
            for (label, summary) in &summaries {
                println!("size ratio summary ({label}): {summary:.4}");
            }
        }
        None => {
            print!("{csv}");
            let mut err = std::io::stderr();
            for (label, summary) in &summaries {
                let _ = writeln!(err, "size ratio summary ({label}): {summary:.4}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
