//! `llglab` — estimation-limits analysis for predictive panels.
//!
//! Exit codes: 0 success, 2 input/config error, 3 fixed-point
//! non-convergence, 1 other failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use llglab::dataio::YearMonth;
use llglab::features::Activation;
use llglab::sim::BandScale;
use llglab_cli::runner::{
    self, LlgArgs, OutputFormat, PreprocessArgs, RmtArgs, SimulateArgs, TableArgs,
};
use llglab_cli::table::TableOptions;

#[derive(Parser)]
#[command(name = "llglab", version, about = "Limits-to-learning gap analysis: corrected out-of-sample R² lower bounds with pivotal confidence bands")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a raw predictor CSV and apply the three-step preprocessing
    /// (rolling standardize, clip, expanding AR(1) residuals).
    Preprocess(PreprocessCli),
    /// Complexity sweep for one target of a processed panel: per-point
    /// gap, corrected bound, and confidence band, plus a summary row.
    Llg(LlgCli),
    /// Run a Monte Carlo experiment config (curves or coverage cells).
    Simulate(SimulateCli),
    /// Solve the spectral fixed point and compare against a sampled design.
    RmtCheck(RmtCli),
    /// Cross-target summary table and correlation matrix.
    Table(TableCli),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Both => OutputFormat::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BandScaleArg {
    /// In-sample T in the band's scale factor (default).
    InSample,
    /// Out-of-sample T in the band's scale factor.
    Oos,
}

impl From<BandScaleArg> for BandScale {
    fn from(b: BandScaleArg) -> Self {
        match b {
            BandScaleArg::InSample => BandScale::InSample,
            BandScaleArg::Oos => BandScale::OutOfSample,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    Tanh,
    Relu,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Relu => Activation::Relu,
        }
    }
}

#[derive(Args)]
struct PreprocessCli {
    /// Input CSV with a `date` column and numeric predictor columns.
    #[arg(long)]
    input: PathBuf,
    /// Output CSV (values plus one `<name>_mask` column per series).
    #[arg(long)]
    output: PathBuf,
    /// Columns to process (default: every non-date column in the header).
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    /// Rolling standardization window in months.
    #[arg(long, default_value_t = 36)]
    window: usize,
    /// Symmetric clip bound after standardization.
    #[arg(long, default_value_t = 3.0)]
    clip: f64,
    /// Minimum observations before the expanding AR(1) estimate is used.
    #[arg(long, default_value_t = 24)]
    min_window: usize,
}

#[derive(Args)]
struct LlgCli {
    /// Processed panel CSV (output of `preprocess`).
    #[arg(long)]
    input: PathBuf,
    /// Target column; predicted one month ahead from all panel columns.
    #[arg(long)]
    target: String,
    /// First out-of-sample target month.
    #[arg(long, default_value = "1990-01")]
    split_date: String,
    /// Reference penalty; the working penalty is z_ref * tr(S'S)/P.
    #[arg(long, default_value_t = 0.01)]
    z_ref: f64,
    #[arg(long, value_enum, default_value_t = ActivationArg::Tanh)]
    activation: ActivationArg,
    /// Number of random features at the top of the complexity grid.
    #[arg(long, default_value_t = 20_000)]
    max_features: usize,
    /// Explicit comma-separated feature-count grid (default: geometric).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Points in the default geometric grid.
    #[arg(long, default_value_t = 20)]
    grid_points: usize,
    /// Feature-map seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample size entering the confidence band's scale factor.
    #[arg(long, value_enum, default_value_t = BandScaleArg::InSample)]
    band_scale: BandScaleArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateCli {
    /// Experiment config file (TOML, schema version 1).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct RmtCli {
    /// Aspect ratio c = P/T of the checked regime.
    #[arg(long)]
    c: f64,
    /// Ridge penalty z.
    #[arg(long)]
    z: f64,
    /// Population spectrum: a file with one eigenvalue per line, or
    /// `identity`.
    #[arg(long, default_value = "identity")]
    spectrum: String,
    /// Feature dimension of the sampled check design.
    #[arg(long, default_value_t = 2000)]
    p: usize,
    /// Sample size of the check design.
    #[arg(long, default_value_t = 1000)]
    t: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TableCli {
    /// Processed panel CSV (output of `preprocess`).
    #[arg(long)]
    input: PathBuf,
    /// Targets (default: all columns except `dy`).
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<String>>,
    /// Model classes to run.
    #[arg(long, value_delimiter = ',', default_values_t = [String::from("ridge"), String::from("recursive")])]
    models: Vec<String>,
    /// Reference-penalty grid.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1, 1.0, 10.0])]
    z_ref_grid: Vec<f64>,
    #[arg(long, default_value = "1990-01")]
    split_date: String,
    #[arg(long, default_value_t = 20_000)]
    max_features: usize,
    #[arg(long, default_value_t = 20)]
    grid_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Features kept by the recursive-ridge selection step.
    #[arg(long, default_value_t = 100)]
    top_k: usize,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    llglab_cli::init_thread_pool();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Preprocess(args) => {
            let files = runner::run_preprocess(&PreprocessArgs {
                input: args.input,
                output: args.output,
                columns: args.columns,
                window: args.window,
                clip: args.clip,
                min_window: args.min_window,
            })?;
            report_files(&files);
        }
        Command::Llg(args) => {
            let files = runner::run_llg(&LlgArgs {
                input: args.input,
                target: args.target,
                split_date: parse_date(&args.split_date)?,
                z_ref: args.z_ref,
                activation: args.activation.into(),
                max_features: args.max_features,
                grid: args.grid,
                grid_points: args.grid_points,
                seed: args.seed,
                band_scale: args.band_scale.into(),
                format: args.format.into(),
                out_dir: args.out_dir,
            })?;
            report_files(&files);
        }
        Command::Simulate(args) => {
            let files = runner::run_simulate(&SimulateArgs {
                config: args.config,
                seeds_override: args.seeds,
                out_dir: args.out_dir,
                format: args.format.into(),
            })?;
            report_files(&files);
        }
        Command::RmtCheck(args) => {
            let spectrum = match args.spectrum.as_str() {
                "identity" => None,
                path => Some(PathBuf::from(path)),
            };
            let report = runner::run_rmt_check(&RmtArgs {
                c: args.c,
                z: args.z,
                spectrum,
                p: args.p,
                t: args.t,
                seed: args.seed,
            })?;
            print!("{report}");
        }
        Command::Table(args) => {
            let run_ridge = args.models.iter().any(|m| m == "ridge");
            let run_recursive = args.models.iter().any(|m| m == "recursive");
            if let Some(bad) = args.models.iter().find(|m| *m != "ridge" && *m != "recursive") {
                anyhow::bail!(llglab::Error::InvalidParameter(format!(
                    "unknown model class `{bad}` (expected ridge or recursive)"
                )));
            }
            let (report, files) = runner::run_table_command(&TableArgs {
                input: args.input,
                options: TableOptions {
                    targets: args.targets,
                    z_ref_grid: args.z_ref_grid,
                    split_date: parse_date(&args.split_date)?,
                    max_features: args.max_features,
                    grid_points: args.grid_points,
                    feature_seed: args.seed,
                    top_k: args.top_k,
                    run_ridge,
                    run_recursive,
                },
                out_dir: args.out_dir,
                format: args.format.into(),
            })?;
            for row in &report.rows {
                println!(
                    "{}: tanh bound {:.3}, relu bound {:.3}, best ridge {:.3}, best recursive {:.3}",
                    row.target, row.tanh_bound, row.relu_bound, row.best_ridge_r2, row.best_recursive_r2
                );
            }
            report_files(&files);
        }
    }
    Ok(())
}

fn parse_date(s: &str) -> anyhow::Result<YearMonth> {
    Ok(s.parse::<YearMonth>()?)
}

fn report_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

/// Exit-code contract: 2 for anything wrong with inputs or configuration,
/// 3 for solver non-convergence, 1 otherwise.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<llglab::Error>() {
            return match e {
                llglab::Error::NonConvergence(_) => 3,
                llglab::Error::MissingColumn(_)
                | llglab::Error::UnparsableCell { .. }
                | llglab::Error::NonMonotoneDates(_)
                | llglab::Error::InvalidParameter(_)
                | llglab::Error::InsufficientData(_)
                | llglab::Error::Config(_)
                | llglab::Error::Io(_)
                | llglab::Error::Csv(_)
                | llglab::Error::DimensionMismatch(_) => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    // Heuristic for context-wrapped input problems.
    let text = format!("{err:#}");
    if text.contains("reading ") || text.contains("split at") || text.contains("leaves") {
        return 2;
    }
    1
}
