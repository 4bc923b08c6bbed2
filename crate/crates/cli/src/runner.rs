//! Command drivers: each takes parsed arguments, produces output files,
//! and returns the paths it wrote (manifest last).

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use llglab::dataio::{
    aligned_supervised, load_predictor_csv, preprocess_panel, read_processed_csv,
    write_processed_csv, YearMonth,
};
use llglab::estimators::SplitCache;
use llglab::features::{generate_weights, random_signal_matrix, Activation};
use llglab::llg::llg_ridge;
use llglab::rmt::{
    deterministic_equivalent_llg, empirical_stieltjes_from_spectrum, solve_fixed_point,
};
use llglab::sim::{
    run_experiment, seeded_gaussian_matrix, sub_seed, BandScale, ExperimentConfig,
    ExperimentOutput, VoCCurve, VocOptions, VocSweep,
};
use serde::Serialize;

use crate::manifest::ManifestBuilder;
use crate::output::{
    fmt_g17, write_coverage_csv, write_curve_csv, write_curve_json, write_json_report,
};
use crate::table::{run_table, TableOptions, TableReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }
    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

/// Geometric grid of feature counts from `lo` to `hi` with `points`
/// entries, rounded to integers, deduplicated, endpoints pinned.
pub fn geometric_grid(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    assert!(lo >= 1 && hi >= lo && points >= 1);
    if points == 1 || lo == hi {
        return vec![hi];
    }
    let (a, b) = (lo as f64, hi as f64);
    let mut grid: Vec<usize> = (0..points)
        .map(|i| {
            let frac = i as f64 / (points - 1) as f64;
            (a * (b / a).powf(frac)).round() as usize
        })
        .collect();
    grid[0] = lo;
    *grid.last_mut().expect("nonempty") = hi;
    grid.dedup();
    grid
}

pub struct PreprocessArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub columns: Option<Vec<String>>,
    pub window: usize,
    pub clip: f64,
    pub min_window: usize,
}

pub fn run_preprocess(args: &PreprocessArgs) -> Result<Vec<PathBuf>> {
    let header_columns = csv_header_columns(&args.input)?;
    let schema: Vec<String> = match &args.columns {
        Some(cols) => cols.clone(),
        None => header_columns.into_iter().filter(|c| c != "date").collect(),
    };
    let schema_refs: Vec<&str> = schema.iter().map(String::as_str).collect();
    let panel = load_predictor_csv::<f64>(&args.input, &schema_refs)?;
    let processed = preprocess_panel(&panel, args.window, args.clip, args.min_window)?;
    write_processed_csv(&processed, &args.output)?;

    let canonical = format!(
        "command=preprocess input={} columns={} window={} clip={} min_window={}",
        args.input.display(),
        schema.join(","),
        args.window,
        args.clip,
        args.min_window
    );
    let mut builder = ManifestBuilder::new("preprocess", &canonical, vec![]);
    builder.record(args.output.clone());
    let dir = args.output.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let stem = args.output.file_stem().and_then(|s| s.to_str()).unwrap_or("preprocess");
    builder.finish(&dir, stem)
}

fn csv_header_columns(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let header = text
        .lines()
        .find(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .context("input csv has no header row")?;
    Ok(header.split(',').map(|c| c.trim().trim_matches('"').to_string()).collect())
}

pub struct LlgArgs {
    pub input: PathBuf,
    pub target: String,
    pub split_date: YearMonth,
    pub z_ref: f64,
    pub activation: Activation,
    pub max_features: usize,
    pub grid: Option<Vec<usize>>,
    pub grid_points: usize,
    pub seed: u64,
    pub band_scale: BandScale,
    pub format: OutputFormat,
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct LlgSummary {
    pub target: String,
    pub best_lower_bound: f64,
    pub best_conf_lower: f64,
    pub best_r2_oos: f64,
    /// Feature count attaining the best band lower end.
    pub argmax_p1: usize,
    pub t_in: usize,
    pub t_oos: usize,
}

pub fn run_llg(args: &LlgArgs) -> Result<Vec<PathBuf>> {
    let panel = read_processed_csv::<f64>(&args.input)?;
    let sup = aligned_supervised(&panel, &args.target)?;
    let split = sup.split_index_at(args.split_date);
    let n = sup.x.nrows();
    if split < 24 || n - split < 24 {
        bail!(
            "split at {} leaves {} in-sample / {} out-of-sample rows; need at least 24 each",
            args.split_date,
            split,
            n.saturating_sub(split)
        );
    }
    let p_grid = match &args.grid {
        Some(g) => g.clone(),
        None => geometric_grid(100.min(args.max_features), args.max_features, args.grid_points),
    };
    let map = generate_weights::<f64>(sup.x.ncols(), args.max_features, args.seed, args.activation)?;
    let signals = random_signal_matrix(&sup.x, &map, split)?;
    let sweep = VocSweep::build(&signals, &p_grid)?;
    let opts = VocOptions { scale: args.band_scale, ..Default::default() };
    let curve = sweep.curve(&sup.y, args.z_ref, &opts)?;

    let best = curve
        .points
        .iter()
        .max_by(|a, b| a.conf_lower.partial_cmp(&b.conf_lower).expect("finite"))
        .expect("nonempty grid");
    let summary = LlgSummary {
        target: args.target.clone(),
        best_lower_bound: curve.points.iter().map(|p| p.lower_bound).fold(f64::MIN, f64::max),
        best_conf_lower: best.conf_lower,
        best_r2_oos: curve.points.iter().map(|p| p.r2_oos).fold(f64::MIN, f64::max),
        argmax_p1: best.p1,
        t_in: split,
        t_oos: n - split,
    };

    let canonical = format!(
        "command=llg input={} target={} split={} z_ref={} activation={:?} max_features={} grid={:?} seed={} band_scale={:?}",
        args.input.display(),
        args.target,
        args.split_date,
        args.z_ref,
        args.activation,
        args.max_features,
        p_grid,
        args.seed,
        args.band_scale
    );
    let mut builder = ManifestBuilder::new("llg", &canonical, vec![args.seed]);
    std::fs::create_dir_all(&args.out_dir)?;
    let digest = builder.digest().to_string();
    if args.format.csv() {
        let path = args.out_dir.join(format!("{}_voc.csv", args.target));
        let mut tagged = curve.clone();
        tagged.seed = Some(args.seed);
        write_curve_csv(&path, &digest, &tagged)?;
        builder.record(path);
        let path = args.out_dir.join(format!("{}_summary.csv", args.target));
        write_llg_summary_csv(&path, &digest, &summary)?;
        builder.record(path);
    }
    if args.format.json() {
        let path = args.out_dir.join(format!("{}_voc.json", args.target));
        let mut tagged = curve.clone();
        tagged.seed = Some(args.seed);
        write_curve_json(&path, &digest, &tagged)?;
        builder.record(path);
        let path = args.out_dir.join(format!("{}_summary.json", args.target));
        write_json_report(&path, &digest, &summary)?;
        builder.record(path);
    }
    builder.finish(&args.out_dir, &format!("{}_llg", args.target))
}

fn write_llg_summary_csv(path: &Path, digest: &str, s: &LlgSummary) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# manifest: {digest}")?;
    writeln!(out, "target,best_lower_bound,best_conf_lower,best_r2_oos,argmax_p1,t_in,t_oos")?;
    writeln!(
        out,
        "{},{},{},{},{},{},{}",
        s.target,
        fmt_g17(s.best_lower_bound),
        fmt_g17(s.best_conf_lower),
        fmt_g17(s.best_r2_oos),
        s.argmax_p1,
        s.t_in,
        s.t_oos
    )?;
    out.flush()?;
    Ok(())
}

pub struct SimulateArgs {
    pub config: PathBuf,
    pub seeds_override: Option<Vec<u64>>,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
}

pub fn run_simulate(args: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config = ExperimentConfig::from_toml_str(&text)?;
    if let Some(seeds) = &args.seeds_override {
        config.seeds = seeds.clone();
        config.validate()?;
    }
    let canonical = config.canonical_toml()?;
    let mut builder = ManifestBuilder::new("simulate", &canonical, config.seeds.clone());
    let digest = builder.digest().to_string();
    std::fs::create_dir_all(&args.out_dir)?;

    match run_experiment::<f64>(&config)? {
        ExperimentOutput::Curves(groups) => {
            for group in &groups {
                for curve in &group.per_seed {
                    let seed = curve.seed.expect("per-seed curve");
                    write_curve_files(args, &mut builder, &digest, curve, &format!("{}_seed{}", group.label, seed))?;
                }
                write_curve_files(args, &mut builder, &digest, &group.mean, &format!("{}_mean", group.label))?;
            }
        }
        ExperimentOutput::Coverage(report) => {
            if args.format.csv() {
                let path = args.out_dir.join("coverage.csv");
                write_coverage_csv(&path, &digest, &report)?;
                builder.record(path);
            }
            if args.format.json() {
                let path = args.out_dir.join("coverage.json");
                write_json_report(&path, &digest, &report)?;
                builder.record(path);
            }
        }
    }
    builder.finish(&args.out_dir, "simulate")
}

fn write_curve_files(
    args: &SimulateArgs,
    builder: &mut ManifestBuilder,
    digest: &str,
    curve: &VoCCurve<f64>,
    stem: &str,
) -> Result<()> {
    if args.format.csv() {
        let path = args.out_dir.join(format!("{stem}.csv"));
        write_curve_csv(&path, digest, curve)?;
        builder.record(path);
    }
    if args.format.json() {
        let path = args.out_dir.join(format!("{stem}.json"));
        write_curve_json(&path, digest, curve)?;
        builder.record(path);
    }
    Ok(())
}

pub struct RmtArgs {
    pub c: f64,
    pub z: f64,
    /// `None` for the identity population spectrum, otherwise a file with
    /// one eigenvalue per line.
    pub spectrum: Option<PathBuf>,
    pub p: usize,
    pub t: usize,
    pub seed: u64,
}

/// Fixed-point solution versus a sampled Gaussian design, as a plain-text
/// report.
pub fn run_rmt_check(args: &RmtArgs) -> Result<String> {
    if args.p == 0 || args.t == 0 {
        bail!("rmt-check needs p >= 1 and t >= 1");
    }
    let base = match &args.spectrum {
        None => vec![1.0f64],
        Some(path) => parse_spectrum_file(path)?,
    };
    // Tile the base spectrum to the sampled dimension.
    let spectrum: Vec<f64> = (0..args.p).map(|i| base[i % base.len()]).collect();
    let sol = solve_fixed_point(&spectrum, args.z, args.c)?;
    let det_llg = deterministic_equivalent_llg(&sol);

    // Sampled design with the population spectrum on the diagonal.
    let mut s = seeded_gaussian_matrix::<f64>(args.t, args.p, sub_seed(args.seed, &[0]));
    let mut s_oos = seeded_gaussian_matrix::<f64>(args.t, args.p, sub_seed(args.seed, &[1]));
    for (j, lambda) in spectrum.iter().enumerate() {
        let scale = lambda.sqrt();
        s.column_mut(j).scale_mut(scale);
        s_oos.column_mut(j).scale_mut(scale);
    }
    let cache = SplitCache::new(&s, &s_oos)?;
    let eigs: Vec<f64> = cache.base().eigenvalues().iter().copied().collect();
    let (m_hat, _) = empirical_stieltjes_from_spectrum(&eigs, args.p - eigs.len(), args.z);
    let llg_hat = llg_ridge(&s, &s_oos, args.z)?;

    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let mut out = String::new();
    writeln!(out, "fixed point at z = {}, c = {} (spectrum: {} distinct values tiled to P = {})", args.z, args.c, base.len(), args.p)?;
    writeln!(out, "  m            = {}", fmt_g17(sol.m))?;
    writeln!(out, "  m'           = {}", fmt_g17(sol.m_prime))?;
    writeln!(out, "  xi           = {}", fmt_g17(sol.xi))?;
    writeln!(out, "  Z*           = {}", fmt_g17(sol.z_star))?;
    writeln!(out, "  residual     = {:.3e}", sol.residual)?;
    writeln!(out, "  gap (det eq) = {}", fmt_g17(det_llg))?;
    writeln!(out, "sampled design: T = {}, P = {}, seed = {}", args.t, args.p, args.seed)?;
    writeln!(out, "  m_hat        = {}   rel gap {:.4}%", fmt_g17(m_hat), 100.0 * rel(m_hat, sol.m))?;
    writeln!(out, "  gap_hat      = {}   rel gap {:.4}%", fmt_g17(llg_hat), 100.0 * rel(llg_hat, det_llg))?;
    Ok(out)
}

fn parse_spectrum_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| llglab::Error::UnparsableCell { row: i, col: "spectrum".into() })?;
        if v < 0.0 {
            bail!(llglab::Error::InvalidParameter(format!("negative eigenvalue at line {i}")));
        }
        values.push(v);
    }
    if values.is_empty() {
        bail!(llglab::Error::InvalidParameter("spectrum file has no eigenvalues".into()));
    }
    Ok(values)
}

pub struct TableArgs {
    pub input: PathBuf,
    pub options: TableOptions,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
}

pub fn run_table_command(args: &TableArgs) -> Result<(TableReport, Vec<PathBuf>)> {
    let panel = read_processed_csv::<f64>(&args.input)?;
    let report = run_table(&panel, &args.options)?;

    let canonical = format!(
        "command=table input={} targets={:?} z_ref_grid={:?} split={} max_features={} grid_points={} seed={} top_k={} ridge={} recursive={}",
        args.input.display(),
        args.options.targets,
        args.options.z_ref_grid,
        args.options.split_date,
        args.options.max_features,
        args.options.grid_points,
        args.options.feature_seed,
        args.options.top_k,
        args.options.run_ridge,
        args.options.run_recursive,
    );
    let mut builder = ManifestBuilder::new("table", &canonical, vec![args.options.feature_seed]);
    let digest = builder.digest().to_string();
    std::fs::create_dir_all(&args.out_dir)?;
    if args.format.csv() {
        let path = args.out_dir.join("table_summary.csv");
        write_table_csv(&path, &digest, &report)?;
        builder.record(path);
        let path = args.out_dir.join("table_correlation.csv");
        write_correlation_csv(&path, &digest, &report)?;
        builder.record(path);
    }
    if args.format.json() {
        let path = args.out_dir.join("table_summary.json");
        write_json_report(&path, &digest, &report)?;
        builder.record(path);
    }
    let files = builder.finish(&args.out_dir, "table")?;
    Ok((report, files))
}

fn write_table_csv(path: &Path, digest: &str, report: &TableReport) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# manifest: {digest}")?;
    writeln!(out, "target,tanh_bound,relu_bound,best_ridge_r2,best_recursive_r2")?;
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.target,
            fmt_g17(row.tanh_bound),
            fmt_g17(row.relu_bound),
            fmt_g17(row.best_ridge_r2),
            fmt_g17(row.best_recursive_r2)
        )?;
    }
    out.flush()?;
    Ok(())
}

fn write_correlation_csv(path: &Path, digest: &str, report: &TableReport) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# manifest: {digest}")?;
    match &report.correlation {
        Some(matrix) => {
            writeln!(out, ",{}", report.column_names.join(","))?;
            for (name, row) in report.column_names.iter().zip(matrix) {
                let cells: Vec<String> = row.iter().map(|v| fmt_g17(*v)).collect();
                writeln!(out, "{},{}", name, cells.join(","))?;
            }
        }
        None => {
            writeln!(out, "correlation undefined: fewer than two targets")?;
        }
    }
    out.flush()?;
    Ok(())
}
