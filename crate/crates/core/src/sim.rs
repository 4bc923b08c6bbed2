//! Semi-synthetic targets, GARCH noise, and the Monte Carlo harness.
//!
//! The semi-synthetic design keeps real (or synthetic) predictor paths
//! `X_t` and plants a single-index truth `f_t = gamma * g(X_t'W)` with
//! standard-normal noise, so the infeasible population R² is known and the
//! corrected lower bound can be tested against it. The harness sweeps the
//! complexity grid (feature count `P1`), replicates over seeds, and runs
//! coverage cells for the one-sided band.
//!
//! Everything is deterministic in `(seeds, config)`: replications own
//! ChaCha sub-streams derived by a splitmix mix, parallel maps preserve
//! order, and aggregation is sequential.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clt::{self, ExtremumMode};
use crate::dataio::{self, MaskedSeries};
use crate::error::{Error, Result};
use crate::estimators::SplitCache;
use crate::features::{
    generate_weights, random_signal_matrix, standard_normal_vector, Activation, SignalMatrix,
};
use crate::llg;
use crate::scalar::Scalar;

/// Derive an independent sub-seed from a base seed and a role path.
pub fn sub_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = splitmix64(base ^ 0x6C6C_676C_6162_u64);
    for &p in parts {
        x = splitmix64(x ^ splitmix64(p.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    x
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seeded_gaussian_matrix<T: Scalar>(rows: usize, cols: usize, seed: u64) -> DMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| T::standard_normal(&mut rng))
}

pub fn seeded_gaussian_vector<T: Scalar>(n: usize, seed: u64) -> DVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| T::standard_normal(&mut rng))
}

/// Single-index truth specification. When `target_r2` is set, `gamma` is
/// recalibrated from the drawn direction so the implied population R²
/// matches the target; otherwise `gamma` is used as given.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SemiSyntheticSpec<T: Scalar> {
    pub gamma: T,
    pub activation: Activation,
    pub w_seed: u64,
    pub eps_seed: u64,
    pub target_r2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SemiSyntheticDraw<T: Scalar> {
    pub y: DVector<T>,
    pub f: DVector<T>,
    /// `sum f^2 / sum y^2`, the plug-in for the infeasible R².
    pub r2_star_hat: T,
}

/// Generate `y[i] = gamma * g(X_i'W) + eps[i]` with `W ~ N(0, I_d)` from
/// `w_seed` and `eps ~ N(0, 1)` from `eps_seed`.
pub fn semi_synthetic<T: Scalar>(
    x: &DMatrix<T>,
    spec: &SemiSyntheticSpec<T>,
) -> Result<SemiSyntheticDraw<T>> {
    if x.iter().any(|v| !v.is_finite_scalar()) {
        return Err(Error::InvalidParameter("predictor paths must be finite".into()));
    }
    let w = standard_normal_vector::<T>(x.ncols(), spec.w_seed);
    let gamma = match spec.target_r2 {
        Some(target) => calibrate_gamma(x, spec.activation, &w, T::c(target), T::one())?,
        None => {
            if spec.gamma < T::zero() {
                return Err(Error::InvalidParameter("gamma must be nonnegative".into()));
            }
            spec.gamma
        }
    };
    let mut f = x * &w;
    f.apply(|v| *v = gamma * spec.activation.apply(*v));
    let eps = seeded_gaussian_vector::<T>(x.nrows(), spec.eps_seed);
    let y = &f + eps;
    let energy = y.norm_squared();
    let r2_star_hat = if energy > T::zero() { f.norm_squared() / energy } else { T::zero() };
    Ok(SemiSyntheticDraw { y, f, r2_star_hat })
}

/// Solve `target = E f^2 / (E f^2 + sigma_eps2)` for the signal scale:
/// `gamma = sqrt(target/(1-target) * sigma_eps2 / mean g(X'W)^2)`.
pub fn calibrate_gamma<T: Scalar>(
    x: &DMatrix<T>,
    activation: Activation,
    w: &DVector<T>,
    target_r2: T,
    sigma_eps2: T,
) -> Result<T> {
    if target_r2 < T::zero() || target_r2 >= T::one() {
        return Err(Error::InvalidParameter("target R2 must lie in [0, 1)".into()));
    }
    if target_r2 == T::zero() {
        return Ok(T::zero());
    }
    let mut g = x * w;
    g.apply(|v| *v = activation.apply(*v));
    let mean_g2 = g.norm_squared() / T::from_count(x.nrows());
    if mean_g2 <= T::zero() {
        return Err(Error::InvalidParameter("degenerate g-energy: g(X'W) is identically zero".into()));
    }
    Ok((target_r2 / (T::one() - target_r2) * sigma_eps2 / mean_g2).sqrt())
}

/// GARCH(1,1) parameters; defaults are `omega = 0.5, alpha = 0.05,
/// beta = 0.9`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GarchParams<T: Scalar> {
    pub omega: T,
    pub alpha: T,
    pub beta: T,
    pub seed: u64,
}

impl<T: Scalar> Default for GarchParams<T> {
    fn default() -> Self {
        Self { omega: T::c(0.5), alpha: T::c(0.05), beta: T::c(0.9), seed: 0 }
    }
}

impl<T: Scalar> GarchParams<T> {
    fn validate(&self) -> Result<()> {
        if self.omega <= T::zero() || self.alpha <= T::zero() || self.beta <= T::zero() {
            return Err(Error::InvalidParameter("GARCH parameters must be positive".into()));
        }
        if self.alpha + self.beta >= T::one() {
            return Err(Error::InvalidParameter("GARCH needs alpha + beta < 1".into()));
        }
        Ok(())
    }

    /// Stationary variance `omega / (1 - alpha - beta)`, also the
    /// initialization of the recursion.
    pub fn stationary_variance(&self) -> T {
        self.omega / (T::one() - self.alpha - self.beta)
    }
}

/// `y_t = sigma_t z_t` with
/// `sigma_t^2 = omega + alpha y_{t-1}^2 + beta sigma_{t-1}^2` and
/// `sigma_1^2 = omega / (1 - alpha - beta)`.
pub fn garch11<T: Scalar>(t: usize, params: &GarchParams<T>) -> Result<DVector<T>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut y = DVector::zeros(t);
    let mut var = params.stationary_variance();
    for i in 0..t {
        if i > 0 {
            var = params.omega + params.alpha * y[i - 1] * y[i - 1] + params.beta * var;
        }
        y[i] = var.sqrt() * T::standard_normal(&mut rng);
    }
    Ok(y)
}

/// GARCH draw passed through the first two preprocessing steps (rolling
/// standardize + clip); extra warm-up observations are generated so the
/// output still has length `t`.
pub fn garch11_standardized<T: Scalar>(
    t: usize,
    params: &GarchParams<T>,
    window: usize,
    bound: T,
) -> Result<DVector<T>> {
    let raw = garch11(t + window, params)?;
    let series = MaskedSeries::from_values(raw.iter().copied().collect());
    let out = dataio::standardize_and_clip(&series, window, bound)?;
    let values: Vec<T> = out.series.iter().flatten().collect();
    if values.len() < t {
        return Err(Error::InsufficientData("degenerate windows in GARCH standardization".into()));
    }
    Ok(DVector::from_vec(values[..t].to_vec()))
}

/// Which sample size enters the `scale^{-1/2}` factor of the band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandScale {
    /// In-sample `T`, the main-text convention. Default.
    #[default]
    InSample,
    /// `T_oos` as the scale factor.
    OutOfSample,
}

/// Knobs shared by every complexity sweep.
#[derive(Debug, Clone)]
pub struct VocOptions<T: Scalar> {
    pub level: f64,
    pub scale: BandScale,
    /// The feasible-noise cap minimizes `MSE(z)/(1+L(z))` over
    /// `z * multipliers`.
    pub cap_multipliers: Vec<T>,
    pub extremum: ExtremumMode,
}

impl<T: Scalar> Default for VocOptions<T> {
    fn default() -> Self {
        Self {
            level: 0.95,
            scale: BandScale::InSample,
            cap_multipliers: vec![T::one(), T::c(10.0), T::c(100.0), T::c(1000.0)],
            extremum: ExtremumMode::ConservativeMax,
        }
    }
}

/// One point of a virtue-of-complexity curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VoCPoint<T: Scalar> {
    pub p1: usize,
    /// `c = P1 / T`.
    pub c: T,
    pub r2_oos: T,
    pub llg: T,
    pub lower_bound: T,
    pub sigma_r2_hat: T,
    pub conf_lower: T,
    /// Plotting convention: `r2_oos < -1` is flagged but never dropped.
    pub flagged_low_r2: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VoCCurve<T: Scalar> {
    /// Feature seed that produced the curve; `None` for aggregate curves.
    pub seed: Option<u64>,
    pub points: Vec<VoCPoint<T>>,
}

/// Prefix sweep over the feature-count grid on a fixed signal panel,
/// independent of any target.
///
/// The in-sample and cross Gram matrices accumulate over prefix blocks, so
/// building the sweep costs one pass over the features plus a `T x T`
/// eigendecomposition per grid point. Curves for different targets and
/// reference penalties then reuse the cached spectra.
pub struct VocSweep<T: Scalar> {
    t_in: usize,
    t_oos: usize,
    stages: Vec<SweepStage<T>>,
}

struct SweepStage<T: Scalar> {
    p1: usize,
    energy_in: T,
    cache: SplitCache<T>,
}

impl<T: Scalar> VocSweep<T> {
    pub fn build(signals: &SignalMatrix<T>, p1_grid: &[usize]) -> Result<Self> {
        let t = signals.t_in();
        let t_oos = signals.t_oos();
        let p = signals.n_features();
        if p1_grid.is_empty() {
            return Err(Error::InvalidParameter("empty P1 grid".into()));
        }
        if p1_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("P1 grid must be strictly increasing".into()));
        }
        if p1_grid[0] == 0 || *p1_grid.last().expect("nonempty") > p {
            return Err(Error::InvalidParameter(format!("P1 grid must lie in [1, {p}]")));
        }
        let (s_in, s_oos) = signals.split_pair();
        let tn = T::from_count(t);
        let mut g_in: DMatrix<T> = DMatrix::zeros(t, t);
        let mut d_gram: DMatrix<T> = DMatrix::zeros(t_oos, t);
        let mut energy_in = T::zero();
        let mut done = 0usize;
        let mut snapshots = Vec::with_capacity(p1_grid.len());
        for &p1 in p1_grid {
            let width = p1 - done;
            let block_in = s_in.columns(done, width);
            let block_oos = s_oos.columns(done, width);
            g_in += block_in * block_in.transpose() / tn;
            d_gram += block_oos * block_in.transpose();
            energy_in += block_in.norm_squared();
            done = p1;
            if energy_in <= T::zero() {
                return Err(Error::DegenerateSignals);
            }
            snapshots.push((p1, energy_in, g_in.clone(), d_gram.clone()));
        }
        let stages: Vec<SweepStage<T>> = snapshots
            .into_par_iter()
            .map(|(p1, energy, g, d)| {
                Ok(SweepStage { p1, energy_in: energy, cache: SplitCache::from_grams(g, d, t_oos, p1)? })
            })
            .collect::<Result<_>>()?;
        Ok(Self { t_in: t, t_oos, stages })
    }

    pub fn t_in(&self) -> usize {
        self.t_in
    }

    pub fn t_oos(&self) -> usize {
        self.t_oos
    }

    /// Evaluate the curve for one target at one reference penalty. At each
    /// grid point the working penalty is `z_ref * tr(S1'S1)/P1` on the
    /// in-sample prefix.
    pub fn curve(&self, y: &DVector<T>, z_ref: T, opts: &VocOptions<T>) -> Result<VoCCurve<T>> {
        if y.len() != self.t_in + self.t_oos {
            return Err(Error::DimensionMismatch("one target per signal row".into()));
        }
        let y_in = y.rows(0, self.t_in).into_owned();
        let y_oos = y.rows(self.t_in, self.t_oos).into_owned();
        let points = self
            .stages
            .iter()
            .map(|stage| {
                let z = z_ref * stage.energy_in / T::from_count(stage.p1);
                evaluate_point(&stage.cache, &y_in, &y_oos, stage.p1, z, opts)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(VoCCurve { seed: None, points })
    }
}

/// One-shot build-and-evaluate convenience over [`VocSweep`].
pub fn voc_curve<T: Scalar>(
    signals: &SignalMatrix<T>,
    y: &DVector<T>,
    p1_grid: &[usize],
    z_ref: T,
    opts: &VocOptions<T>,
) -> Result<VoCCurve<T>> {
    VocSweep::build(signals, p1_grid)?.curve(y, z_ref, opts)
}

fn evaluate_point<T: Scalar>(
    cache: &SplitCache<T>,
    y_in: &DVector<T>,
    y_oos: &DVector<T>,
    p1: usize,
    z: T,
    opts: &VocOptions<T>,
) -> Result<VoCPoint<T>> {
    let llg_v = cache.llg(z)?;
    let preds = cache.predict_oos(y_in, z)?;
    let r2 = llg::r2_oos(y_oos, &preds)?;
    let lower = llg::corrected_r2_lower_bound(r2, llg_v);
    let grid: Vec<T> = opts.cap_multipliers.iter().map(|&m| z * m).collect();
    let (_, sigma) = clt::sigma_r2_hat_on_cache(cache, y_in, y_oos, &grid, opts.extremum)?;
    let scale_t = match opts.scale {
        BandScale::InSample => cache.t_in(),
        BandScale::OutOfSample => cache.t_oos(),
    };
    let conf = clt::confidence_lower_bound(lower, sigma, scale_t, opts.level)?.conf_lower;
    Ok(VoCPoint {
        p1,
        c: T::from_count(p1) / T::from_count(cache.t_in()),
        r2_oos: r2,
        llg: llg_v,
        lower_bound: lower,
        sigma_r2_hat: sigma,
        conf_lower: conf,
        flagged_low_r2: r2 < -T::one(),
    })
}

#[derive(Debug, Clone)]
pub struct VocExperiment<T: Scalar> {
    pub per_seed: Vec<VoCCurve<T>>,
    pub mean: VoCCurve<T>,
}

/// Replicate the sweep over feature-map seeds on fixed data `(x, y)`:
/// per-seed raw curves plus the pointwise mean curve.
#[allow(clippy::too_many_arguments)]
pub fn voc_experiment<T: Scalar>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    split_index: usize,
    p1_grid: &[usize],
    z_ref: T,
    activation: Activation,
    seeds: &[u64],
    opts: &VocOptions<T>,
) -> Result<VocExperiment<T>> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("need at least one seed".into()));
    }
    let p_max = *p1_grid.last().ok_or_else(|| Error::InvalidParameter("empty P1 grid".into()))?;
    let per_seed: Vec<VoCCurve<T>> = seeds
        .par_iter()
        .map(|&seed| {
            let map = generate_weights::<T>(x.ncols(), p_max, seed, activation)?;
            let signals = random_signal_matrix(x, &map, split_index)?;
            let mut curve = voc_curve(&signals, y, p1_grid, z_ref, opts)?;
            curve.seed = Some(seed);
            Ok(curve)
        })
        .collect::<Result<_>>()?;
    let mean = mean_curve(&per_seed);
    Ok(VocExperiment { per_seed, mean })
}

/// Pointwise arithmetic mean of aligned curves.
pub fn mean_curve<T: Scalar>(curves: &[VoCCurve<T>]) -> VoCCurve<T> {
    let n = T::from_count(curves.len());
    let len = curves.first().map_or(0, |c| c.points.len());
    let mut points = Vec::with_capacity(len);
    for i in 0..len {
        let mut acc = VoCPoint {
            p1: curves[0].points[i].p1,
            c: curves[0].points[i].c,
            r2_oos: T::zero(),
            llg: T::zero(),
            lower_bound: T::zero(),
            sigma_r2_hat: T::zero(),
            conf_lower: T::zero(),
            flagged_low_r2: false,
        };
        for curve in curves {
            let pt = &curve.points[i];
            acc.r2_oos += pt.r2_oos;
            acc.llg += pt.llg;
            acc.lower_bound += pt.lower_bound;
            acc.sigma_r2_hat += pt.sigma_r2_hat;
            acc.conf_lower += pt.conf_lower;
        }
        acc.r2_oos /= n;
        acc.llg /= n;
        acc.lower_bound /= n;
        acc.sigma_r2_hat /= n;
        acc.conf_lower /= n;
        acc.flagged_low_r2 = acc.r2_oos < -T::one();
        points.push(acc);
    }
    VoCCurve { seed: None, points }
}

/// One coverage cell: fraction of replications whose band lower end stays
/// below the realized population R².
#[derive(Debug, Clone, Serialize)]
pub struct CoverageCell<T: Scalar> {
    pub t: usize,
    pub t_oos: usize,
    pub p: usize,
    pub target_r2: f64,
    pub replications: usize,
    pub coverage_rate: f64,
    pub mean_conf_lower: T,
    pub mean_lower_bound: T,
    pub mean_r2_star: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport<T: Scalar> {
    pub cells: Vec<CoverageCell<T>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageDesign<T: Scalar> {
    pub t: usize,
    pub t_oos: usize,
    pub d: usize,
    pub p: usize,
    pub z_ref: T,
    pub activation: Activation,
    pub r2_values: Vec<f64>,
    pub replications: usize,
    pub base_seed: u64,
    pub level: f64,
}

/// Monte Carlo coverage of the one-sided band across `(T, P, R2*)` cells.
/// Every replication draws fresh predictors, truth direction, noise, and
/// feature weights from disjoint sub-streams.
pub fn coverage_study<T: Scalar>(design: &CoverageDesign<T>) -> Result<CoverageReport<T>> {
    if design.replications == 0 {
        return Err(Error::InvalidParameter("coverage needs at least one replication".into()));
    }
    let opts = VocOptions::<T> { level: design.level, ..Default::default() };
    let mut cells = Vec::with_capacity(design.r2_values.len());
    for (cell_idx, &target) in design.r2_values.iter().enumerate() {
        let draws: Vec<(bool, T, T, T)> = (0..design.replications)
            .into_par_iter()
            .map(|rep| coverage_rep(design, cell_idx as u64, rep as u64, target, &opts))
            .collect::<Result<_>>()?;
        let n = design.replications as f64;
        let nt = T::from_count(design.replications);
        let covered = draws.iter().filter(|d| d.0).count() as f64;
        let sum = |f: fn(&(bool, T, T, T)) -> T| {
            draws.iter().map(f).fold(T::zero(), |a, b| a + b) / nt
        };
        cells.push(CoverageCell {
            t: design.t,
            t_oos: design.t_oos,
            p: design.p,
            target_r2: target,
            replications: design.replications,
            coverage_rate: covered / n,
            mean_conf_lower: sum(|d| d.1),
            mean_lower_bound: sum(|d| d.2),
            mean_r2_star: sum(|d| d.3),
        });
    }
    Ok(CoverageReport { cells })
}

fn coverage_rep<T: Scalar>(
    design: &CoverageDesign<T>,
    cell: u64,
    rep: u64,
    target: f64,
    opts: &VocOptions<T>,
) -> Result<(bool, T, T, T)> {
    let base = design.base_seed;
    let t_total = design.t + design.t_oos;
    let x = seeded_gaussian_matrix::<T>(t_total, design.d, sub_seed(base, &[cell, rep, 0]));
    let spec = SemiSyntheticSpec {
        gamma: T::zero(),
        activation: design.activation,
        w_seed: sub_seed(base, &[cell, rep, 1]),
        eps_seed: sub_seed(base, &[cell, rep, 2]),
        target_r2: Some(target),
    };
    let draw = semi_synthetic(&x, &spec)?;
    let map = generate_weights::<T>(
        design.d,
        design.p,
        sub_seed(base, &[cell, rep, 3]),
        design.activation,
    )?;
    let signals = random_signal_matrix(&x, &map, design.t)?;
    let (s_in, s_oos) = signals.split_pair();
    let cache = SplitCache::new(&s_in, &s_oos)?;
    let z = crate::estimators::effective_z(&s_in, design.z_ref)?;
    let y_in = draw.y.rows(0, design.t).into_owned();
    let y_oos = draw.y.rows(design.t, design.t_oos).into_owned();
    let point = evaluate_point(&cache, &y_in, &y_oos, design.p, z, opts)?;
    Ok((
        point.conf_lower <= draw.r2_star_hat,
        point.conf_lower,
        point.lower_bound,
        draw.r2_star_hat,
    ))
}

/// Experiment file schema (TOML), version 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub mode: ExperimentMode,
    pub t: usize,
    pub t_oos: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    pub p_grid: Vec<usize>,
    #[serde(default = "default_z_ref")]
    pub z_ref: f64,
    pub activation: Activation,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub target_r2: Option<f64>,
    #[serde(default)]
    pub garch: Option<GarchSettings>,
    #[serde(default)]
    pub coverage: Option<CoverageSettings>,
}

fn default_d() -> usize {
    14
}

fn default_z_ref() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentMode {
    /// `y ~ N(0, 1)` i.i.d.
    PureNoise,
    /// `y` a raw GARCH(1,1) path.
    Garch,
    /// GARCH(1,1) after rolling standardization and clipping.
    GarchStandardized,
    /// Single-index truth at `target_r2`.
    SemiSynthetic,
    /// Semi-synthetic preset over `R2* in {0, 0.25, 0.5, 0.75}`.
    R2Grid,
    /// Band coverage cells instead of curves.
    Coverage,
}

impl ExperimentMode {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentMode::PureNoise => "pure-noise",
            ExperimentMode::Garch => "garch",
            ExperimentMode::GarchStandardized => "garch-standardized",
            ExperimentMode::SemiSynthetic => "semi-synthetic",
            ExperimentMode::R2Grid => "r2-grid",
            ExperimentMode::Coverage => "coverage",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarchSettings {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for GarchSettings {
    fn default() -> Self {
        Self { omega: 0.5, alpha: 0.05, beta: 0.9 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSettings {
    pub r2_values: Vec<f64>,
    pub replications: usize,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Canonical serialized form: parsed, validated, re-emitted with fixed
    /// field order. Run digests hash this string.
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::Config(format!("unsupported config version {}", self.version)));
        }
        if self.t < 2 || self.t_oos < 1 {
            return Err(Error::Config("need t >= 2 and t_oos >= 1".into()));
        }
        if self.d == 0 {
            return Err(Error::Config("d must be positive".into()));
        }
        if self.p_grid.is_empty() || self.p_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("p_grid must be nonempty and strictly increasing".into()));
        }
        if self.z_ref <= 0.0 {
            return Err(Error::Config("z_ref must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        if let Some(r2) = self.target_r2 {
            if !(0.0..1.0).contains(&r2) {
                return Err(Error::Config("target_r2 must lie in [0, 1)".into()));
            }
        }
        if self.mode == ExperimentMode::SemiSynthetic && self.target_r2.is_none() {
            return Err(Error::Config("semi-synthetic mode requires target_r2".into()));
        }
        if let Some(g) = &self.garch {
            let params =
                GarchParams::<f64> { omega: g.omega, alpha: g.alpha, beta: g.beta, seed: 0 };
            params.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.mode == ExperimentMode::Coverage {
            let cov = self
                .coverage
                .as_ref()
                .ok_or_else(|| Error::Config("coverage mode requires a [coverage] table".into()))?;
            if cov.replications == 0 {
                return Err(Error::Config("coverage.replications must be positive".into()));
            }
            if cov.r2_values.is_empty() {
                return Err(Error::Config("coverage.r2_values must be nonempty".into()));
            }
        }
        Ok(())
    }
}

/// Curves grouped under a label (one group per truth configuration).
#[derive(Debug, Clone)]
pub struct LabeledCurves<T: Scalar> {
    pub label: String,
    pub per_seed: Vec<VoCCurve<T>>,
    pub mean: VoCCurve<T>,
    /// Mean realized population R² across seeds, when the mode knows it.
    pub r2_star_hat: Option<T>,
}

#[derive(Debug, Clone)]
pub enum ExperimentOutput<T: Scalar> {
    Curves(Vec<LabeledCurves<T>>),
    Coverage(CoverageReport<T>),
}

/// Run a config end to end. Each seed is a full replication: predictors,
/// truth, noise, and feature weights all derive from that seed's
/// sub-streams.
pub fn run_experiment<T: Scalar>(config: &ExperimentConfig) -> Result<ExperimentOutput<T>> {
    config.validate()?;
    match config.mode {
        ExperimentMode::Coverage => {
            let cov = config.coverage.as_ref().expect("validated");
            let design = CoverageDesign::<T> {
                t: config.t,
                t_oos: config.t_oos,
                d: config.d,
                p: *config.p_grid.last().expect("validated"),
                z_ref: T::c(config.z_ref),
                activation: config.activation,
                r2_values: cov.r2_values.clone(),
                replications: cov.replications,
                base_seed: config.seeds[0],
                level: 0.95,
            };
            Ok(ExperimentOutput::Coverage(coverage_study(&design)?))
        }
        ExperimentMode::R2Grid => {
            let mut groups = Vec::new();
            for &target in &[0.0, 0.25, 0.5, 0.75] {
                groups.push(curve_group(config, Some(target))?);
            }
            Ok(ExperimentOutput::Curves(groups))
        }
        _ => Ok(ExperimentOutput::Curves(vec![curve_group(config, config.target_r2)?])),
    }
}

fn curve_group<T: Scalar>(
    config: &ExperimentConfig,
    target_r2: Option<f64>,
) -> Result<LabeledCurves<T>> {
    let t_total = config.t + config.t_oos;
    let opts = VocOptions::<T>::default();
    let runs: Vec<(VoCCurve<T>, Option<T>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let x = seeded_gaussian_matrix::<T>(t_total, config.d, sub_seed(seed, &[1]));
            let (y, r2_star) = make_target::<T>(config, target_r2, seed, t_total)?;
            let map = generate_weights::<T>(
                config.d,
                *config.p_grid.last().expect("validated"),
                seed,
                config.activation,
            )?;
            let signals = random_signal_matrix(&x, &map, config.t)?;
            let mut curve = voc_curve(&signals, &y, &config.p_grid, T::c(config.z_ref), &opts)?;
            curve.seed = Some(seed);
            Ok((curve, r2_star))
        })
        .collect::<Result<_>>()?;
    let per_seed: Vec<VoCCurve<T>> = runs.iter().map(|(c, _)| c.clone()).collect();
    let stars: Vec<T> = runs.iter().filter_map(|(_, s)| *s).collect();
    let r2_star_hat = if stars.is_empty() {
        None
    } else {
        Some(stars.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(stars.len()))
    };
    let label = match (config.mode, target_r2) {
        (ExperimentMode::R2Grid, Some(t)) | (ExperimentMode::SemiSynthetic, Some(t)) => {
            format!("{}_r2_{}", config.mode.label(), format_target(t))
        }
        _ => config.mode.label().to_string(),
    };
    let mean = mean_curve(&per_seed);
    Ok(LabeledCurves { label, per_seed, mean, r2_star_hat })
}

fn format_target(t: f64) -> String {
    format!("{t:.2}").replace('.', "p")
}

fn make_target<T: Scalar>(
    config: &ExperimentConfig,
    target_r2: Option<f64>,
    seed: u64,
    t_total: usize,
) -> Result<(DVector<T>, Option<T>)> {
    match config.mode {
        ExperimentMode::PureNoise => {
            Ok((seeded_gaussian_vector::<T>(t_total, sub_seed(seed, &[3])), Some(T::zero())))
        }
        ExperimentMode::Garch | ExperimentMode::GarchStandardized => {
            let settings = config.garch.unwrap_or_default();
            let params = GarchParams::<T> {
                omega: T::c(settings.omega),
                alpha: T::c(settings.alpha),
                beta: T::c(settings.beta),
                seed: sub_seed(seed, &[3]),
            };
            let y = if config.mode == ExperimentMode::Garch {
                garch11(t_total, &params)?
            } else {
                garch11_standardized(t_total, &params, 36, T::c(3.0))?
            };
            Ok((y, Some(T::zero())))
        }
        ExperimentMode::SemiSynthetic | ExperimentMode::R2Grid => {
            let x = seeded_gaussian_matrix::<T>(t_total, config.d, sub_seed(seed, &[1]));
            let spec = SemiSyntheticSpec {
                gamma: T::zero(),
                activation: config.activation,
                w_seed: sub_seed(seed, &[2]),
                eps_seed: sub_seed(seed, &[3]),
                target_r2,
            };
            let draw = semi_synthetic(&x, &spec)?;
            Ok((draw.y, Some(draw.r2_star_hat)))
        }
        ExperimentMode::Coverage => unreachable!("coverage handled by run_experiment"),
    }
}
