//! Cross-target summary table: per target, the 95% probability lower
//! bounds under tanh and relu features (maximized over the feature-count
//! and reference-penalty grids), the best random-feature ridge R² within
//! the class, and the best recursive-ridge R²; plus the correlation matrix
//! of those four summary columns across targets.

use anyhow::{bail, Result};
use llglab::dataio::{aligned_supervised, ProcessedPanel, YearMonth};
use llglab::estimators::{
    effective_z, recursive_ridge_features, ridge_fit, RecursiveConfig,
};
use llglab::features::{generate_weights, random_signal_matrix, Activation};
use llglab::llg::r2_oos;
use llglab::sim::{VocOptions, VocSweep};
use serde::Serialize;

use crate::runner::geometric_grid;

#[derive(Debug, Clone)]
pub struct TableOptions {
    /// Targets to analyze; defaults to every column except `dy` (which
    /// mechanically co-moves with the price-based columns and stays a
    /// signal only).
    pub targets: Option<Vec<String>>,
    pub z_ref_grid: Vec<f64>,
    pub split_date: YearMonth,
    pub max_features: usize,
    pub grid_points: usize,
    pub feature_seed: u64,
    pub top_k: usize,
    pub run_ridge: bool,
    pub run_recursive: bool,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            targets: None,
            z_ref_grid: vec![0.01, 0.1, 1.0, 10.0],
            split_date: YearMonth::new(1990, 1).expect("valid"),
            max_features: 20_000,
            grid_points: 20,
            feature_seed: 0,
            top_k: 100,
            run_ridge: true,
            run_recursive: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetRow {
    pub target: String,
    /// Best one-sided band lower end, tanh features.
    pub tanh_bound: f64,
    /// Best one-sided band lower end, relu features.
    pub relu_bound: f64,
    /// Best out-of-sample R² across activations, penalties, feature counts.
    pub best_ridge_r2: f64,
    pub best_recursive_r2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableReport {
    pub rows: Vec<TargetRow>,
    /// Pearson correlations among the four summary columns across targets,
    /// in row order tanh_bound, relu_bound, best_ridge_r2,
    /// best_recursive_r2. `None` when fewer than two targets make the
    /// correlation undefined.
    pub correlation: Option<[[f64; 4]; 4]>,
    pub column_names: [&'static str; 4],
}

pub fn run_table(panel: &ProcessedPanel<f64>, opts: &TableOptions) -> Result<TableReport> {
    let targets: Vec<String> = match &opts.targets {
        Some(list) => {
            for t in list {
                if panel.column(t).is_none() {
                    bail!(llglab::Error::MissingColumn(t.clone()));
                }
            }
            list.clone()
        }
        None => panel.names.iter().filter(|n| n.as_str() != "dy").cloned().collect(),
    };
    if targets.is_empty() {
        bail!("no targets to analyze");
    }

    // One supervised view fixes the shared signal matrix and the split;
    // per-target views reuse the same rows with the shifted column.
    let sup0 = aligned_supervised(panel, &targets[0])?;
    let split = sup0.split_index_at(opts.split_date);
    let n = sup0.x.nrows();
    if split < 24 || n - split < 24 {
        bail!("split at {} leaves {} / {} rows; need at least 24 on each side", opts.split_date, split, n - split);
    }
    let p_grid = geometric_grid(100.min(opts.max_features), opts.max_features, opts.grid_points);
    let voc_opts = VocOptions::<f64>::default();

    let mut rows: Vec<TargetRow> = targets
        .iter()
        .map(|t| TargetRow {
            target: t.clone(),
            tanh_bound: f64::NEG_INFINITY,
            relu_bound: f64::NEG_INFINITY,
            best_ridge_r2: f64::NEG_INFINITY,
            best_recursive_r2: f64::NEG_INFINITY,
        })
        .collect();

    let ys: Vec<nalgebra::DVector<f64>> = targets
        .iter()
        .map(|t| aligned_supervised(panel, t).map(|s| s.y))
        .collect::<Result<_, _>>()?;

    if opts.run_ridge {
        for activation in [Activation::Tanh, Activation::Relu] {
            let map = generate_weights::<f64>(
                sup0.x.ncols(),
                opts.max_features,
                opts.feature_seed,
                activation,
            )?;
            let signals = random_signal_matrix(&sup0.x, &map, split)?;
            let sweep = VocSweep::build(&signals, &p_grid)?;
            for (row, y) in rows.iter_mut().zip(&ys) {
                for &z_ref in &opts.z_ref_grid {
                    let curve = sweep.curve(y, z_ref, &voc_opts)?;
                    for pt in &curve.points {
                        let bound = match activation {
                            Activation::Tanh => &mut row.tanh_bound,
                            Activation::Relu => &mut row.relu_bound,
                        };
                        *bound = bound.max(pt.conf_lower);
                        row.best_ridge_r2 = row.best_ridge_r2.max(pt.r2_oos);
                    }
                }
            }
        }
    }

    if opts.run_recursive {
        for (row, y) in rows.iter_mut().zip(&ys) {
            let feats =
                recursive_ridge_features(&sup0.x, y, split, RecursiveConfig::default(), opts.top_k)?;
            let (s_in, s_oos) = feats.signals.split_pair();
            let y_in = y.rows(0, split).into_owned();
            let y_oos = y.rows(split, n - split).into_owned();
            for &z_ref in &opts.z_ref_grid {
                let z = effective_z(&s_in, z_ref)?;
                let model = ridge_fit(&s_in, &y_in, z)?;
                let preds = model.predict(&s_oos)?;
                row.best_recursive_r2 = row.best_recursive_r2.max(r2_oos(&y_oos, &preds)?);
            }
        }
    }

    // Columns of model classes that did not run are undefined, not -inf.
    for row in &mut rows {
        for v in [&mut row.tanh_bound, &mut row.relu_bound, &mut row.best_ridge_r2, &mut row.best_recursive_r2] {
            if *v == f64::NEG_INFINITY {
                *v = f64::NAN;
            }
        }
    }
    let correlation = correlation_matrix(&rows);
    Ok(TableReport {
        rows,
        correlation,
        column_names: ["tanh_bound", "relu_bound", "best_ridge_r2", "best_recursive_r2"],
    })
}

fn correlation_matrix(rows: &[TargetRow]) -> Option<[[f64; 4]; 4]> {
    if rows.len() < 2 {
        return None;
    }
    let cols: [Vec<f64>; 4] = [
        rows.iter().map(|r| r.tanh_bound).collect(),
        rows.iter().map(|r| r.relu_bound).collect(),
        rows.iter().map(|r| r.best_ridge_r2).collect(),
        rows.iter().map(|r| r.best_recursive_r2).collect(),
    ];
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = pearson(&cols[i], &cols[j]);
        }
    }
    Some(out)
}

/// Pearson correlation. Two constant columns count as perfectly aligned
/// (1.0, so identical targets yield an all-ones matrix); one constant
/// column against a varying one is undefined (NaN).
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 && vb == 0.0 {
        return 1.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_basics() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x) - 1.0).abs() < 1e-14);
        let y = [3.0, 2.0, 1.0];
        assert!((pearson(&x, &y) + 1.0).abs() < 1e-14);
        assert!(pearson(&x, &[1.0, 1.0, 1.0]).is_nan());
        assert!((pearson(&[2.0, 2.0], &[5.0, 5.0]) - 1.0).abs() < 1e-14);
    }
}
