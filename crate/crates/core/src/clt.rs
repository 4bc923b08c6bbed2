//! CLT variance components and the pivotal confidence band.
//!
//! The corrected lower bound `(R2_oos + L)/(1 + L)` is asymptotically
//! normal around the population value; its variance decomposes into a
//! noise-quadratic-form term `sigma_V^2`, an interaction term `sigma_I^2`,
//! and an out-of-sample term `sigma_I_oos^2`. None of these is observable
//! directly, but the projection vector
//!
//! ```text
//! q = S (zI+Psi)^{-1} S_oos'(S_oos beta(z) - y_oos) / T_oos
//! ```
//!
//! satisfies `||q||^2/T ~ sigma_I^2/4 + sigma_eps^2 (sigma_V^2/2 +
//! (T/T_oos) L)`, which lets every component be rebuilt from observables
//! with the unknown noise variance swept over its feasible interval
//! `[0, min_z MSE(z)/(1+L(z))]`. The resulting extremum of the quadratic
//! `A2 s^2 + A1 s` is the pivotal variance estimate behind the one-sided
//! band `[lower_bound - z_crit * scale^{-1/2} * sigma_R2, 1]`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::ContinuousCDF;

use crate::error::{Error, Result};
use crate::estimators::{QOos, SplitCache};
use crate::scalar::Scalar;

/// Critical value used at the default 0.95 level (kept at 1.65 rather
/// than 1.6449).
pub const CRITICAL_95: f64 = 1.65;

/// Which extremum of the variance quadratic to report over the feasible
/// noise interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ExtremumMode {
    /// Maximum: conservative (wider band). Default.
    #[default]
    ConservativeMax,
    /// Minimum over the interval (narrower band).
    IntervalMin,
}

/// Pivotal variance components at the working penalty.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VarianceComponents<T: Scalar> {
    pub sigma_v2: T,
    /// Pivotal `sigma_I^2`, clamped at 0.
    pub sigma_i2: T,
    pub sigma_i_oos2: T,
    pub sigma_mse2: T,
    /// `||q||^2 / T`.
    pub q_oos_norm2: T,
    /// Upper end of the feasible noise-variance interval:
    /// `min over the z-grid of MSE(z)/(1+L(z))`.
    pub sigma_eps2_cap: T,
}

/// One-sided confidence statement for the population R².
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConfidenceReport<T: Scalar> {
    pub lower_bound_point: T,
    pub sigma_r2_hat: T,
    /// `lower_bound_point - z_level * scale_t^{-1/2} * sigma_r2_hat`;
    /// the band is `[conf_lower, 1]`.
    pub conf_lower: T,
    pub level: f64,
    pub scale_t: usize,
}

/// `sigma_V^2 = (2/T) tr([(zI+Psi)^{-1} Psi_oos (zI+Psi)^{-1} Psi]^2)`.
pub fn sigma_v2<T: Scalar>(s: &DMatrix<T>, s_oos: &DMatrix<T>, z: T) -> Result<T> {
    SplitCache::new(s, s_oos)?.sigma_v2(z)
}

/// The projection vector and its scaled squared norm.
pub fn q_oos<T: Scalar>(
    s: &DMatrix<T>,
    s_oos: &DMatrix<T>,
    y: &DVector<T>,
    y_oos: &DVector<T>,
    z: T,
) -> Result<QOos<T>> {
    SplitCache::new(s, s_oos)?.q_oos(y, y_oos, z)
}

/// Back out `sigma_I^2` from the `q` norm at a known (or bounded) noise
/// variance: `4 * max(0, ||q||^2/T - sigma_eps2 (sigma_V^2/2 + (T/T_oos) L))`.
pub fn sigma_i2_pivotal<T: Scalar>(
    q_norm2_scaled: T,
    sigma_eps2: T,
    sigma_v2: T,
    llg: T,
    t: usize,
    t_oos: usize,
) -> T {
    let ratio = T::from_count(t) / T::from_count(t_oos);
    let subtrahend = sigma_eps2 * (sigma_v2 / T::c(2.0) + ratio * llg);
    (T::c(4.0) * (q_norm2_scaled - subtrahend)).max(T::zero())
}

/// Evaluate `A2 s^2 + A1 s` at the interval endpoints and the interior
/// stationary point, and return the requested extremum.
fn quadratic_extremum<T: Scalar>(a2: T, a1: T, cap: T, mode: ExtremumMode) -> T {
    let h = |s: T| a2 * s * s + a1 * s;
    let mut candidates = vec![T::zero(), cap.max(T::zero())];
    if a2 != T::zero() {
        let stationary = -a1 / (T::c(2.0) * a2);
        if stationary > T::zero() && stationary < cap {
            candidates.push(stationary);
        }
    }
    let mut best = h(candidates[0]);
    for &s in &candidates[1..] {
        let v = h(s);
        best = match mode {
            ExtremumMode::ConservativeMax => best.max(v),
            ExtremumMode::IntervalMin => best.min(v),
        };
    }
    best
}

/// Pivotal variance estimate for the corrected-R² statistic.
///
/// `z_grid[0]` is the working penalty at which the bound itself is
/// evaluated; the whole grid feeds the feasible-interval cap
/// `min_z MSE(z)/(1+L(z))`. Pure function of `(S, S_oos, y, y_oos,
/// z_grid)` — no oracle inputs.
pub fn sigma_r2_hat<T: Scalar>(
    s: &DMatrix<T>,
    s_oos: &DMatrix<T>,
    y: &DVector<T>,
    y_oos: &DVector<T>,
    z_grid: &[T],
    mode: ExtremumMode,
) -> Result<(VarianceComponents<T>, T)> {
    sigma_r2_hat_on_cache(&SplitCache::new(s, s_oos)?, y, y_oos, z_grid, mode)
}

/// Cache-sharing variant of [`sigma_r2_hat`].
pub fn sigma_r2_hat_on_cache<T: Scalar>(
    cache: &SplitCache<T>,
    y: &DVector<T>,
    y_oos: &DVector<T>,
    z_grid: &[T],
    mode: ExtremumMode,
) -> Result<(VarianceComponents<T>, T)> {
    let z = *z_grid.first().ok_or_else(|| Error::InvalidParameter("empty z grid".into()))?;
    if z_grid.iter().any(|&v| v <= T::zero()) {
        return Err(Error::InvalidParameter("z grid entries must be positive".into()));
    }
    let t = cache.t_in();
    let t_oos = cache.t_oos();
    let ratio = T::from_count(t) / T::from_count(t_oos);

    let mse0 = y_oos.norm_squared() / T::from_count(t_oos);
    if mse0 <= T::zero() {
        return Err(Error::ZeroTargetEnergy);
    }

    let mut cap = T::c(f64::INFINITY);
    for &zg in z_grid {
        let ratio_z = cache.mse_oos(y, y_oos, zg)? / (T::one() + cache.llg(zg)?);
        cap = cap.min(ratio_z);
    }

    let llg = cache.llg(z)?;
    let sv2 = cache.sigma_v2(z)?;
    let mse_hat = cache.mse_oos(y, y_oos, z)?;
    let q = cache.q_oos(y, y_oos, z)?.norm2_scaled;
    let eys_beta = cache.oos_target_signal_coeff(y, y_oos, z)?;

    // sigma_R2^2 (1+L)^2 MSE(0)^4 = extremum over the feasible noise
    // variance of A2 s^2 + A1 s, with (delta method on MSE/MSE(0)):
    //   A2 = MSE(0)^2 (T_oos/T)(2 T/T_oos - sigma_V^2 - 4 (T/T_oos)(1+L))
    //        - 2 MSE_hat^2 + 4 MSE(0) MSE_hat
    //   A1 = MSE(0)^2 (T_oos/T)(4 ||q||^2/T + 4 (T/T_oos) MSE_hat)
    //        + 4 MSE_hat^2 MSE(0)
    //        - 8 MSE(0) MSE_hat (MSE(0) - E_oos[y'S] beta).
    let four = T::c(4.0);
    let two = T::c(2.0);
    let a2 = mse0 * mse0 / ratio * (two * ratio - sv2 - four * ratio * (T::one() + llg))
        - two * mse_hat * mse_hat
        + four * mse0 * mse_hat;
    let a1 = mse0 * mse0 / ratio * (four * q + four * ratio * mse_hat)
        + four * mse_hat * mse_hat * mse0
        - T::c(8.0) * mse0 * mse_hat * (mse0 - eys_beta);
    let extremum = quadratic_extremum(a2, a1, cap, mode).max(T::zero());
    let one_plus = T::one() + llg;
    let sigma_r2 = (extremum / (one_plus * one_plus * mse0 * mse0 * mse0 * mse0)).sqrt();

    // Reported components use the cap as the noise-variance plug-in.
    let sigma_i2 = sigma_i2_pivotal(q, cap, sv2, llg, t, t_oos);
    let bias_hat = (mse_hat - one_plus * cap).max(T::zero());
    let sigma_i_oos2 = four * ratio * (bias_hat + cap * llg);
    let sigma_mse2 = ((two * ratio * cap * cap - cap * cap * sv2 + four * cap * q
        + four * cap * ratio * bias_hat)
        / (one_plus * one_plus))
        .max(T::zero());

    Ok((
        VarianceComponents {
            sigma_v2: sv2,
            sigma_i2,
            sigma_i_oos2,
            sigma_mse2,
            q_oos_norm2: q,
            sigma_eps2_cap: cap,
        },
        sigma_r2,
    ))
}

/// One-sided band `[point - z_level * scale_t^{-1/2} * sigma, 1]`.
/// At the default 0.95 level the critical value is pinned to 1.65;
/// other levels use the exact normal quantile.
pub fn confidence_lower_bound<T: Scalar>(
    lower_bound_point: T,
    sigma_r2_hat: T,
    scale_t: usize,
    level: f64,
) -> Result<ConfidenceReport<T>> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidParameter("confidence level must be in (0, 1)".into()));
    }
    if scale_t == 0 {
        return Err(Error::InvalidParameter("scale T must be >= 1".into()));
    }
    if sigma_r2_hat < T::zero() {
        return Err(Error::InvalidParameter("sigma_r2_hat must be nonnegative".into()));
    }
    let crit = if (level - 0.95).abs() < 1e-12 {
        CRITICAL_95
    } else {
        statrs::distribution::Normal::standard().inverse_cdf(level)
    };
    let conf_lower =
        lower_bound_point - T::c(crit) * sigma_r2_hat / T::from_count(scale_t).sqrt();
    Ok(ConfidenceReport { lower_bound_point, sigma_r2_hat, conf_lower, level, scale_t })
}
