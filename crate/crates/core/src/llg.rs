//! The estimation-limits gap and the corrected R² lower bound.
//!
//! For a linear-in-target estimator with matrix `K` (out-of-sample rows by
//! training columns), the gap is `L = tr(K'K) / T_oos`. For the ridge `K`
//! it equals the spectral form `tr(Psi_oos Psi (zI+Psi)^{-2}) / T`, and
//! asymptotically the Herfindahl-style resolvent ratio of
//! `(zc I + SS'/T)^{-1}`. The realized out-of-sample R² then lifts to the
//! population lower bound `(R2_oos + L) / (1 + L)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{EstimatorMatrix, EstimatorProvenance, SpectralCache, SplitCache};
use crate::scalar::Scalar;

/// Point summary of one (signals, split, penalty) evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct LlgReport<T: Scalar> {
    /// The gap `L >= 0`.
    pub llg: T,
    pub r2_oos: T,
    /// `(r2_oos + llg) / (1 + llg)`, reported unclamped.
    pub lower_bound: T,
    pub mse_oos: T,
    pub z: T,
    /// Statistical complexity `c = P/T`.
    pub complexity: T,
    #[serde(skip)]
    pub method: EstimatorProvenance,
}

impl<T: Scalar> LlgReport<T> {
    /// Evaluate the ridge path on a shared cache.
    pub fn from_cache(
        cache: &SplitCache<T>,
        y: &DVector<T>,
        y_oos: &DVector<T>,
        z: T,
    ) -> Result<Self> {
        let llg = cache.llg(z)?;
        let preds = cache.predict_oos(y, z)?;
        let r2 = r2_oos(y_oos, &preds)?;
        let mse = (y_oos - preds).norm_squared() / T::from_count(y_oos.len());
        Ok(Self {
            llg,
            r2_oos: r2,
            lower_bound: corrected_r2_lower_bound(r2, llg),
            mse_oos: mse,
            z,
            complexity: cache.complexity(),
            method: EstimatorProvenance::Ridge { z: z.to_f64_c() },
        })
    }
}

/// `L = tr(K'K) / T_oos = sum_ij K_ij^2 / T_oos` for any estimator matrix.
pub fn llg_from_estimator<T: Scalar>(k: &EstimatorMatrix<T>) -> T {
    k.k.norm_squared() / T::from_count(k.t_oos())
}

/// Ridge closed form `L(z) = tr(Psi_oos Psi (zI+Psi)^{-2}) / T`.
pub fn llg_ridge<T: Scalar>(s: &DMatrix<T>, s_oos: &DMatrix<T>, z: T) -> Result<T> {
    SplitCache::new(s, s_oos)?.llg(z)
}

/// Herfindahl form of the gap at prior-implied penalty `z*c`:
/// the resolvent-eigenvalue concentration ratio
/// `[tr(R^2)/T] / [tr(R)/T]^2 - 1` with `R = (zc I + SS'/T)^{-1}`,
/// equal to the true-covariance gap `tr(Psi Psi_hat (zcI+Psi_hat)^{-2})/T`
/// asymptotically.
pub fn llg_herfindahl<T: Scalar>(s: &DMatrix<T>, z: T, c: T) -> Result<T> {
    let q = z * c;
    if q <= T::zero() {
        return Err(Error::InvalidParameter("llg_herfindahl requires z*c > 0".into()));
    }
    let t = s.nrows();
    let g = (s * s.transpose()) / T::from_count(t);
    let eig = g.symmetric_eigen();
    let tn = T::from_count(t);
    let mut m1 = T::zero();
    let mut m2 = T::zero();
    for i in 0..t {
        let lambda = eig.eigenvalues[i].max(T::zero());
        let w = T::one() / (q + lambda);
        m1 += w;
        m2 += w * w;
    }
    m1 /= tn;
    m2 /= tn;
    Ok(m2 / (m1 * m1) - T::one())
}

/// Oracle decomposition of the realized out-of-sample MSE (simulation mode:
/// requires the true `f` and noise paths).
#[derive(Debug, Clone, Serialize)]
pub struct MseDecomposition<T: Scalar> {
    /// `E_oos[eps^2]`.
    pub noise: T,
    /// `E_oos[(f - K f_train)^2]`.
    pub bias: T,
    /// `E_oos[(K eps_train)^2]`.
    pub variance: T,
    /// `-2 E_oos[(f - f_s)(f_eps - eps) + eps f_eps]`.
    pub interaction: T,
    /// Sum of the four pieces; equals the realized MSE exactly.
    pub total: T,
}

pub fn mse_decomposition<T: Scalar>(
    f_true: &DVector<T>,
    k: &EstimatorMatrix<T>,
    f_train: &DVector<T>,
    eps_train: &DVector<T>,
    eps_oos: &DVector<T>,
) -> Result<MseDecomposition<T>> {
    let t_oos = k.t_oos();
    if f_true.len() != t_oos || eps_oos.len() != t_oos {
        return Err(Error::DimensionMismatch("out-of-sample lengths".into()));
    }
    let f_s = k.apply(f_train)?;
    let f_eps = k.apply(eps_train)?;
    let n = T::from_count(t_oos);
    let mut noise = T::zero();
    let mut bias = T::zero();
    let mut variance = T::zero();
    let mut interaction = T::zero();
    for i in 0..t_oos {
        let bias_term = f_true[i] - f_s[i];
        noise += eps_oos[i] * eps_oos[i];
        bias += bias_term * bias_term;
        variance += f_eps[i] * f_eps[i];
        interaction -= T::c(2.0) * (bias_term * (f_eps[i] - eps_oos[i]) + eps_oos[i] * f_eps[i]);
    }
    noise /= n;
    bias /= n;
    variance /= n;
    interaction /= n;
    Ok(MseDecomposition { noise, bias, variance, interaction, total: noise + bias + variance + interaction })
}

/// Uncentered realized out-of-sample R²:
/// `1 - sum (y - yhat)^2 / sum y^2`. Demeaning happens upstream in the
/// panel preprocessing, so no mean is subtracted here.
pub fn r2_oos<T: Scalar>(y_oos: &DVector<T>, preds: &DVector<T>) -> Result<T> {
    if y_oos.len() != preds.len() {
        return Err(Error::DimensionMismatch("prediction length".into()));
    }
    let energy = y_oos.norm_squared();
    if energy <= T::zero() {
        return Err(Error::ZeroTargetEnergy);
    }
    Ok(T::one() - (y_oos - preds).norm_squared() / energy)
}

/// Population-R² lower bound `(r2_oos + llg) / (1 + llg)`. Monotone
/// increasing in the gap for `r2_oos < 1`, can be negative when both
/// arguments are small, and never exceeds 1.
pub fn corrected_r2_lower_bound<T: Scalar>(r2_oos: T, llg: T) -> T {
    (r2_oos + llg) / (T::one() + llg)
}

/// Gap-refined lower bound on normalized discount-factor variance:
/// `(r2_oos + llg) / (1 - r2_oos)`.
pub fn hj_bound<T: Scalar>(r2_oos: T, llg: T) -> Result<T> {
    if r2_oos >= T::one() - T::c(1e-9) {
        return Err(Error::InvalidParameter("hj_bound diverges as r2_oos -> 1".into()));
    }
    Ok((r2_oos + llg) / (T::one() - r2_oos))
}

/// Price variance of the posterior-mean valuation against its gap-implied
/// floor, under a known signal covariance.
#[derive(Debug, Clone, Serialize)]
pub struct ExcessVolatility<T: Scalar> {
    /// `beta(cz)' Psi_true beta(cz)`.
    pub var_price: T,
    /// `sigma_eps2 * tr(Psi_true Psi_hat (czI + Psi_hat)^{-2}) / T`.
    pub bound: T,
}

/// Evaluate both sides of the excess-volatility inequality. The prior with
/// variance `sigma_beta2 / P` per coefficient implies the penalty
/// `c * z` with `z = sigma_eps2 / sigma_beta2` and `c = P/T`, applied to
/// `beta(cz) = (czI + Psi_hat)^{-1} S'y/T`.
pub fn excess_volatility_check<T: Scalar>(
    s: &DMatrix<T>,
    y: &DVector<T>,
    psi_true: &DMatrix<T>,
    sigma_eps2: T,
    sigma_beta2: T,
) -> Result<ExcessVolatility<T>> {
    let cache = SpectralCache::new(s);
    excess_volatility_on_cache(&cache, s, y, psi_true, sigma_eps2, sigma_beta2)
}

/// Same as [`excess_volatility_check`] with a caller-owned cache, so Monte
/// Carlo draws with a fixed design share one eigendecomposition.
pub fn excess_volatility_on_cache<T: Scalar>(
    cache: &SpectralCache<T>,
    s: &DMatrix<T>,
    y: &DVector<T>,
    psi_true: &DMatrix<T>,
    sigma_eps2: T,
    sigma_beta2: T,
) -> Result<ExcessVolatility<T>> {
    if sigma_eps2 <= T::zero() || sigma_beta2 <= T::zero() {
        return Err(Error::InvalidParameter("variances must be positive".into()));
    }
    let p = s.ncols();
    if psi_true.nrows() != p || psi_true.ncols() != p {
        return Err(Error::DimensionMismatch("Psi_true must be P x P".into()));
    }
    let t = T::from_count(s.nrows());
    let c = T::from_count(p) / t;
    let q = c * sigma_eps2 / sigma_beta2;
    let beta = cache.ridge_coefficients(y, q)?;
    let var_price = (psi_true * &beta).dot(&beta);
    // tr(Psi_true Psi_hat (qI+Psi_hat)^{-2}) via the eigenbasis:
    // sum_i lambda_i (u_i' Psi_true u_i) / (q + lambda_i)^2.
    let u = cache
        .eigenbasis()
        .ok_or_else(|| Error::InvalidParameter("cache lacks eigenvectors".into()))?;
    let pu = psi_true * u;
    let mut trace = T::zero();
    for i in 0..cache.rank() {
        let quad = u.column(i).dot(&pu.column(i));
        let w = T::one() / (q + cache.eigenvalues()[i]);
        trace += cache.eigenvalues()[i] * quad * w * w;
    }
    let bound = sigma_eps2 * trace / t;
    Ok(ExcessVolatility { var_price, bound })
}
