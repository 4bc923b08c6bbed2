//! Ridge and kernel-ridge estimators over a shared spectral cache.
//!
//! Every downstream quantity (predictions, the gap trace, the CLT variance
//! components) is a spectral functional of the in-sample second-moment
//! matrix `Psi = S'S/T`, so the cache eigendecomposes once — on whichever
//! side of the Gram pair `S'S` / `SS'` is smaller — and all penalties `z`
//! reuse it. With eigenpairs `(lambda_i, u_i)` of `Psi` and
//!
//! ```text
//! F = S  U   (T     x r,  in-sample loadings)
//! A = Soos U (T_oos x r,  out-of-sample loadings)
//! ```
//!
//! the whole ridge path lives in the r-dimensional eigenbasis:
//! `beta(z) = U diag(1/(z+lambda)) F'y/T`, out-of-sample predictions
//! `A diag(1/(z+lambda)) F'y/T`, estimator matrix
//! `K(z) = A diag(1/(z+lambda)) F'/T`, and so on.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::SignalMatrix;
use crate::scalar::Scalar;

/// Relative cutoff below which eigenvalues are clamped to zero.
const EIG_CLAMP_REL: f64 = 1e-12;

/// Which Gram matrix to eigendecompose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `S'S/T` (P x P).
    Primal,
    /// `SS'/T` (T x T).
    Dual,
}

/// Penalty that scales with the size of the signals:
/// `z = z_ref * tr(S'S)/P`, computed on the in-sample matrix only.
pub fn effective_z<T: Scalar>(s: &DMatrix<T>, z_ref: T) -> Result<T> {
    if s.is_empty() {
        return Err(Error::InvalidParameter("effective_z: empty signal matrix".into()));
    }
    let energy = s.norm_squared();
    if energy == T::zero() {
        return Err(Error::DegenerateSignals);
    }
    Ok(z_ref * energy / T::from_count(s.ncols()))
}

/// Eigendecomposition of the in-sample second-moment matrix, shared across
/// penalties. Stores only the nonzero spectrum; `u` (the P x r eigenvector
/// block) is absent when the cache was built from Gram matrices alone, in
/// which case coefficient vectors cannot be materialized but every
/// prediction and trace functional still can.
#[derive(Debug, Clone)]
pub struct SpectralCache<T: Scalar> {
    t: usize,
    p: usize,
    eigvals: DVector<T>,
    u: Option<DMatrix<T>>,
    f: DMatrix<T>,
}

impl<T: Scalar> SpectralCache<T> {
    /// Build from the in-sample signal matrix, choosing the smaller Gram side.
    pub fn new(s: &DMatrix<T>) -> Self {
        let side = if s.ncols() <= s.nrows() { Side::Primal } else { Side::Dual };
        Self::with_side(s, side)
    }

    pub fn with_side(s: &DMatrix<T>, side: Side) -> Self {
        let t = s.nrows();
        let p = s.ncols();
        let tn = T::from_count(t);
        match side {
            Side::Primal => {
                let psi = (s.transpose() * s) / tn;
                let (vals, vecs) = sorted_clamped_eigen(psi);
                let (eigvals, u) = keep_nonzero(vals, vecs);
                let f = s * &u;
                Self { t, p, eigvals, u: Some(u), f }
            }
            Side::Dual => {
                let g = (s * s.transpose()) / tn;
                let (vals, vecs) = sorted_clamped_eigen(g);
                let (mu, v) = keep_nonzero(vals, vecs);
                // u_i = S'v_i / sqrt(T mu_i); F = S U = V diag(sqrt(T mu)).
                let mut u = s.transpose() * &v;
                let mut f = v;
                for (i, &m) in mu.iter().enumerate() {
                    let scale = (tn * m).sqrt();
                    u.column_mut(i).unscale_mut(scale);
                    f.column_mut(i).scale_mut(scale);
                }
                Self { t, p, eigvals: mu, u: Some(u), f }
            }
        }
    }

    pub fn t_in(&self) -> usize {
        self.t
    }

    pub fn n_features(&self) -> usize {
        self.p
    }

    /// Nonzero eigenvalues of `S'S/T`, descending.
    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigvals
    }

    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }

    /// Eigenvectors of the kept spectrum (P x r), when the cache was built
    /// from the signal matrix itself.
    pub fn eigenbasis(&self) -> Option<&DMatrix<T>> {
        self.u.as_ref()
    }

    fn check_z(&self, z: T) -> Result<()> {
        if z < T::zero() {
            return Err(Error::InvalidParameter("ridge penalty z must be nonnegative".into()));
        }
        if z == T::zero() && self.rank() < self.p {
            return Err(Error::SingularSystem);
        }
        Ok(())
    }

    /// Coordinates of `S'y/T` in the eigenbasis.
    fn basis_coeffs(&self, y: &DVector<T>) -> Result<DVector<T>> {
        if y.len() != self.t {
            return Err(Error::DimensionMismatch(format!(
                "target length {} != in-sample rows {}",
                y.len(),
                self.t
            )));
        }
        Ok(self.f.tr_mul(y) / T::from_count(self.t))
    }

    fn shrunk(&self, coeffs: &DVector<T>, z: T) -> DVector<T> {
        DVector::from_fn(coeffs.len(), |i, _| coeffs[i] / (z + self.eigvals[i]))
    }

    /// Ridge coefficients `(zI + Psi)^{-1} S'y/T`.
    pub fn ridge_coefficients(&self, y: &DVector<T>, z: T) -> Result<DVector<T>> {
        self.check_z(z)?;
        let u = self.u.as_ref().ok_or_else(|| {
            Error::InvalidParameter("coefficients unavailable in gram-only cache".into())
        })?;
        let w = self.shrunk(&self.basis_coeffs(y)?, z);
        Ok(u * w)
    }

    /// In-sample fitted values `S beta(z)`.
    pub fn predict_in(&self, y: &DVector<T>, z: T) -> Result<DVector<T>> {
        self.check_z(z)?;
        let w = self.shrunk(&self.basis_coeffs(y)?, z);
        Ok(&self.f * w)
    }
}

fn sorted_clamped_eigen<T: Scalar>(m: DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues")
    });
    let vals: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i].max(T::zero())).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn keep_nonzero<T: Scalar>(vals: Vec<T>, vecs: DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let lmax = vals.first().copied().unwrap_or_else(T::zero);
    let cutoff = lmax * T::c(EIG_CLAMP_REL);
    let r = vals.iter().take_while(|&&l| l > cutoff && l > T::zero()).count();
    let kept = DVector::from_iterator(r, vals.into_iter().take(r));
    (kept, vecs.columns(0, r).into_owned())
}

/// [`SpectralCache`] extended with the out-of-sample block: everything the
/// gap trace, the variance components, and the pivotal `q` vector need.
#[derive(Debug, Clone)]
pub struct SplitCache<T: Scalar> {
    base: SpectralCache<T>,
    t_oos: usize,
    a: DMatrix<T>,
    /// `U' Psi_oos U` restricted to the kept spectrum.
    psi_oos_basis: DMatrix<T>,
}

impl<T: Scalar> SplitCache<T> {
    pub fn new(s: &DMatrix<T>, s_oos: &DMatrix<T>) -> Result<Self> {
        if s.ncols() != s_oos.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "in-sample has {} features, out-of-sample has {}",
                s.ncols(),
                s_oos.ncols()
            )));
        }
        Ok(Self::from_base(SpectralCache::new(s), s_oos))
    }

    pub fn with_side(s: &DMatrix<T>, s_oos: &DMatrix<T>, side: Side) -> Self {
        Self::from_base(SpectralCache::with_side(s, side), s_oos)
    }

    /// Split a [`SignalMatrix`] at its boundary and build the cache.
    pub fn from_signals(signals: &SignalMatrix<T>) -> Result<Self> {
        let (s, s_oos) = signals.split_pair();
        Self::new(&s, &s_oos)
    }

    fn from_base(base: SpectralCache<T>, s_oos: &DMatrix<T>) -> Self {
        let a = s_oos * base.u.as_ref().expect("matrix-built cache has eigenvectors");
        let psi_oos_basis = a.tr_mul(&a) / T::from_count(s_oos.nrows());
        Self { base, t_oos: s_oos.nrows(), a, psi_oos_basis }
    }

    /// Build from Gram matrices alone: `g_in = SS'/T` and `d = S_oos S'`.
    /// Coefficient vectors are unavailable; all trace functionals and
    /// predictions remain exact. This is the cheap path when sweeping a
    /// prefix grid of feature counts.
    pub fn from_grams(g_in: DMatrix<T>, d: DMatrix<T>, t_oos: usize, p: usize) -> Result<Self> {
        let t = g_in.nrows();
        if g_in.ncols() != t || d.ncols() != t || d.nrows() != t_oos {
            return Err(Error::DimensionMismatch("gram matrices have inconsistent shapes".into()));
        }
        let tn = T::from_count(t);
        let (vals, vecs) = sorted_clamped_eigen(g_in);
        let (mu, v) = keep_nonzero(vals, vecs);
        let mut f = v.clone();
        let mut a = d * &v;
        for (i, &m) in mu.iter().enumerate() {
            let scale = (tn * m).sqrt();
            f.column_mut(i).scale_mut(scale);
            a.column_mut(i).unscale_mut(scale);
        }
        let psi_oos_basis = a.tr_mul(&a) / T::from_count(t_oos);
        Ok(Self { base: SpectralCache { t, p, eigvals: mu, u: None, f }, t_oos, a, psi_oos_basis })
    }

    pub fn base(&self) -> &SpectralCache<T> {
        &self.base
    }

    pub fn t_in(&self) -> usize {
        self.base.t
    }

    pub fn t_oos(&self) -> usize {
        self.t_oos
    }

    pub fn n_features(&self) -> usize {
        self.base.p
    }

    /// Statistical complexity `c = P/T`.
    pub fn complexity(&self) -> T {
        T::from_count(self.base.p) / T::from_count(self.base.t)
    }

    pub fn ridge_coefficients(&self, y: &DVector<T>, z: T) -> Result<DVector<T>> {
        self.base.ridge_coefficients(y, z)
    }

    pub fn predict_in(&self, y: &DVector<T>, z: T) -> Result<DVector<T>> {
        self.base.predict_in(y, z)
    }

    /// Out-of-sample predictions `K(z) y`.
    pub fn predict_oos(&self, y: &DVector<T>, z: T) -> Result<DVector<T>> {
        self.base.check_z(z)?;
        let w = self.base.shrunk(&self.base.basis_coeffs(y)?, z);
        Ok(&self.a * w)
    }

    /// Realized out-of-sample mean squared error of the ridge prediction.
    pub fn mse_oos(&self, y: &DVector<T>, y_oos: &DVector<T>, z: T) -> Result<T> {
        let preds = self.predict_oos(y, z)?;
        if y_oos.len() != self.t_oos {
            return Err(Error::DimensionMismatch("out-of-sample target length".into()));
        }
        Ok((y_oos - preds).norm_squared() / T::from_count(self.t_oos))
    }

    /// Materialize the estimator matrix `K(z) = S_oos (zI+Psi)^{-1} S'/T`.
    pub fn estimator_matrix(&self, z: T) -> Result<EstimatorMatrix<T>> {
        self.base.check_z(z)?;
        let r = self.base.rank();
        let mut aw = self.a.clone();
        for i in 0..r {
            aw.column_mut(i).scale_mut(T::one() / (z + self.base.eigvals[i]));
        }
        let k = aw * self.base.f.transpose() / T::from_count(self.base.t);
        Ok(EstimatorMatrix { k, provenance: EstimatorProvenance::Ridge { z: z.to_f64_c() } })
    }

    /// The gap trace `tr(Psi_oos Psi (zI+Psi)^{-2}) / T`, evaluated as
    /// `sum_i lambda_i (u_i' Psi_oos u_i) / (z+lambda_i)^2 / T`.
    pub fn llg(&self, z: T) -> Result<T> {
        if z <= T::zero() {
            return Err(Error::InvalidParameter("llg requires z > 0".into()));
        }
        let mut total = T::zero();
        for i in 0..self.base.rank() {
            let l = self.base.eigvals[i];
            let w = T::one() / (z + l);
            total += l * self.psi_oos_basis[(i, i)] * w * w;
        }
        Ok(total / T::from_count(self.base.t))
    }

    /// Variance of the noise-variance quadratic form:
    /// `sigma_V^2 = (2/T) tr([(zI+Psi)^{-1} Psi_oos (zI+Psi)^{-1} Psi]^2)`.
    pub fn sigma_v2(&self, z: T) -> Result<T> {
        if z <= T::zero() {
            return Err(Error::InvalidParameter("sigma_v2 requires z > 0".into()));
        }
        let r = self.base.rank();
        let mut total = T::zero();
        for i in 0..r {
            let wi = T::one() / (z + self.base.eigvals[i]);
            for j in 0..r {
                let wj = T::one() / (z + self.base.eigvals[j]);
                let m = self.psi_oos_basis[(i, j)];
                total += m * m
                    * self.base.eigvals[i]
                    * self.base.eigvals[j]
                    * (wi * wi)
                    * (wj * wj);
            }
        }
        Ok(T::c(2.0) * total / T::from_count(self.base.t))
    }

    /// `tr((K'K)^2) / T_oos^2` scaled by `2T`, i.e. the generic-estimator
    /// form of `sigma_V^2`; equal to [`Self::sigma_v2`] for the ridge `K`.
    /// Exposed for the concentration bound on the variance term.
    pub fn trace_k4(&self, z: T) -> Result<T> {
        // tr((K'K)^2) = sum_{ij} psi_oos_basis_{ij}^2 lambda_i lambda_j
        //               w_i^2 w_j^2 * T_oos^2 / T^2,
        // so reuse sigma_v2 and rescale.
        let sv2 = self.sigma_v2(z)?;
        let t = T::from_count(self.base.t);
        let t_oos = T::from_count(self.t_oos);
        Ok(sv2 * t * t_oos * t_oos / (T::c(2.0) * t * t))
    }

    /// Pivotal residual-projection vector
    /// `q = S (zI+Psi)^{-1} S_oos'(S_oos beta(z) - y_oos) / T_oos`
    /// together with `||q||^2 / T`.
    pub fn q_oos(&self, y: &DVector<T>, y_oos: &DVector<T>, z: T) -> Result<QOos<T>> {
        self.base.check_z(z)?;
        if y_oos.len() != self.t_oos {
            return Err(Error::DimensionMismatch("out-of-sample target length".into()));
        }
        let w = self.base.shrunk(&self.base.basis_coeffs(y)?, z);
        let resid = &self.a * &w - y_oos;
        let mut g = self.a.tr_mul(&resid) / T::from_count(self.t_oos);
        for i in 0..g.len() {
            g[i] /= z + self.base.eigvals[i];
        }
        let q = &self.base.f * g;
        let norm2_scaled = q.norm_squared() / T::from_count(self.base.t);
        Ok(QOos { q, norm2_scaled })
    }

    /// `E_oos[y'S] beta(z) = y_oos' (K(z) y) / T_oos`, the pivotal plug-in
    /// for the signal-energy cross term in the CLT coefficients.
    pub fn oos_target_signal_coeff(&self, y: &DVector<T>, y_oos: &DVector<T>, z: T) -> Result<T> {
        let preds = self.predict_oos(y, z)?;
        Ok(y_oos.dot(&preds) / T::from_count(self.t_oos))
    }
}

/// Output of [`SplitCache::q_oos`].
#[derive(Debug, Clone)]
pub struct QOos<T: Scalar> {
    pub q: DVector<T>,
    pub norm2_scaled: T,
}

/// Where an estimator matrix came from.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorProvenance {
    Ridge { z: f64 },
    Kernel { kernel: String, z: f64 },
    UserSupplied,
}

/// The `T_oos x T` linear map sending training targets to out-of-sample
/// predictions; row `t` holds the attention weights of the prediction at
/// that date.
#[derive(Debug, Clone)]
pub struct EstimatorMatrix<T: Scalar> {
    pub k: DMatrix<T>,
    pub provenance: EstimatorProvenance,
}

impl<T: Scalar> EstimatorMatrix<T> {
    pub fn user_supplied(k: DMatrix<T>) -> Self {
        Self { k, provenance: EstimatorProvenance::UserSupplied }
    }

    pub fn t_oos(&self) -> usize {
        self.k.nrows()
    }

    pub fn t_in(&self) -> usize {
        self.k.ncols()
    }

    /// Apply the map to a training-target vector.
    pub fn apply(&self, y: &DVector<T>) -> Result<DVector<T>> {
        if y.len() != self.k.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "estimator matrix expects {} targets, got {}",
                self.k.ncols(),
                y.len()
            )));
        }
        Ok(&self.k * y)
    }
}

/// Fitted ridge model. The spectral cache is shared so refitting at another
/// penalty is a single `O(Tr + Pr)` pass.
#[derive(Debug, Clone)]
pub struct RidgeModel<T: Scalar> {
    pub beta_hat: DVector<T>,
    pub z: T,
    cache: Arc<SpectralCache<T>>,
}

impl<T: Scalar> RidgeModel<T> {
    pub fn cache(&self) -> &Arc<SpectralCache<T>> {
        &self.cache
    }

    pub fn predict(&self, s_new: &DMatrix<T>) -> Result<DVector<T>> {
        if s_new.ncols() != self.beta_hat.len() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} coefficients, input has {} columns",
                self.beta_hat.len(),
                s_new.ncols()
            )));
        }
        Ok(s_new * &self.beta_hat)
    }

    /// Refit at a different penalty through the same cache.
    pub fn refit(&self, y: &DVector<T>, z: T) -> Result<Self> {
        Ok(Self {
            beta_hat: self.cache.ridge_coefficients(y, z)?,
            z,
            cache: Arc::clone(&self.cache),
        })
    }
}

/// Fit `beta(z) = (zI + S'S/T)^{-1} S'y/T`.
pub fn ridge_fit<T: Scalar>(s: &DMatrix<T>, y: &DVector<T>, z: T) -> Result<RidgeModel<T>> {
    let cache = Arc::new(SpectralCache::new(s));
    let beta_hat = cache.ridge_coefficients(y, z)?;
    Ok(RidgeModel { beta_hat, z, cache })
}

/// Ridge estimator matrix for an explicit split.
pub fn estimator_matrix<T: Scalar>(
    s: &DMatrix<T>,
    s_oos: &DMatrix<T>,
    z: T,
) -> Result<EstimatorMatrix<T>> {
    if z <= T::zero() {
        return Err(Error::InvalidParameter("estimator_matrix requires z > 0".into()));
    }
    SplitCache::new(s, s_oos)?.estimator_matrix(z)
}

/// Positive-definite kernels for the kernel-ridge path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel<T: Scalar> {
    /// `k(a, b) = a'b / T`; reproduces the ridge estimator matrix exactly.
    Linear,
    /// `k(a, b) = exp(-gamma ||a-b||^2)`. With `gamma = None` the bandwidth
    /// defaults to `1 / (2 * median pairwise squared distance)` over the
    /// training rows.
    Gaussian { gamma: Option<T> },
}

/// Kernel-ridge estimator matrix `K = k(S_oos, S)(zI + k(S, S))^{-1}`.
pub fn kernel_estimator_matrix<T: Scalar>(
    kernel: Kernel<T>,
    s: &DMatrix<T>,
    s_oos: &DMatrix<T>,
    z: T,
) -> Result<EstimatorMatrix<T>> {
    if z <= T::zero() {
        return Err(Error::InvalidParameter("kernel ridge requires z > 0".into()));
    }
    if s.ncols() != s_oos.ncols() {
        return Err(Error::DimensionMismatch("kernel inputs share the feature dimension".into()));
    }
    let t = s.nrows();
    let tn = T::from_count(t);
    let (gram, cross, name) = match kernel {
        Kernel::Linear => {
            ((s * s.transpose()) / tn, (s_oos * s.transpose()) / tn, "linear".to_string())
        }
        Kernel::Gaussian { gamma } => {
            let gamma = match gamma {
                Some(g) => g,
                None => default_gaussian_gamma(s),
            };
            let gram = DMatrix::from_fn(t, t, |i, j| {
                gaussian_kernel(&s.row(i).transpose(), &s.row(j).transpose(), gamma)
            });
            let cross = DMatrix::from_fn(s_oos.nrows(), t, |i, j| {
                gaussian_kernel(&s_oos.row(i).transpose(), &s.row(j).transpose(), gamma)
            });
            (gram, cross, format!("gaussian(gamma={})", gamma.to_f64_c()))
        }
    };
    let eig = gram.symmetric_eigen();
    let min_eig =
        (0..t).map(|i| eig.eigenvalues[i]).fold(T::zero(), |acc, v| if v < acc { v } else { acc });
    if min_eig < T::c(-1e-8) {
        return Err(Error::KernelNotPsd(min_eig.to_f64_c()));
    }
    // (zI + Gram)^{-1} through the clamped spectrum.
    let mut inv = DMatrix::zeros(t, t);
    for i in 0..t {
        let l = eig.eigenvalues[i].max(T::zero());
        let w = T::one() / (z + l);
        let v = eig.eigenvectors.column(i);
        inv.syger(w, &v, &v, T::one());
    }
    inv.fill_upper_triangle_with_lower_triangle();
    let k = cross * inv;
    Ok(EstimatorMatrix { k, provenance: EstimatorProvenance::Kernel { kernel: name, z: z.to_f64_c() } })
}

fn gaussian_kernel<T: Scalar>(a: &DVector<T>, b: &DVector<T>, gamma: T) -> T {
    (-(gamma) * (a - b).norm_squared()).exp()
}

fn default_gaussian_gamma<T: Scalar>(s: &DMatrix<T>) -> T {
    let t = s.nrows();
    let mut d2: Vec<T> = Vec::with_capacity(t * (t - 1) / 2);
    for i in 0..t {
        for j in (i + 1)..t {
            d2.push((s.row(i) - s.row(j)).norm_squared());
        }
    }
    if d2.is_empty() {
        return T::one();
    }
    d2.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let med = if d2.len() % 2 == 1 {
        d2[d2.len() / 2]
    } else {
        (d2[d2.len() / 2 - 1] + d2[d2.len() / 2]) / T::c(2.0)
    };
    if med > T::zero() {
        T::one() / (T::c(2.0) * med)
    } else {
        T::one()
    }
}

/// Gaussian posterior over linear coefficients under the prior
/// `beta ~ N(0, Sigma_beta)` and noise variance `sigma_eps2`.
#[derive(Debug, Clone)]
pub struct PosteriorBelief<T: Scalar> {
    pub mean: DVector<T>,
    pub covariance: DMatrix<T>,
}

/// Posterior mean `(sigma_eps2 Sigma_beta^{-1} + S'S)^{-1} S'y` and
/// covariance `(sigma_eps2 Sigma_beta^{-1} + S'S)^{-1} sigma_eps2`.
///
/// Computed through the dual form
/// `Sigma_beta S'(sigma_eps2 I + S Sigma_beta S')^{-1}`, which needs no
/// inverse of `Sigma_beta` and therefore accepts singular priors.
pub fn bayes_posterior<T: Scalar>(
    s: &DMatrix<T>,
    y: &DVector<T>,
    sigma_beta: &DMatrix<T>,
    sigma_eps2: T,
) -> Result<PosteriorBelief<T>> {
    if sigma_eps2 <= T::zero() {
        return Err(Error::InvalidParameter("sigma_eps2 must be positive".into()));
    }
    let p = s.ncols();
    if sigma_beta.nrows() != p || sigma_beta.ncols() != p {
        return Err(Error::DimensionMismatch("prior covariance must be P x P".into()));
    }
    if y.len() != s.nrows() {
        return Err(Error::DimensionMismatch("target length must match rows of S".into()));
    }
    let t = s.nrows();
    // M = sigma_eps2 I + S Sigma_beta S', inverted through its spectrum.
    let sb_st = sigma_beta * s.transpose();
    let m = s * &sb_st;
    let eig = m.symmetric_eigen();
    let mut m_inv = DMatrix::zeros(t, t);
    for i in 0..t {
        let l = eig.eigenvalues[i].max(T::zero());
        let w = T::one() / (sigma_eps2 + l);
        let v = eig.eigenvectors.column(i);
        m_inv.syger(w, &v, &v, T::one());
    }
    m_inv.fill_upper_triangle_with_lower_triangle();
    let gain = &sb_st * m_inv;
    let mean = &gain * y;
    let covariance = sigma_beta - gain * (s * sigma_beta);
    Ok(PosteriorBelief { mean, covariance: clamp_psd(covariance) })
}

fn clamp_psd<T: Scalar>(m: DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows();
    let sym = (&m + m.transpose()) / T::c(2.0);
    let eig = sym.clone().symmetric_eigen();
    let min_eig =
        (0..n).map(|i| eig.eigenvalues[i]).fold(T::zero(), |acc, v| if v < acc { v } else { acc });
    if min_eig >= T::zero() {
        return sym;
    }
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let l = eig.eigenvalues[i].max(T::zero());
        if l > T::zero() {
            let v = eig.eigenvectors.column(i);
            out.syger(l, &v, &v, T::one());
        }
    }
    out.fill_upper_triangle_with_lower_triangle();
    out
}

/// Elementwise transforms applied to base columns before the pairwise
/// sum/product expansion of the recursive-ridge feature pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecursiveConfig {
    pub use_tanh: bool,
    pub use_signed_sqrt: bool,
    pub use_square: bool,
}

impl Default for RecursiveConfig {
    fn default() -> Self {
        Self { use_tanh: true, use_signed_sqrt: true, use_square: true }
    }
}

impl RecursiveConfig {
    /// Raw columns only: no elementwise transforms.
    pub fn raw_only() -> Self {
        Self { use_tanh: false, use_signed_sqrt: false, use_square: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseTransform {
    Identity,
    Tanh,
    SignedSqrt,
    Square,
}

/// One entry of the recursive-ridge feature pool, named by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolFeature {
    Single { transform: BaseTransform, col: usize },
    Sum { left: (BaseTransform, usize), right: (BaseTransform, usize) },
    Product { left: (BaseTransform, usize), right: (BaseTransform, usize) },
}

/// Recursive-ridge feature matrix with provenance of the selected columns.
#[derive(Debug, Clone)]
pub struct RecursiveFeatures<T: Scalar> {
    pub signals: SignalMatrix<T>,
    pub selected: Vec<PoolFeature>,
}

/// Build the transformed-and-expanded feature pool from base columns, rank
/// every pool feature by absolute marginal correlation with the target on
/// the training split, and keep the `top_k` strongest.
///
/// The pool is the transformed set (base columns plus enabled elementwise
/// transforms), all pairwise sums of distinct entries, and all pairwise
/// products including self-products; with `d` base columns and no
/// transforms that is `d^2 + d` features. Selection sees only rows before
/// `split_index`.
pub fn recursive_ridge_features<T: Scalar>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    split_index: usize,
    config: RecursiveConfig,
    top_k: usize,
) -> Result<RecursiveFeatures<T>> {
    let (n, d) = (x.nrows(), x.ncols());
    if d < 2 {
        return Err(Error::InvalidParameter("recursive ridge needs at least 2 base columns".into()));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch("target length must match rows".into()));
    }
    if split_index == 0 || split_index >= n {
        return Err(Error::InvalidParameter("split index must be interior".into()));
    }

    let mut transforms = vec![BaseTransform::Identity];
    if config.use_tanh {
        transforms.push(BaseTransform::Tanh);
    }
    if config.use_signed_sqrt {
        transforms.push(BaseTransform::SignedSqrt);
    }
    if config.use_square {
        transforms.push(BaseTransform::Square);
    }

    let mut tset: Vec<((BaseTransform, usize), DVector<T>)> = Vec::new();
    for &tr in &transforms {
        for col in 0..d {
            let v = DVector::from_fn(n, |i, _| apply_transform(tr, x[(i, col)]));
            tset.push(((tr, col), v));
        }
    }

    let m = tset.len();
    let mut pool: Vec<(PoolFeature, DVector<T>)> = Vec::with_capacity(m + m * m);
    for ((tr, col), v) in &tset {
        pool.push((PoolFeature::Single { transform: *tr, col: *col }, v.clone()));
    }
    for i in 0..m {
        for j in (i + 1)..m {
            pool.push((
                PoolFeature::Sum { left: tset[i].0, right: tset[j].0 },
                &tset[i].1 + &tset[j].1,
            ));
        }
    }
    for i in 0..m {
        for j in i..m {
            pool.push((
                PoolFeature::Product { left: tset[i].0, right: tset[j].0 },
                tset[i].1.component_mul(&tset[j].1),
            ));
        }
    }

    if top_k > pool.len() {
        return Err(Error::InvalidParameter(format!(
            "top_k = {} exceeds pool size {}",
            top_k,
            pool.len()
        )));
    }

    let y_train = y.rows(0, split_index).into_owned();
    let scores: Vec<T> = pool
        .par_iter()
        .map(|(_, v)| {
            let v_train = v.rows(0, split_index).into_owned();
            abs_correlation(&v_train, &y_train)
        })
        .collect();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    // Stable rank: ties and NaN-free keys resolve by pool index.
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores").then(a.cmp(&b)));

    let mut values = DMatrix::zeros(n, top_k);
    let mut selected = Vec::with_capacity(top_k);
    for (out_col, &idx) in order.iter().take(top_k).enumerate() {
        values.set_column(out_col, &pool[idx].1);
        selected.push(pool[idx].0);
    }
    Ok(RecursiveFeatures { signals: SignalMatrix::new(values, split_index)?, selected })
}

fn apply_transform<T: Scalar>(tr: BaseTransform, x: T) -> T {
    match tr {
        BaseTransform::Identity => x,
        BaseTransform::Tanh => x.tanh(),
        BaseTransform::SignedSqrt => x.signum() * x.abs().sqrt(),
        BaseTransform::Square => x * x,
    }
}

/// |Pearson correlation|, 0 when either side is degenerate.
fn abs_correlation<T: Scalar>(a: &DVector<T>, b: &DVector<T>) -> T {
    let n = T::from_count(a.len());
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut cov = T::zero();
    let mut va = T::zero();
    let mut vb = T::zero();
    for i in 0..a.len() {
        let da = a[i] - ma;
        let db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va <= T::zero() || vb <= T::zero() {
        return T::zero();
    }
    (cov / (va.sqrt() * vb.sqrt())).abs()
}

/// Size of the recursive-ridge pool for `m` transformed columns.
pub fn pool_size(m: usize) -> usize {
    m + m * (m - 1) / 2 + m * (m + 1) / 2
}
