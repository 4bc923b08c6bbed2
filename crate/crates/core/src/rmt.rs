//! Random-matrix fixed points and deterministic equivalents.
//!
//! For a population spectrum with Stieltjes transform
//! `m_pop(-s) = mean_i 1/(s + lambda_i)` and aspect ratio `c = P/T`, the
//! limiting sample transform `m(-z; c)` is the unique positive root of
//!
//! ```text
//! m = m_pop(-z / D) / D,    D = 1 - c + c z m .
//! ```
//!
//! From the root: `xi = (1 - zm) / (1/c - 1 + zm)`, the implicit shrinkage
//! `Z* = z / D = z (1 + xi)`, and the deterministic equivalent of the gap
//! `xi + z xi'`. These serve as independent oracles for the empirical
//! trace functionals.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const FIXED_POINT_TOL: f64 = 1e-12;
const DAMPING: f64 = 0.5;
const MAX_DAMPED_ITER: usize = 10_000;
const MAX_BISECT_ITER: usize = 500;

/// Solved fixed point at one `(z, c)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RmtSolution<T: Scalar> {
    pub z: T,
    pub c: T,
    /// `m(-z; c) > 0`.
    pub m: T,
    /// `m'(-z; c) = -(d/dz) m(-z; c) >= 0`, from the differentiated
    /// fixed-point relation.
    pub m_prime: T,
    pub xi: T,
    /// `Z*(z; c) = z (1 + xi)`.
    pub z_star: T,
    /// `|m - rhs(m)|` at the returned root.
    pub residual: T,
}

/// Population Stieltjes transform `m_pop(-z) = mean_i 1/(z + lambda_i)`.
pub fn stieltjes_population<T: Scalar>(spectrum: &[T], z: T) -> T {
    let n = T::from_count(spectrum.len());
    spectrum.iter().map(|&l| T::one() / (z + l)).fold(T::zero(), |a, b| a + b) / n
}

/// `mean_i 1/(z + lambda_i)^2 = -(d/dz) m_pop(-z)`.
pub fn stieltjes_population_prime<T: Scalar>(spectrum: &[T], z: T) -> T {
    let n = T::from_count(spectrum.len());
    spectrum
        .iter()
        .map(|&l| {
            let w = T::one() / (z + l);
            w * w
        })
        .fold(T::zero(), |a, b| a + b)
        / n
}

fn fixed_point_rhs<T: Scalar>(spectrum: &[T], z: T, c: T, m: T) -> Option<T> {
    let d = T::one() - c + c * z * m;
    if d <= T::zero() {
        return None;
    }
    Some(stieltjes_population(spectrum, z / d) / d)
}

/// Solve the master fixed-point equation by damped iteration from
/// `m_pop(-z)`, falling back to bisection on `(max(0, (c-1)/(cz)), 1/z]`
/// where the positive root is bracketed.
pub fn solve_fixed_point<T: Scalar>(spectrum: &[T], z: T, c: T) -> Result<RmtSolution<T>> {
    if z <= T::zero() || c <= T::zero() {
        return Err(Error::InvalidParameter("fixed point needs z > 0 and c > 0".into()));
    }
    if spectrum.is_empty() || spectrum.iter().any(|&l| l < T::zero()) {
        return Err(Error::InvalidParameter("spectrum must be nonempty and nonnegative".into()));
    }
    // 1e-12 at f64 per the solver contract; wider types than epsilon
    // allows cannot be demanded of f32.
    let tol = T::c(FIXED_POINT_TOL).max(T::machine_epsilon() * T::c(100.0));
    let omega = T::c(DAMPING);

    let mut m = stieltjes_population(spectrum, z);
    let mut best = (m, T::c(f64::INFINITY));
    for _ in 0..MAX_DAMPED_ITER {
        match fixed_point_rhs(spectrum, z, c, m) {
            Some(rhs) => {
                let resid = (m - rhs).abs();
                if resid < best.1 {
                    best = (m, resid);
                }
                if resid <= tol {
                    return finish(spectrum, z, c, m, resid);
                }
                m = (T::one() - omega) * m + omega * rhs;
            }
            None => break,
        }
    }

    // Bisection on g(m) = m - rhs(m); g < 0 at the lower bracket edge and
    // g > 0 at m = 1/z whenever the spectrum is not identically zero.
    let mut lo = if c > T::one() { (c - T::one()) / (c * z) } else { T::zero() };
    let nudge = T::c(1e-14).max(T::machine_epsilon() * T::c(16.0));
    lo += nudge * (T::one() / z).max(lo);
    let mut hi = T::one() / z;
    let g = |m: T| fixed_point_rhs(spectrum, z, c, m).map(|rhs| m - rhs);
    let g_lo = g(lo);
    let g_hi = g(hi);
    if !matches!((g_lo, g_hi), (Some(a), Some(b)) if a <= T::zero() && b >= T::zero()) {
        return Err(Error::NonConvergence(best.1.to_f64_c()));
    }
    for _ in 0..MAX_BISECT_ITER {
        let mid = (lo + hi) / T::c(2.0);
        match g(mid) {
            Some(v) if v > T::zero() => hi = mid,
            Some(_) => lo = mid,
            None => lo = mid,
        }
        if hi - lo <= T::c(f64::EPSILON) * hi {
            break;
        }
    }
    m = (lo + hi) / T::c(2.0);
    let resid = match fixed_point_rhs(spectrum, z, c, m) {
        Some(rhs) => (m - rhs).abs(),
        None => return Err(Error::NonConvergence(best.1.to_f64_c())),
    };
    if resid > tol {
        return Err(Error::NonConvergence(resid.to_f64_c()));
    }
    finish(spectrum, z, c, m, resid)
}

fn finish<T: Scalar>(spectrum: &[T], z: T, c: T, m: T, residual: T) -> Result<RmtSolution<T>> {
    let d = T::one() - c + c * z * m;
    let z_star = z / d;
    let xi = (T::one() - z * m) / (T::one() / c - T::one() + z * m);
    // Differentiate m = nu(Z*)/D in z, with nu(s) = m_pop(-s):
    //   dm [D^2 + nu'(Z*) z^2 c / D + c z nu(Z*)]
    //      = nu'(Z*)(D - zcm)/D - c m nu(Z*),
    // where nu'(s) = -mean 1/(s+lambda)^2; then m'(-z) = -dm.
    let nu = stieltjes_population(spectrum, z_star);
    let dnu = -stieltjes_population_prime(spectrum, z_star);
    let numer = dnu * (d - z * c * m) / d - c * m * nu;
    let denom = d * d + dnu * z * z * c / d + c * z * nu;
    let dm = numer / denom;
    let sol = RmtSolution { z, c, m, m_prime: -dm, xi, z_star, residual };
    // Extreme penalties can overflow the derivative algebra; a solution
    // bundle with non-finite entries is a failed solve.
    if !(sol.m.is_finite_scalar()
        && sol.m_prime.is_finite_scalar()
        && sol.xi.is_finite_scalar()
        && sol.z_star.is_finite_scalar())
    {
        return Err(Error::NonConvergence(residual.to_f64_c()));
    }
    Ok(sol)
}

/// Deterministic equivalent of the ridge gap at penalty `z`:
/// `xi(z;c) + z xi'(z;c)` with
/// `xi' = -c (m - z m') / (1 - c + c z m)^2`.
pub fn deterministic_equivalent_llg<T: Scalar>(sol: &RmtSolution<T>) -> T {
    let d = T::one() - sol.c + sol.c * sol.z * sol.m;
    let xi_prime = -sol.c * (sol.m - sol.z * sol.m_prime) / (d * d);
    sol.xi + sol.z * xi_prime
}

/// Convenience: solve and evaluate in one call.
pub fn deterministic_equivalent_llg_for<T: Scalar>(spectrum: &[T], z: T, c: T) -> Result<T> {
    Ok(deterministic_equivalent_llg(&solve_fixed_point(spectrum, z, c)?))
}

/// Empirical resolvent averages of a PSD sample second-moment matrix:
/// `(tr((zI+Psi)^{-1})/P, tr((zI+Psi)^{-2})/P)`.
pub fn empirical_stieltjes<T: Scalar>(psi: &DMatrix<T>, z: T) -> Result<(T, T)> {
    if psi.nrows() != psi.ncols() {
        return Err(Error::DimensionMismatch("square matrix expected".into()));
    }
    let eig = psi.clone().symmetric_eigen();
    let spectrum: Vec<T> = (0..psi.nrows()).map(|i| eig.eigenvalues[i].max(T::zero())).collect();
    Ok(empirical_stieltjes_from_spectrum(&spectrum, 0, z))
}

/// Same, from an explicit eigenvalue list padded with `zeros` implicit
/// zero eigenvalues (for the tall-matrix side of a Gram pair).
pub fn empirical_stieltjes_from_spectrum<T: Scalar>(spectrum: &[T], zeros: usize, z: T) -> (T, T) {
    let n = T::from_count(spectrum.len() + zeros);
    let mut m = T::from_count(zeros) / z;
    let mut m_prime = T::from_count(zeros) / (z * z);
    for &l in spectrum {
        let w = T::one() / (z + l);
        m += w;
        m_prime += w * w;
    }
    (m / n, m_prime / n)
}
