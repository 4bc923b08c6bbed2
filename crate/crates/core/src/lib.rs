//! Estimation limits for linear-in-target predictors.
//!
//! The library computes the trace functional
//! `L = tr(K'K) / T_oos` of an out-of-sample estimator matrix `K`, uses it
//! to turn a realized out-of-sample R² into a lower bound on population
//! predictability, and attaches a one-sided CLT confidence band built from
//! a fully pivotal variance estimator. Supporting machinery: dated-panel
//! preprocessing, seeded random nonlinear features, ridge / kernel-ridge
//! estimators over a shared spectral cache, random-matrix fixed-point
//! oracles, and a semi-synthetic Monte Carlo harness.
//!
//! All numerics are generic over [`Scalar`] (`f32`/`f64`); the `*64`
//! aliases below fix the common `f64` instantiations.
//!
//! ```
//! use llglab::estimators::{effective_z, SplitCache};
//! use llglab::features::{generate_weights, random_signal_matrix, Activation};
//! use llglab::llg::{corrected_r2_lower_bound, r2_oos};
//! use llglab::sim::{seeded_gaussian_matrix, seeded_gaussian_vector};
//!
//! // 90 months of 5 raw predictors, 40 random features, train on 60.
//! let x = seeded_gaussian_matrix::<f64>(90, 5, 1);
//! let y = seeded_gaussian_vector::<f64>(90, 2);
//! let map = generate_weights(5, 40, 3, Activation::Tanh)?;
//! let signals = random_signal_matrix(&x, &map, 60)?;
//! let (s_in, s_oos) = signals.split_pair();
//!
//! let cache = SplitCache::new(&s_in, &s_oos)?;
//! let z = effective_z(&s_in, 0.01)?;
//! let gap = cache.llg(z)?;
//! let preds = cache.predict_oos(&y.rows(0, 60).into_owned(), z)?;
//! let r2 = r2_oos(&y.rows(60, 30).into_owned(), &preds)?;
//! let bound = corrected_r2_lower_bound(r2, gap);
//! assert!(gap > 0.0 && bound <= 1.0);
//! # Ok::<(), llglab::Error>(())
//! ```

pub mod clt;
pub mod dataio;
pub mod error;
pub mod estimators;
pub mod features;
pub mod llg;
pub mod rmt;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` instantiations of the main public types.
pub type PanelData64 = dataio::PanelData<f64>;
pub type ProcessedPanel64 = dataio::ProcessedPanel<f64>;
pub type SignalMatrix64 = features::SignalMatrix<f64>;
pub type RandomFeatureMap64 = features::RandomFeatureMap<f64>;
pub type RidgeModel64 = estimators::RidgeModel<f64>;
pub type EstimatorMatrix64 = estimators::EstimatorMatrix<f64>;
pub type PosteriorBelief64 = estimators::PosteriorBelief<f64>;
pub type LlgReport64 = llg::LlgReport<f64>;
pub type MseDecomposition64 = llg::MseDecomposition<f64>;
pub type VarianceComponents64 = clt::VarianceComponents<f64>;
pub type ConfidenceReport64 = clt::ConfidenceReport<f64>;
pub type RmtSolution64 = rmt::RmtSolution<f64>;
pub type VoCCurve64 = sim::VoCCurve<f64>;
