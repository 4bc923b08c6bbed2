//! Seeded random nonlinear feature maps `S[t, k] = g(W_k' X_t)`.
//!
//! Weight generation is reproducible across platforms: column `k` of `W`
//! is drawn from a ChaCha8 stream with the map's seed and stream id `k`
//! (column-major order, row index inner), normal variates via the
//! `rand_distr` ziggurat. Because every column owns its stream, the first
//! `P1` columns of a `(seed, d, P)` map equal the full `(seed, d, P1)`
//! map, which keeps prefix slices of the complexity grid nested.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::YearMonth;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Nonlinearity applied to the random projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidParameter(format!("unknown activation `{other}`"))),
        }
    }
}

/// A `d x P` matrix of i.i.d. standard-normal projection weights plus the
/// activation, fully determined by `(seed, d, P)`.
#[derive(Debug, Clone)]
pub struct RandomFeatureMap<T: Scalar> {
    pub w: DMatrix<T>,
    pub activation: Activation,
    pub seed: u64,
    pub d: usize,
    pub p: usize,
}

/// Draw the projection weights for `generate_weights(d, P, seed)`.
pub fn generate_weights<T: Scalar>(
    d: usize,
    p: usize,
    seed: u64,
    activation: Activation,
) -> Result<RandomFeatureMap<T>> {
    if d == 0 || p == 0 {
        return Err(Error::InvalidParameter("feature map needs d >= 1 and P >= 1".into()));
    }
    let mut w = DMatrix::zeros(d, p);
    for k in 0..p {
        let mut rng = column_rng(seed, k);
        for i in 0..d {
            w[(i, k)] = T::standard_normal(&mut rng);
        }
    }
    Ok(RandomFeatureMap { w, activation, seed, d, p })
}

fn column_rng(seed: u64, column: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(column as u64);
    rng
}

/// Draw one standard-normal `d`-vector from its own seed (used for the
/// single-index truth of the semi-synthetic design).
pub fn standard_normal_vector<T: Scalar>(d: usize, seed: u64) -> DVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(d, |_, _| T::standard_normal(&mut rng))
}

/// `T_total x P` feature panel with an in-sample / out-of-sample boundary:
/// rows `[0, split_index)` train, rows `[split_index, ..)` evaluate.
#[derive(Debug, Clone)]
pub struct SignalMatrix<T: Scalar> {
    values: DMatrix<T>,
    split_index: usize,
    pub row_dates: Option<Vec<YearMonth>>,
}

impl<T: Scalar> SignalMatrix<T> {
    pub fn new(values: DMatrix<T>, split_index: usize) -> Result<Self> {
        if split_index == 0 || split_index >= values.nrows() {
            return Err(Error::InvalidParameter(format!(
                "split index {split_index} must lie strictly inside 0..{}",
                values.nrows()
            )));
        }
        if values.iter().any(|v| !v.is_finite_scalar()) {
            return Err(Error::InvalidParameter("signal matrix must be finite".into()));
        }
        Ok(Self { values, split_index, row_dates: None })
    }

    pub fn with_dates(mut self, dates: Vec<YearMonth>) -> Result<Self> {
        if dates.len() != self.values.nrows() {
            return Err(Error::DimensionMismatch("one date per row".into()));
        }
        self.row_dates = Some(dates);
        Ok(self)
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn split_index(&self) -> usize {
        self.split_index
    }

    pub fn t_total(&self) -> usize {
        self.values.nrows()
    }

    pub fn t_in(&self) -> usize {
        self.split_index
    }

    pub fn t_oos(&self) -> usize {
        self.values.nrows() - self.split_index
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Owned (in-sample, out-of-sample) row blocks.
    pub fn split_pair(&self) -> (DMatrix<T>, DMatrix<T>) {
        let t = self.split_index;
        let t_oos = self.t_oos();
        (
            self.values.rows(0, t).into_owned(),
            self.values.rows(t, t_oos).into_owned(),
        )
    }
}

/// Apply the feature map row-wise: `S = g(X W)`.
pub fn random_features<T: Scalar>(x: &DMatrix<T>, map: &RandomFeatureMap<T>) -> Result<DMatrix<T>> {
    if x.ncols() != map.d {
        return Err(Error::DimensionMismatch(format!(
            "input has {} columns, map expects {}",
            x.ncols(),
            map.d
        )));
    }
    if x.iter().any(|v| !v.is_finite_scalar()) {
        return Err(Error::InvalidParameter("feature inputs must be finite".into()));
    }
    let mut s = x * &map.w;
    s.apply(|v| *v = map.activation.apply(*v));
    Ok(s)
}

/// Feature panel with the split boundary attached.
pub fn random_signal_matrix<T: Scalar>(
    x: &DMatrix<T>,
    map: &RandomFeatureMap<T>,
    split_index: usize,
) -> Result<SignalMatrix<T>> {
    SignalMatrix::new(random_features(x, map)?, split_index)
}

/// First `p1` feature columns, split preserved. Slicing is prefix-stable:
/// `slice(S, a)` equals the first `a` columns of `slice(S, b)` for `a <= b`.
pub fn slice_features<T: Scalar>(s: &SignalMatrix<T>, p1: usize) -> Result<SignalMatrix<T>> {
    if p1 == 0 || p1 > s.n_features() {
        return Err(Error::InvalidParameter(format!(
            "P1 = {p1} out of range 1..={}",
            s.n_features()
        )));
    }
    Ok(SignalMatrix {
        values: s.values.columns(0, p1).into_owned(),
        split_index: s.split_index,
        row_dates: s.row_dates.clone(),
    })
}

const WEIGHTS_MAGIC: u16 = 0x4C57; // "WL"

/// Dump `W` with a 16-byte header `(magic, d, P, seed)` followed by the
/// column-major little-endian f64 entries; a cross-implementation fixture
/// format.
pub fn write_weights_binary<T: Scalar>(map: &RandomFeatureMap<T>, path: &Path) -> Result<()> {
    if map.d > u16::MAX as usize {
        return Err(Error::InvalidParameter("binary weight dump limits d to 65535".into()));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&WEIGHTS_MAGIC.to_le_bytes())?;
    out.write_all(&(map.d as u16).to_le_bytes())?;
    out.write_all(&(map.p as u32).to_le_bytes())?;
    out.write_all(&map.seed.to_le_bytes())?;
    for k in 0..map.p {
        for i in 0..map.d {
            out.write_all(&map.w[(i, k)].to_f64_c().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_weights_binary<T: Scalar>(path: &Path, activation: Activation) -> Result<RandomFeatureMap<T>> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; 16];
    file.read_exact(&mut header)?;
    let magic = u16::from_le_bytes([header[0], header[1]]);
    if magic != WEIGHTS_MAGIC {
        return Err(Error::InvalidParameter("bad magic in weight file".into()));
    }
    let d = u16::from_le_bytes([header[2], header[3]]) as usize;
    let p = u32::from_le_bytes([header[4], header[5], header[6], header[7]]) as usize;
    let seed = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
    let mut w = DMatrix::zeros(d, p);
    let mut buf = [0u8; 8];
    for k in 0..p {
        for i in 0..d {
            file.read_exact(&mut buf)?;
            w[(i, k)] = T::c(f64::from_le_bytes(buf));
        }
    }
    Ok(RandomFeatureMap { w, activation, seed, d, p })
}
