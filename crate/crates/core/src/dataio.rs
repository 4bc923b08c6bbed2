//! Dated predictor panels and their three-step preprocessing.
//!
//! A raw panel column passes through, in order:
//! 1. rolling demean/standardize over the trailing `window` months,
//!    lagged one month (sample standard deviation, n-1 denominator);
//! 2. clipping to `[-bound, +bound]`;
//! 3. AR(1) residuals, with the autocorrelation coefficient re-estimated
//!    on an expanding window using data through time `t` only.
//!
//! Entries inside warm-up windows are masked, never zero-filled, and any
//! operation touching a masked entry yields a masked entry. Degenerate
//! windows (zero trailing std, zero-variance lagged regressor) mask the
//! affected entry and are reported as flags on the output panel.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Calendar month, the panel's time index. Day-of-month is parsed and
/// discarded; no timezone semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidParameter(format!("month {month} out of range")));
        }
        Ok(Self { year, month })
    }

    /// The following calendar month.
    pub fn next(self) -> Self {
        if self.month == 12 {
            Self { year: self.year + 1, month: 1 }
        } else {
            Self { year: self.year, month: self.month + 1 }
        }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    /// Accepts `YYYY-MM` and `YYYY-MM-DD`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('-').collect();
        if parts.len() != 2 && parts.len() != 3 {
            return Err(Error::InvalidParameter(format!("bad date `{s}`")));
        }
        let year: i32 =
            parts[0].parse().map_err(|_| Error::InvalidParameter(format!("bad date `{s}`")))?;
        let month: u8 =
            parts[1].parse().map_err(|_| Error::InvalidParameter(format!("bad date `{s}`")))?;
        if parts.len() == 3 {
            let day: u8 =
                parts[2].parse().map_err(|_| Error::InvalidParameter(format!("bad date `{s}`")))?;
            if !(1..=31).contains(&day) {
                return Err(Error::InvalidParameter(format!("bad date `{s}`")));
            }
        }
        YearMonth::new(year, month)
    }
}

/// Real sequence with a per-entry validity mask.
#[derive(Debug, Clone)]
pub struct MaskedSeries<T: Scalar> {
    values: Vec<T>,
    defined: Vec<bool>,
}

/// Masked slots carry unspecified payloads, so equality compares the mask
/// and the defined entries only.
impl<T: Scalar> PartialEq for MaskedSeries<T> {
    fn eq(&self, other: &Self) -> bool {
        self.defined == other.defined
            && self
                .defined
                .iter()
                .enumerate()
                .all(|(i, &d)| !d || self.values[i] == other.values[i])
    }
}

impl<T: Scalar> MaskedSeries<T> {
    pub fn from_values(values: Vec<T>) -> Self {
        let defined = vec![true; values.len()];
        Self { values, defined }
    }

    pub fn new(values: Vec<T>, defined: Vec<bool>) -> Result<Self> {
        if values.len() != defined.len() {
            return Err(Error::DimensionMismatch("mask and values lengths differ".into()));
        }
        Ok(Self { values, defined })
    }

    pub fn all_masked(len: usize) -> Self {
        Self { values: vec![T::nan_scalar(); len], defined: vec![false; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_defined(&self, i: usize) -> bool {
        self.defined[i]
    }

    pub fn get(&self, i: usize) -> Option<T> {
        if self.defined[i] {
            Some(self.values[i])
        } else {
            None
        }
    }

    pub fn defined_count(&self) -> usize {
        self.defined.iter().filter(|&&d| d).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<T>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    fn set(&mut self, i: usize, v: T) {
        self.values[i] = v;
        self.defined[i] = true;
    }
}

/// Which degeneracy masked an entry during preprocessing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlagKind {
    /// Trailing-window standard deviation was zero.
    DegenerateWindow,
    /// Expanding-window lagged regressor had zero variance.
    DegenerateRegressor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessFlag {
    pub column: String,
    pub index: usize,
    pub kind: FlagKind,
}

/// A masked series plus the indices its producer had to mask for
/// degeneracy (as opposed to plain warm-up).
#[derive(Debug, Clone)]
pub struct MaskedOutcome<T: Scalar> {
    pub series: MaskedSeries<T>,
    pub flags: Vec<(usize, FlagKind)>,
}

/// Raw dated panel: strictly increasing month stamps, one value per date
/// per column, with missing values allowed only as a leading block.
#[derive(Debug, Clone)]
pub struct PanelData<T: Scalar> {
    pub dates: Vec<YearMonth>,
    pub names: Vec<String>,
    pub columns: Vec<MaskedSeries<T>>,
}

impl<T: Scalar> PanelData<T> {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn column(&self, name: &str) -> Option<&MaskedSeries<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.columns[i])
    }

    /// Keep only the first `n` rows.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            dates: self.dates[..n].to_vec(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| MaskedSeries {
                    values: c.values[..n].to_vec(),
                    defined: c.defined[..n].to_vec(),
                })
                .collect(),
        }
    }
}

/// Window lengths and clip bound used to build a processed panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub window: usize,
    pub clip_bound: f64,
    pub min_window: usize,
}

/// Panel after the three preprocessing steps, with per-column masks and
/// the degeneracy flags accumulated along the way.
#[derive(Debug, Clone)]
pub struct ProcessedPanel<T: Scalar> {
    pub dates: Vec<YearMonth>,
    pub names: Vec<String>,
    pub columns: Vec<MaskedSeries<T>>,
    pub provenance: Provenance,
    pub flags: Vec<PreprocessFlag>,
}

impl<T: Scalar> ProcessedPanel<T> {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn column(&self, name: &str) -> Option<&MaskedSeries<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.columns[i])
    }

    /// Row range `[start, end)` on which every column is defined.
    pub fn aligned_range(&self) -> Result<(usize, usize)> {
        let n = self.n_rows();
        let mut start = 0;
        for c in &self.columns {
            let first = (0..n).find(|&i| c.is_defined(i)).ok_or_else(|| {
                Error::InsufficientData("a column has no defined entries".into())
            })?;
            start = start.max(first);
        }
        // Interior degenerate masks shrink the usable range from the left.
        let mut s = start;
        'outer: while s < n {
            for c in &self.columns {
                if !c.is_defined(s) {
                    s += 1;
                    continue 'outer;
                }
            }
            break;
        }
        let mut end = s;
        'scan: while end < n {
            for c in &self.columns {
                if !c.is_defined(end) {
                    break 'scan;
                }
            }
            end += 1;
        }
        if s >= end {
            return Err(Error::InsufficientData("no jointly defined rows".into()));
        }
        Ok((s, end))
    }
}

/// Ingest a CSV with a `date` column and the named numeric columns.
/// Rows must already be ordered by date; leading blanks per column become
/// masked warm-up, interior blanks are rejected.
pub fn load_predictor_csv<T: Scalar>(path: &Path, schema: &[&str]) -> Result<PanelData<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let names: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        index.insert(n.as_str(), i);
    }
    let date_idx =
        *index.get("date").ok_or_else(|| Error::MissingColumn("date".to_string()))?;
    let mut col_idx = Vec::with_capacity(schema.len());
    for &want in schema {
        let i = *index.get(want).ok_or_else(|| Error::MissingColumn(want.to_string()))?;
        col_idx.push(i);
    }

    let mut dates: Vec<YearMonth> = Vec::new();
    let mut values: Vec<Vec<Option<T>>> = vec![Vec::new(); schema.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let date: YearMonth = record
            .get(date_idx)
            .ok_or_else(|| Error::UnparsableCell { row, col: "date".into() })?
            .parse()?;
        if let Some(last) = dates.last() {
            if date <= *last {
                return Err(Error::NonMonotoneDates(row));
            }
        }
        dates.push(date);
        for (c, &i) in col_idx.iter().enumerate() {
            let cell = record.get(i).unwrap_or("").trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
            {
                values[c].push(None);
            } else {
                let parsed: f64 = cell.parse().map_err(|_| Error::UnparsableCell {
                    row,
                    col: schema[c].to_string(),
                })?;
                values[c].push(Some(T::c(parsed)));
            }
        }
    }
    if dates.is_empty() {
        return Err(Error::InsufficientData("csv has no data rows".into()));
    }

    let mut columns = Vec::with_capacity(schema.len());
    for (c, col) in values.into_iter().enumerate() {
        let first_defined = col.iter().position(|v| v.is_some()).unwrap_or(col.len());
        let mut series = MaskedSeries::all_masked(col.len());
        for (i, v) in col.into_iter().enumerate() {
            match v {
                Some(x) => series.set(i, x),
                None if i < first_defined => {}
                None => {
                    return Err(Error::UnparsableCell { row: i, col: schema[c].to_string() });
                }
            }
        }
        columns.push(series);
    }
    Ok(PanelData { dates, names: schema.iter().map(|s| s.to_string()).collect(), columns })
}

/// Step 1: `out[t] = (x[t] - mean(x[t-window..t-1])) / std(x[t-window..t-1])`
/// with the sample (n-1) standard deviation. The first `window` entries are
/// masked; windows containing masked entries or with zero std mask the
/// output, the latter flagged `DegenerateWindow`.
pub fn rolling_standardize<T: Scalar>(series: &MaskedSeries<T>, window: usize) -> Result<MaskedOutcome<T>> {
    if window < 2 {
        return Err(Error::InvalidParameter("rolling window must be >= 2".into()));
    }
    let n = series.len();
    let mut out = MaskedSeries::all_masked(n);
    let mut flags = Vec::new();
    for t in window..n {
        if !series.is_defined(t) {
            continue;
        }
        let lo = t - window;
        if (lo..t).any(|s| !series.is_defined(s)) {
            continue;
        }
        let wn = T::from_count(window);
        let mut mean = T::zero();
        for s in lo..t {
            mean += series.values[s];
        }
        mean /= wn;
        let mut ss = T::zero();
        for s in lo..t {
            let d = series.values[s] - mean;
            ss += d * d;
        }
        let var = ss / (wn - T::one());
        if var <= T::zero() {
            flags.push((t, FlagKind::DegenerateWindow));
            continue;
        }
        out.set(t, (series.values[t] - mean) / var.sqrt());
    }
    Ok(MaskedOutcome { series: out, flags })
}

/// Step 2: entry-wise clamp to `[-bound, bound]`; masks preserved.
pub fn clip<T: Scalar>(series: &MaskedSeries<T>, bound: T) -> Result<MaskedSeries<T>> {
    if bound <= T::zero() {
        return Err(Error::InvalidParameter("clip bound must be positive".into()));
    }
    let mut out = series.clone();
    for i in 0..out.len() {
        if out.defined[i] {
            out.values[i] = out.values[i].min(bound).max(-bound);
        }
    }
    Ok(out)
}

/// Step 3: expanding-window AR(1) residuals.
///
/// At each time `t` with at least `min_window` defined observations so far,
/// the autocorrelation is the OLS slope of `x_s` on `x_{s-1}` over all
/// defined consecutive pairs with `s <= t`, and the residual placed at
/// `t + 1` is `x[t+1] - rho_t * x[t]`. Estimation never sees data beyond
/// `t`. A zero-variance lagged regressor masks the entry with a
/// `DegenerateRegressor` flag; if no entry can be produced at all the
/// whole call fails with that error.
pub fn ar1_residuals_expanding<T: Scalar>(
    series: &MaskedSeries<T>,
    min_window: usize,
) -> Result<MaskedOutcome<T>> {
    if min_window < 3 {
        return Err(Error::InvalidParameter("min_window must be >= 3".into()));
    }
    if series.defined_count() < min_window + 1 {
        return Err(Error::InsufficientData(format!(
            "need at least {} defined entries for the AR(1) step",
            min_window + 1
        )));
    }
    let n = series.len();
    let mut out = MaskedSeries::all_masked(n);
    let mut flags = Vec::new();
    // Running sums over defined consecutive pairs (x_{s-1}, x_s), s <= t.
    let mut n_pairs = 0usize;
    let mut sum_lag = T::zero();
    let mut sum_cur = T::zero();
    let mut sum_lag2 = T::zero();
    let mut sum_cross = T::zero();
    let mut n_defined = 0usize;
    let mut produced = false;
    for t in 0..n {
        if series.is_defined(t) {
            n_defined += 1;
            if t > 0 && series.is_defined(t - 1) {
                let xl = series.values[t - 1];
                let xc = series.values[t];
                n_pairs += 1;
                sum_lag += xl;
                sum_cur += xc;
                sum_lag2 += xl * xl;
                sum_cross += xl * xc;
            }
        }
        if n_defined < min_window || n_pairs < 2 {
            continue;
        }
        if t + 1 >= n || !series.is_defined(t) || !series.is_defined(t + 1) {
            continue;
        }
        let np = T::from_count(n_pairs);
        let var_lag = sum_lag2 - sum_lag * sum_lag / np;
        if var_lag <= T::zero() {
            flags.push((t + 1, FlagKind::DegenerateRegressor));
            continue;
        }
        let rho = (sum_cross - sum_lag * sum_cur / np) / var_lag;
        out.set(t + 1, series.values[t + 1] - rho * series.values[t]);
        produced = true;
    }
    if !produced {
        return Err(Error::DegenerateRegressor);
    }
    Ok(MaskedOutcome { series: out, flags })
}

/// Compose the three steps column-wise over a panel.
pub fn preprocess_panel<T: Scalar>(
    panel: &PanelData<T>,
    window: usize,
    bound: T,
    min_window: usize,
) -> Result<ProcessedPanel<T>> {
    let mut columns = Vec::with_capacity(panel.columns.len());
    let mut flags = Vec::new();
    for (name, series) in panel.names.iter().zip(&panel.columns) {
        let standardized = rolling_standardize(series, window)?;
        for (index, kind) in standardized.flags {
            flags.push(PreprocessFlag { column: name.clone(), index, kind });
        }
        let clipped = clip(&standardized.series, bound)?;
        let residuals = ar1_residuals_expanding(&clipped, min_window)?;
        for (index, kind) in residuals.flags {
            flags.push(PreprocessFlag { column: name.clone(), index, kind });
        }
        columns.push(residuals.series);
    }
    Ok(ProcessedPanel {
        dates: panel.dates.clone(),
        names: panel.names.clone(),
        columns,
        provenance: Provenance { window, clip_bound: bound.to_f64_c(), min_window },
        flags,
    })
}

/// First two preprocessing steps only (standardize + clip), exposed for
/// the GARCH benchmark target mode.
pub fn standardize_and_clip<T: Scalar>(
    series: &MaskedSeries<T>,
    window: usize,
    bound: T,
) -> Result<MaskedOutcome<T>> {
    let standardized = rolling_standardize(series, window)?;
    let clipped = clip(&standardized.series, bound)?;
    Ok(MaskedOutcome { series: clipped, flags: standardized.flags })
}

/// Supervised view of a processed panel: rows of `x` hold all panel
/// columns at time `t`, `y[i]` is the target column at `t + 1`, restricted
/// to the maximal jointly defined range.
#[derive(Debug, Clone)]
pub struct SupervisedPanel<T: Scalar> {
    /// Dates of the signal rows (time `t`).
    pub dates: Vec<YearMonth>,
    /// Dates of the target realizations (one step ahead of `dates`).
    pub target_dates: Vec<YearMonth>,
    pub x: nalgebra::DMatrix<T>,
    pub y: nalgebra::DVector<T>,
}

impl<T: Scalar> SupervisedPanel<T> {
    /// Number of pairs whose target realizes strictly before `date`; using
    /// it as the split index puts exactly the targets from `date` onward
    /// out of sample.
    pub fn split_index_at(&self, date: YearMonth) -> usize {
        self.target_dates.partition_point(|d| *d < date)
    }
}

pub fn aligned_supervised<T: Scalar>(
    panel: &ProcessedPanel<T>,
    target: &str,
) -> Result<SupervisedPanel<T>> {
    let target_col =
        panel.column(target).ok_or_else(|| Error::MissingColumn(target.to_string()))?;
    let (start, end) = panel.aligned_range()?;
    if end - start < 2 {
        return Err(Error::InsufficientData("need at least 2 aligned rows".into()));
    }
    let n = end - start - 1;
    let d = panel.columns.len();
    let x = nalgebra::DMatrix::from_fn(n, d, |i, j| {
        panel.columns[j].get(start + i).expect("aligned range is defined")
    });
    let y = nalgebra::DVector::from_fn(n, |i, _| {
        target_col.get(start + i + 1).expect("aligned range is defined")
    });
    Ok(SupervisedPanel {
        dates: panel.dates[start..start + n].to_vec(),
        target_dates: panel.dates[start + 1..start + n + 1].to_vec(),
        x,
        y,
    })
}

/// Serialize a processed panel: the original schema plus one 0/1
/// `<name>_mask` sidecar per series (1 = defined). Masked cells are empty.
pub fn write_processed_csv<T: Scalar>(panel: &ProcessedPanel<T>, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    for name in &panel.names {
        header.push(name.clone());
        header.push(format!("{name}_mask"));
    }
    writer.write_record(&header)?;
    for (i, date) in panel.dates.iter().enumerate() {
        let mut record = vec![date.to_string()];
        for col in &panel.columns {
            match col.get(i) {
                Some(v) => {
                    record.push(format!("{:?}", v.to_f64_c()));
                    record.push("1".to_string());
                }
                None => {
                    record.push(String::new());
                    record.push("0".to_string());
                }
            }
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Read back a processed CSV (as written by [`write_processed_csv`]).
/// Column list is inferred from the header; `<name>_mask` columns pair
/// with their series.
pub fn read_processed_csv<T: Scalar>(path: &Path) -> Result<ProcessedPanel<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let names: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    if names.first().map(String::as_str) != Some("date") {
        return Err(Error::MissingColumn("date".to_string()));
    }
    let mut series_names = Vec::new();
    for name in &names[1..] {
        if !name.ends_with("_mask") {
            series_names.push(name.clone());
        }
    }
    let mask_idx: HashMap<String, usize> = names
        .iter()
        .enumerate()
        .filter_map(|(i, n)| n.strip_suffix("_mask").map(|base| (base.to_string(), i)))
        .collect();
    let value_idx: HashMap<String, usize> = names
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, n)| !n.ends_with("_mask"))
        .map(|(i, n)| (n.clone(), i))
        .collect();

    let mut dates = Vec::new();
    let mut columns: Vec<(Vec<T>, Vec<bool>)> = vec![Default::default(); series_names.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let date: YearMonth =
            record.get(0).ok_or_else(|| Error::UnparsableCell { row, col: "date".into() })?.parse()?;
        if let Some(last) = dates.last() {
            if date <= *last {
                return Err(Error::NonMonotoneDates(row));
            }
        }
        dates.push(date);
        for (c, name) in series_names.iter().enumerate() {
            let vi = value_idx[name];
            let cell = record.get(vi).unwrap_or("").trim();
            let masked_out = match mask_idx.get(name) {
                Some(&mi) => record.get(mi).unwrap_or("1").trim() == "0",
                None => cell.is_empty(),
            };
            if masked_out || cell.is_empty() {
                columns[c].0.push(T::nan_scalar());
                columns[c].1.push(false);
            } else {
                let parsed: f64 = cell
                    .parse()
                    .map_err(|_| Error::UnparsableCell { row, col: name.clone() })?;
                columns[c].0.push(T::c(parsed));
                columns[c].1.push(true);
            }
        }
    }
    let columns = columns
        .into_iter()
        .map(|(values, defined)| MaskedSeries::new(values, defined))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProcessedPanel {
        dates,
        names: series_names,
        columns,
        provenance: Provenance { window: 0, clip_bound: 0.0, min_window: 0 },
        flags: Vec::new(),
    })
}

/// Canonical column names of the monthly predictor file.
pub const CANONICAL_COLUMNS: [&str; 14] = [
    "retx", "dp", "dy", "ep", "de", "bm", "ntis", "tbl", "lty", "ltr", "tms", "dfy", "dfr",
    "infl",
];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write as _;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn lag1_autocorr(values: &[f64]) -> f64 {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            den += (values[i] - mean).powi(2);
            if i > 0 {
                num += (values[i] - mean) * (values[i - 1] - mean);
            }
        }
        num / den
    }

    #[test]
    fn load_basic_csv() {
        let f = write_csv("date,retx,dp\n1930-01,0.5,1.0\n1930-02,0.6,1.1\n1930-03,0.7,1.2\n");
        let panel = load_predictor_csv::<f64>(f.path(), &["retx", "dp"]).unwrap();
        assert_eq!(panel.n_rows(), 3);
        assert_eq!(panel.names, vec!["retx", "dp"]);
        assert_eq!(panel.column("dp").unwrap().get(2), Some(1.2));
        assert_eq!(panel.dates[0], YearMonth::new(1930, 1).unwrap());
    }

    #[test]
    fn load_rejects_non_monotone_dates() {
        let f = write_csv("date,retx\n1930-02,0.5\n1930-01,0.6\n");
        assert!(matches!(
            load_predictor_csv::<f64>(f.path(), &["retx"]),
            Err(Error::NonMonotoneDates(1))
        ));
    }

    #[test]
    fn load_rejects_interior_blank() {
        let f = write_csv("date,retx\n1930-01,0.5\n1930-02,\n1930-03,0.7\n");
        assert!(matches!(
            load_predictor_csv::<f64>(f.path(), &["retx"]),
            Err(Error::UnparsableCell { row: 1, .. })
        ));
    }

    #[test]
    fn load_accepts_leading_blanks_and_day_stamps() {
        let f = write_csv("date,retx,dp\n1930-01-01,,1.0\n1930-02-01,0.6,1.1\n1930-03-01,0.7,1.2\n");
        let panel = load_predictor_csv::<f64>(f.path(), &["retx", "dp"]).unwrap();
        assert_eq!(panel.column("retx").unwrap().get(0), None);
        assert_eq!(panel.column("retx").unwrap().get(1), Some(0.6));
    }

    #[test]
    fn load_reports_missing_column() {
        let f = write_csv("date,retx\n1930-01,0.5\n");
        assert!(matches!(
            load_predictor_csv::<f64>(f.path(), &["dp"]),
            Err(Error::MissingColumn(c)) if c == "dp"
        ));
    }

    #[test]
    fn rolling_standardize_golden() {
        // Sample-std convention on [1,2,3,4], window 2:
        // out[2] = (3 - 1.5)/std(1,2), out[3] = (4 - 2.5)/std(2,3).
        let s = MaskedSeries::from_values(vec![1.0, 2.0, 3.0, 4.0]);
        let out = rolling_standardize(&s, 2).unwrap();
        assert_eq!(out.series.get(0), None);
        assert_eq!(out.series.get(1), None);
        let sd = 0.5f64.sqrt();
        assert_relative_eq!(out.series.get(2).unwrap(), 1.5 / sd, epsilon = 1e-14);
        assert_relative_eq!(out.series.get(3).unwrap(), 1.5 / sd, epsilon = 1e-14);
    }

    #[test]
    fn rolling_standardize_constant_flags_degenerate() {
        let s = MaskedSeries::from_values(vec![5.0; 10]);
        let out = rolling_standardize(&s, 3).unwrap();
        assert_eq!(out.series.defined_count(), 0);
        assert_eq!(out.flags.len(), 7);
        assert!(out.flags.iter().all(|f| f.1 == FlagKind::DegenerateWindow));
    }

    #[test]
    fn rolling_standardize_window_equals_length_masks_all() {
        let s = MaskedSeries::from_values(vec![1.0, 2.0, 3.0]);
        let out = rolling_standardize(&s, 3).unwrap();
        assert_eq!(out.series.defined_count(), 0);
        assert!(out.flags.is_empty());
    }

    #[test]
    fn rolling_standardize_unit_scale_on_gaussian_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..10_000).map(|_| f64::standard_normal(&mut rng)).collect();
        let out = rolling_standardize(&MaskedSeries::from_values(values), 36).unwrap();
        let defined: Vec<f64> = out.series.iter().flatten().collect();
        let n = defined.len() as f64;
        let mean = defined.iter().sum::<f64>() / n;
        let sd = (defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.8..=1.25).contains(&sd), "sd = {sd}");
    }

    #[test]
    fn clip_basics_and_idempotence() {
        let s = MaskedSeries::new(
            vec![-5.0, 0.0, 5.0, f64::NAN],
            vec![true, true, true, false],
        )
        .unwrap();
        let c = clip(&s, 3.0).unwrap();
        assert_eq!(c.get(0), Some(-3.0));
        assert_eq!(c.get(1), Some(0.0));
        assert_eq!(c.get(2), Some(3.0));
        assert_eq!(c.get(3), None);
        let cc = clip(&c, 3.0).unwrap();
        assert_eq!(c, cc);
        // Entries within the bound pass through untouched.
        let small = MaskedSeries::from_values(vec![0.5, -1.0]);
        assert_eq!(clip(&small, 3.0).unwrap(), small);
        assert!(clip(&small, 0.0).is_err());
    }

    #[test]
    fn ar1_exact_autoregression_gives_zero_residuals() {
        let mut values = vec![1.0f64];
        for t in 1..60 {
            values.push(0.5 * values[t - 1]);
        }
        let out = ar1_residuals_expanding(&MaskedSeries::from_values(values), 5).unwrap();
        for v in out.series.iter().flatten() {
            assert!(v.abs() <= 1e-12, "residual {v}");
        }
        assert!(out.series.defined_count() > 0);
    }

    #[test]
    fn ar1_constant_series_is_degenerate() {
        let s = MaskedSeries::from_values(vec![2.0; 30]);
        assert!(matches!(ar1_residuals_expanding(&s, 5), Err(Error::DegenerateRegressor)));
    }

    #[test]
    fn ar1_removes_autocorrelation_from_iid_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let values: Vec<f64> = (0..10_000).map(|_| f64::standard_normal(&mut rng)).collect();
        let out = ar1_residuals_expanding(&MaskedSeries::from_values(values), 24).unwrap();
        let resid: Vec<f64> = out.series.iter().flatten().collect();
        assert!(lag1_autocorr(&resid).abs() <= 0.03);
    }

    #[test]
    fn ar1_insufficient_history_is_an_error() {
        let s = MaskedSeries::from_values(vec![1.0, 2.0, 1.5, 2.5]);
        assert!(matches!(ar1_residuals_expanding(&s, 24), Err(Error::InsufficientData(_))));
    }

    fn ar1_panel(rho: f64, n: usize, seed: u64) -> PanelData<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0f64];
        for t in 1..n {
            values.push(rho * values[t - 1] + f64::standard_normal(&mut rng));
        }
        let dates: Vec<YearMonth> = (0..n)
            .map(|i| YearMonth::new(1900 + (i / 12) as i32, (i % 12 + 1) as u8).unwrap())
            .collect();
        PanelData {
            dates,
            names: vec!["x".to_string()],
            columns: vec![MaskedSeries::from_values(values)],
        }
    }

    #[test]
    fn preprocess_whitens_ar1_column() {
        let panel = ar1_panel(0.9, 5000, 7);
        let processed = preprocess_panel(&panel, 36, 3.0, 24).unwrap();
        let resid: Vec<f64> = processed.columns[0].iter().flatten().collect();
        assert!(resid.len() > 4800);
        let ac = lag1_autocorr(&resid);
        assert!(ac.abs() <= 0.05, "lag-1 autocorrelation {ac}");
    }

    #[test]
    fn preprocess_flags_constant_tail() {
        let mut panel = ar1_panel(0.5, 200, 8);
        for t in 36..200 {
            panel.columns[0].values[t] = 1.0;
        }
        let processed = preprocess_panel(&panel, 36, 3.0, 12).unwrap();
        assert!(processed.flags.iter().any(|f| f.kind == FlagKind::DegenerateWindow));
    }

    #[test]
    fn preprocess_preserves_names_and_dates() {
        let mut panel = ar1_panel(0.3, 400, 9);
        let second = ar1_panel(0.6, 400, 10);
        panel.names.push("y".to_string());
        panel.columns.push(second.columns[0].clone());
        let processed = preprocess_panel(&panel, 36, 3.0, 24).unwrap();
        assert_eq!(processed.names, vec!["x", "y"]);
        assert_eq!(processed.dates, panel.dates);
        assert_eq!(processed.provenance, Provenance { window: 36, clip_bound: 3.0, min_window: 24 });
    }

    #[test]
    fn no_look_ahead_truncation_reproduces_prefix() {
        let panel = ar1_panel(0.8, 600, 11);
        let full = preprocess_panel(&panel, 36, 3.0, 24).unwrap();
        let truncated = preprocess_panel(&panel.truncated(400), 36, 3.0, 24).unwrap();
        for t in 0..400 {
            match (full.columns[0].get(t), truncated.columns[0].get(t)) {
                (Some(a), Some(b)) => assert_eq!(a.to_bits(), b.to_bits(), "row {t}"),
                (a, b) => assert_eq!(a.is_some(), b.is_some(), "mask mismatch at {t}"),
            }
        }
    }

    #[test]
    fn supervised_alignment_shifts_target() {
        let panel = ar1_panel(0.2, 300, 12);
        let processed = preprocess_panel(&panel, 36, 3.0, 24).unwrap();
        let sup = aligned_supervised(&processed, "x").unwrap();
        let (start, end) = processed.aligned_range().unwrap();
        assert_eq!(sup.x.nrows(), end - start - 1);
        assert_eq!(sup.x[(0, 0)], processed.columns[0].get(start).unwrap());
        assert_eq!(sup.y[0], processed.columns[0].get(start + 1).unwrap());
    }

    #[test]
    fn processed_csv_roundtrip() {
        let panel = ar1_panel(0.4, 120, 13);
        let processed = preprocess_panel(&panel, 36, 3.0, 12).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_processed_csv(&processed, &path).unwrap();
        let back = read_processed_csv::<f64>(&path).unwrap();
        assert_eq!(back.names, processed.names);
        assert_eq!(back.dates, processed.dates);
        for t in 0..processed.n_rows() {
            match (processed.columns[0].get(t), back.columns[0].get(t)) {
                (Some(a), Some(b)) => assert_eq!(a.to_bits(), b.to_bits()),
                (a, b) => assert_eq!(a.is_some(), b.is_some()),
            }
        }
    }

    #[test]
    fn preprocess_handles_leading_gap_column() {
        // A column that starts later (leading masked block) keeps its own
        // maximal history; alignment happens only at the supervised step.
        let full = ar1_panel(0.5, 400, 21);
        let mut gapped = ar1_panel(0.6, 400, 22);
        for t in 0..50 {
            gapped.columns[0].values[t] = f64::NAN;
            gapped.columns[0].defined[t] = false;
        }
        let panel = PanelData {
            dates: full.dates.clone(),
            names: vec!["full".into(), "late".into()],
            columns: vec![full.columns[0].clone(), gapped.columns[0].clone()],
        };
        let processed = preprocess_panel(&panel, 36, 3.0, 24).unwrap();
        let first_full = (0..400).find(|&i| processed.columns[0].is_defined(i)).unwrap();
        let first_late = (0..400).find(|&i| processed.columns[1].is_defined(i)).unwrap();
        assert_eq!(first_late, first_full + 50, "warm-up shifts by the gap");
        let (start, _) = processed.aligned_range().unwrap();
        assert_eq!(start, first_late);
    }

    #[test]
    fn load_trims_whitespace() {
        let f = write_csv("date , retx
 1930-01 , 0.5 
1930-02,  -1.25
");
        let panel = load_predictor_csv::<f64>(f.path(), &["retx"]).unwrap();
        assert_eq!(panel.column("retx").unwrap().get(0), Some(0.5));
        assert_eq!(panel.column("retx").unwrap().get(1), Some(-1.25));
    }

    #[test]
    fn date_parsing() {
        assert_eq!("1990-01".parse::<YearMonth>().unwrap(), YearMonth::new(1990, 1).unwrap());
        assert_eq!("1990-01-01".parse::<YearMonth>().unwrap(), YearMonth::new(1990, 1).unwrap());
        assert!("1990-13".parse::<YearMonth>().is_err());
        assert!("1990".parse::<YearMonth>().is_err());
        assert_eq!(YearMonth::new(2024, 12).unwrap().to_string(), "2024-12");
    }
}
