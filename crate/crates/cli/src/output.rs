//! Canonical output rendering. All floating-point values are written with
//! 17 significant digits (`{:.16e}`), which round-trips `f64` exactly, so
//! golden files are stable and the CSV and JSON encodings of one run carry
//! bit-identical numbers. Every data file starts with a `# manifest:`
//! comment naming its run digest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Result;
use llglab::sim::{CoverageReport, VoCCurve};
use serde::Serialize;

/// Round-trip-safe decimal rendering: 17 significant digits.
pub fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Per-point CSV schema shared by every curve file.
pub const CURVE_HEADER: &str = "P1,c,r2_oos,llg,lower_bound,sigma_r2_hat,conf_lower,seed";

/// Write one curve; `seed` is empty for aggregate (mean) curves.
pub fn write_curve_csv(path: &Path, digest: &str, curve: &VoCCurve<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# manifest: {digest}")?;
    writeln!(out, "{CURVE_HEADER}")?;
    let seed = curve.seed.map(|s| s.to_string()).unwrap_or_default();
    for pt in &curve.points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            pt.p1,
            fmt_g17(pt.c),
            fmt_g17(pt.r2_oos),
            fmt_g17(pt.llg),
            fmt_g17(pt.lower_bound),
            fmt_g17(pt.sigma_r2_hat),
            fmt_g17(pt.conf_lower),
            seed
        )?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CurveJson<'a> {
    manifest_digest: &'a str,
    seed: Option<u64>,
    points: &'a [llglab::sim::VoCPoint<f64>],
}

pub fn write_curve_json(path: &Path, digest: &str, curve: &VoCCurve<f64>) -> Result<()> {
    let body = CurveJson { manifest_digest: digest, seed: curve.seed, points: &curve.points };
    std::fs::write(path, serde_json::to_string_pretty(&body)?)?;
    Ok(())
}

pub fn write_coverage_csv(path: &Path, digest: &str, report: &CoverageReport<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# manifest: {digest}")?;
    writeln!(out, "t,t_oos,p,target_r2,replications,coverage_rate,mean_conf_lower,mean_lower_bound,mean_r2_star")?;
    for cell in &report.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            cell.t,
            cell.t_oos,
            cell.p,
            fmt_g17(cell.target_r2),
            cell.replications,
            fmt_g17(cell.coverage_rate),
            fmt_g17(cell.mean_conf_lower),
            fmt_g17(cell.mean_lower_bound),
            fmt_g17(cell.mean_r2_star),
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Generic JSON report wrapper stamped with the digest.
pub fn write_json_report<S: Serialize>(path: &Path, digest: &str, body: &S) -> Result<()> {
    #[derive(Serialize)]
    struct Wrapper<'a, S: Serialize> {
        manifest_digest: &'a str,
        #[serde(flatten)]
        body: &'a S,
    }
    std::fs::write(path, serde_json::to_string_pretty(&Wrapper { manifest_digest: digest, body })?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_round_trips_f64() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 123456.789e250, f64::MIN_POSITIVE, 0.3005, -0.0] {
            let s = fmt_g17(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s}");
        }
    }
}
