//! Run artifacts: atomic file writing, the JSON run report, and the
//! benchmark table.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::accuracy::OrderSelection;
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::numerical::Scheme;

/// Write through a temp file in the same directory plus rename, so readers
/// never observe a partially written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let stem = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    let tmp = dir.join(format!(".{stem}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Reference-solver portion of the run report.
#[derive(Debug, Clone, Serialize)]
pub struct NumericalSummary {
    pub scheme: Scheme,
    pub dz_m: f64,
    pub wall_time_s: f64,
    pub final_total_power_dbm: f64,
}

/// Perturbative portion of the run report.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbativeSummary {
    pub quadrature_step_m: f64,
    pub selection: OrderSelection,
    /// max_{ch,z} |Γ⁽ᵏ⁾| for k = 1…selected order.
    pub per_order_max_gamma: Vec<f64>,
    pub wall_time_s: f64,
    pub final_total_power_dbm: f64,
}

/// Cross-solver error at the span end (present when both solvers ran).
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSummary {
    pub z_m: f64,
    pub max_abs_error_db: f64,
    pub rms_error_db: f64,
}

/// The JSON report written next to the CSV artifacts. Embeds the fully
/// resolved config so the run can be reproduced from the report alone.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub channel_count: usize,
    pub total_launch_power_dbm: f64,
    /// Seconds spent building the pair-gain matrix (reported separately
    /// from solver wall times).
    pub setup_time_s: f64,
    pub numerical: Option<NumericalSummary>,
    pub perturbative: Option<PerturbativeSummary>,
    pub comparison: Option<ComparisonSummary>,
    /// File names written into the output directory.
    pub artifacts: Vec<String>,
}

/// One bandwidth-sweep measurement.
#[derive(Debug, Clone, Serialize)]
pub struct BenchResult {
    pub bandwidth_thz: f64,
    pub channel_count: usize,
    /// "numerical" or "perturbative".
    pub solver: String,
    /// Max |error| vs the 0.001 dB-converged reference at the span end.
    pub max_error_db: f64,
    /// Median-of-5 wall time around the solve call only.
    pub wall_time_s: f64,
    /// Tuned solver settings, human-readable.
    pub settings: String,
}

/// A sweep point that failed; the sweep records it and continues.
#[derive(Debug, Clone, Serialize)]
pub struct SweepFailure {
    pub bandwidth_thz: f64,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub config: ScenarioConfig,
    pub results: Vec<BenchResult>,
    pub failures: Vec<SweepFailure>,
}

/// `bandwidth_THz,channel_count,solver,max_error_dB,wall_time_s,settings`
pub fn write_bench_csv(path: &Path, rows: &[BenchResult]) -> Result<()> {
    let mut buf = String::from("bandwidth_THz,channel_count,solver,max_error_dB,wall_time_s,settings\n");
    for r in rows {
        buf.push_str(&format!(
            "{},{},{},{},{},\"{}\"\n",
            r.bandwidth_thz, r.channel_count, r.solver, r.max_error_db, r.wall_time_s, r.settings
        ));
    }
    write_atomic(path, buf.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        let leftovers: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty(), "{leftovers:?}");
    }

    #[test]
    fn bench_csv_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_bench_csv(
            &path,
            &[BenchResult {
                bandwidth_thz: 2.5,
                channel_count: 34,
                solver: "numerical".into(),
                max_error_db: 0.03,
                wall_time_s: 0.5,
                settings: "rk4-log dz=250 m".into(),
            }],
        )
        .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "bandwidth_THz,channel_count,solver,max_error_dB,wall_time_s,settings"
        );
        assert_eq!(lines.next().unwrap(), "2.5,34,numerical,0.03,0.5,\"rk4-log dz=250 m\"");
    }
}
