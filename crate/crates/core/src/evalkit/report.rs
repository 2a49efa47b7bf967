use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Provenance attached to every report row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMetadata {
    pub world_hash: String,
    pub prior_hash: String,
    pub train_hash: String,
    pub loss_hash: String,
    pub edge_enabled: bool,
    /// Training/evaluation failure propagated into the row; metrics are NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub variant: String,
    pub seed: u64,
    pub concept_align: f64,
    pub comp_align: f64,
    pub mse_norm: f64,
    pub interp_smoothness: f64,
    pub metadata: ReportMetadata,
}

/// Hex digest of a config's canonical JSON serialization.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("configs serialize");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Non-finite values serialize as explicit tokens, never silently dropped.
fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}

fn metric_value(v: f64) -> serde_json::Value {
    match serde_json::Number::from_f64(v) {
        Some(n) => serde_json::Value::Number(n),
        None => serde_json::Value::String(fmt_metric(v)),
    }
}

pub const CSV_HEADER: &str = "variant,seed,concept_align,comp_align,mse_norm,interp_smoothness";

fn json_mirror(reports: &[MetricsReport]) -> serde_json::Value {
    let rows: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "variant": r.variant,
                "seed": r.seed,
                "concept_align": metric_value(r.concept_align),
                "comp_align": metric_value(r.comp_align),
                "mse_norm": metric_value(r.mse_norm),
                "interp_smoothness": metric_value(r.interp_smoothness),
                "metadata": serde_json::to_value(&r.metadata).expect("metadata serializes"),
            })
        })
        .collect();
    serde_json::json!({ "reports": rows })
}

/// Writes `<base>.csv` and `<base>.json`; returns both paths.
pub fn report_emit(reports: &[MetricsReport], base: &Path) -> Result<(PathBuf, PathBuf)> {
    if reports.is_empty() {
        return Err(Error::Config("no reports to emit".into()));
    }
    let csv_path = base.with_extension("csv");
    let json_path = base.with_extension("json");
    if let Some(dir) = base.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        }
    }

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for r in reports {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.variant,
            r.seed,
            fmt_metric(r.concept_align),
            fmt_metric(r.comp_align),
            fmt_metric(r.mse_norm),
            fmt_metric(r.interp_smoothness)
        ));
    }
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(csv_path.display().to_string(), e))?;

    let json = serde_json::to_string_pretty(&json_mirror(reports))?;
    std::fs::write(&json_path, json)
        .map_err(|e| Error::io(json_path.display().to_string(), e))?;
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report(v: f64) -> MetricsReport {
        MetricsReport {
            variant: "projection_only".into(),
            seed: 3,
            concept_align: v,
            comp_align: 0.5,
            mse_norm: 0.25,
            interp_smoothness: 0.01,
            metadata: ReportMetadata {
                world_hash: "w".into(),
                prior_hash: "p".into(),
                train_hash: "t".into(),
                loss_hash: "l".into(),
                edge_enabled: false,
                error: None,
            },
        }
    }

    #[test]
    fn one_report_gives_header_plus_row() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("report");
        let (csv_path, _) = report_emit(&[sample_report(0.9)], &base).unwrap();
        let text = std::fs::read_to_string(csv_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("projection_only,3,"));
    }

    #[test]
    fn json_round_trip_reproduces_fields() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("report");
        let report = sample_report(0.875);
        let (_, json_path) = report_emit(&[report.clone()], &base).unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(json_path).unwrap()).unwrap();
        let row = &parsed["reports"][0];
        assert_eq!(row["variant"], "projection_only");
        assert_eq!(row["seed"], 3);
        assert_eq!(row["concept_align"].as_f64().unwrap(), 0.875);
        assert_eq!(row["metadata"]["edge_enabled"], false);
        assert_eq!(row["metadata"]["world_hash"], "w");
    }

    #[test]
    fn non_finite_metrics_serialize_as_explicit_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("report");
        let mut report = sample_report(f64::NAN);
        report.mse_norm = f64::INFINITY;
        let (csv_path, json_path) = report_emit(&[report], &base).unwrap();
        let csv = std::fs::read_to_string(csv_path).unwrap();
        assert!(csv.contains("nan"), "csv: {csv}");
        assert!(csv.contains("inf"));
        let json = std::fs::read_to_string(json_path).unwrap();
        assert!(json.contains("\"nan\""), "json: {json}");
    }

    #[test]
    fn config_hash_is_stable_and_discriminating() {
        let a = config_hash(&crate::objective::LossConfig::default());
        let b = config_hash(&crate::objective::LossConfig::default());
        assert_eq!(a, b);
        let c = config_hash(&crate::objective::LossConfig {
            lambda: 0.5,
            ..Default::default()
        });
        assert_ne!(a, c);
    }
}
