use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::metrics::Metrics;
use crate::classifier::Learner;
use crate::error::{Error, Result};
use crate::json::to_canonical_json;

pub const REPORT_SCHEMA: &str = "pudroid-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Protocol {
    #[serde(rename = "RQ1")]
    Rq1,
    #[serde(rename = "RQ2")]
    Rq2,
    #[serde(rename = "RQ3")]
    Rq3,
    #[serde(rename = "RQ4")]
    Rq4,
}

/// One condition of one protocol for one learner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub condition: String,
    pub condition_index: usize,
    pub learner: Learner,
    /// Mislabeled samples planted in the training data.
    pub contaminants: usize,
    /// Unlabeled samples flagged by the PU step.
    pub detected: usize,
    /// Flagged samples that were actually planted.
    pub detected_planted: usize,
    pub e: f64,
    pub rescale: f64,
    pub mean_g_over_pm: f64,
    pub pu_metrics: Metrics,
    pub npu_metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub protocol: Protocol,
    pub seed: u64,
    pub config: Value,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn rows_for(&self, learner: Learner) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(move |r| r.learner == learner)
    }

    pub fn row(&self, condition: &str, learner: Learner) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.condition == condition && r.learner == learner)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut value {
            map.insert("schema".into(), Value::String(REPORT_SCHEMA.into()));
        }
        to_canonical_json(&value)
    }
}

pub fn write_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    fs::write(path, report.to_json()?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::{compute_metrics, Confusion};

    fn report(rows: Vec<ReportRow>) -> ExperimentReport {
        ExperimentReport { protocol: Protocol::Rq2, seed: 7, config: serde_json::json!({"b": 1, "a": 0.1}), rows }
    }

    fn row(auc: Option<f64>) -> ReportRow {
        let m = Metrics {
            accuracy: 1.0 / 3.0,
            auc,
            f_measure: 0.0,
            detection_rate: 0.0,
            confusion: Confusion::default(),
        };
        ReportRow {
            condition: "1:1".into(),
            condition_index: 0,
            learner: Learner::Forest,
            contaminants: 1,
            detected: 0,
            detected_planted: 0,
            e: 0.5,
            rescale: 1.0,
            mean_g_over_pm: 0.9,
            pu_metrics: m,
            npu_metrics: m,
        }
    }

    #[test]
    fn identical_reports_identical_bytes() {
        let a = report(vec![row(Some(0.75))]).to_json().unwrap();
        let b = report(vec![row(Some(0.75))]).to_json().unwrap();
        assert_eq!(a, b);
        assert!(a.contains("0.333333333"));
        assert!(!a.contains("0.3333333333"));
        assert!(a.contains("\"schema\": \"pudroid-report/1\""));
        let a_pos = a.find("\"a\"").unwrap();
        let b_pos = a.find("\"b\"").unwrap();
        assert!(a_pos < b_pos);
    }

    #[test]
    fn undefined_auc_is_a_string() {
        let json = report(vec![row(None)]).to_json().unwrap();
        assert!(json.contains("\"auc\": \"undefined\""));
        let m = compute_metrics(&[true], &[true], &[0.4]).unwrap();
        assert_eq!(m.auc, None);
    }

    #[test]
    fn empty_rows() {
        let json = report(vec![]).to_json().unwrap();
        let v: Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["rows"], Value::Array(vec![]));
    }

    #[test]
    fn writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_report(&report(vec![]), &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), report(vec![]).to_json().unwrap());
    }
}
