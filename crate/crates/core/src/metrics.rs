//! Recall at position (and heading) thresholds.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floorplan::{angular_distance, Pose};

/// Position thresholds reported, in meters.
pub const POSITION_THRESHOLDS_M: [f64; 3] = [0.1, 0.5, 1.0];
/// Heading threshold of the joint metric.
pub const HEADING_THRESHOLD_RAD: f64 = std::f64::consts::PI / 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub predicted: Pose,
    pub truth: Pose,
    pub position_error_m: f64,
    /// In `[0, π]`.
    pub angular_error_rad: f64,
}

impl EvalRecord {
    pub fn new(predicted: Pose, truth: Pose) -> Self {
        Self {
            predicted,
            truth,
            position_error_m: predicted.distance_to(&truth),
            angular_error_rad: angular_distance(predicted.theta, truth.theta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall_0_1m: f64,
    pub recall_0_5m: f64,
    pub recall_1m: f64,
    pub recall_1m_30deg: f64,
    pub n: usize,
}

/// Recalls with strict-less-than thresholds.
pub fn evaluate(records: &[EvalRecord]) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::EmptyDomain("no records to evaluate".into()));
    }
    let n = records.len();
    let frac = |pred: &dyn Fn(&EvalRecord) -> bool| records.iter().filter(|r| pred(r)).count() as f64 / n as f64;
    let [t0, t1, t2] = POSITION_THRESHOLDS_M;
    Ok(EvalReport {
        recall_0_1m: frac(&|r| r.position_error_m < t0),
        recall_0_5m: frac(&|r| r.position_error_m < t1),
        recall_1m: frac(&|r| r.position_error_m < t2),
        recall_1m_30deg: frac(&|r| r.position_error_m < t2 && r.angular_error_rad < HEADING_THRESHOLD_RAD),
        n,
    })
}

impl EvalReport {
    /// `threshold,recall,n` rows, one per metric.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,recall,n\n");
        for (name, v) in [
            ("0.1m", self.recall_0_1m),
            ("0.5m", self.recall_0_5m),
            ("1m", self.recall_1m),
            ("1m_30deg", self.recall_1m_30deg),
        ] {
            let _ = writeln!(s, "{name},{v:.6},{}", self.n);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
