use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::audit::metrics::{
    calibrate_threshold, compute_auc, compute_metrics, roc_points, tpr_at_fpr, Confusion, RocPoint,
};
use crate::audit::{sentinel, Label, Split};
use crate::error::Result;

/// FPR caps reported under `tpr_at_fpr`, with their JSON keys.
pub const FPR_CAPS: [(f64, &str); 2] = [(0.01, "0.01"), (0.001, "0.001")];

/// Metrics for one scored task: threshold calibrated on the calibration
/// split, everything else measured on the evaluation split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    #[serde(with = "sentinel")]
    pub threshold: f64,
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub precision_undefined: bool,
    pub auc: f64,
    pub tpr_at_fpr: BTreeMap<String, f64>,
    pub confusion: Confusion,
    pub roc: Vec<RocPoint>,
    /// Timestep chosen for loss-based baselines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestep: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub strategy: String,
    /// Absent for votes, which use the per-task thresholds.
    #[serde(with = "sentinel::option")]
    pub threshold: Option<f64>,
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub precision_undefined: bool,
    pub auc: Option<f64>,
    pub tpr_at_fpr: Option<BTreeMap<String, f64>>,
    pub confusion: Confusion,
    pub predicted_positive: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub label: Label,
    pub split: Split,
    pub scores: BTreeMap<String, f64>,
    pub predicted: BTreeMap<String, Label>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Task whose metrics are mirrored at the top level.
    pub primary_task: String,
    #[serde(with = "sentinel")]
    pub threshold: f64,
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub precision_undefined: bool,
    pub auc: f64,
    pub tpr_at_fpr: BTreeMap<String, f64>,
    pub roc: Vec<RocPoint>,
    pub tasks: Vec<TaskReport>,
    pub aggregation: BTreeMap<String, AggregateReport>,
    pub baselines: Vec<TaskReport>,
    pub n_calibration: usize,
    pub n_evaluation: usize,
    pub per_sample: Vec<SampleRecord>,
}

impl AuditReport {
    pub fn from_parts(
        primary: &TaskReport,
        tasks: Vec<TaskReport>,
        aggregation: BTreeMap<String, AggregateReport>,
        baselines: Vec<TaskReport>,
        per_sample: Vec<SampleRecord>,
    ) -> Self {
        let n_calibration = per_sample
            .iter()
            .filter(|s| s.split == Split::Calibration)
            .count();
        Self {
            primary_task: primary.task.clone(),
            threshold: primary.threshold,
            acc: primary.acc,
            precision: primary.precision,
            recall: primary.recall,
            precision_undefined: primary.precision_undefined,
            auc: primary.auc,
            tpr_at_fpr: primary.tpr_at_fpr.clone(),
            roc: primary.roc.clone(),
            tasks,
            aggregation,
            baselines,
            n_calibration,
            n_evaluation: per_sample.len() - n_calibration,
            per_sample,
        }
    }

    pub fn task(&self, name: &str) -> Option<&TaskReport> {
        self.tasks
            .iter()
            .chain(&self.baselines)
            .find(|t| t.task == name)
    }

    /// Evaluation-split scores and labels for `task`.
    pub fn evaluation_scores(&self, task: &str) -> (Vec<f64>, Vec<Label>) {
        self.per_sample
            .iter()
            .filter(|s| s.split == Split::Evaluation)
            .filter_map(|s| s.scores.get(task).map(|v| (*v, s.label)))
            .unzip()
    }
}

pub(crate) fn tpr_map(scores: &[f64], labels: &[Label]) -> Result<BTreeMap<String, f64>> {
    FPR_CAPS
        .iter()
        .map(|&(cap, key)| Ok((key.to_string(), tpr_at_fpr(scores, labels, cap)?)))
        .collect()
}

/// Calibrates on one split and reports on the other.
pub fn evaluate_scores(
    task: &str,
    calibration: (&[f64], &[Label]),
    evaluation: (&[f64], &[Label]),
) -> Result<TaskReport> {
    let threshold = calibrate_threshold(calibration.0, calibration.1)?;
    let (scores, labels) = evaluation;
    let m = compute_metrics(scores, labels, threshold);
    Ok(TaskReport {
        task: task.to_string(),
        threshold,
        acc: m.acc,
        precision: m.precision,
        recall: m.recall,
        precision_undefined: m.precision_undefined,
        auc: compute_auc(scores, labels)?,
        tpr_at_fpr: tpr_map(scores, labels)?,
        confusion: m.confusion,
        roc: roc_points(scores, labels)?,
        timestep: None,
    })
}
