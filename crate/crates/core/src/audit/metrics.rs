//! Threshold calibration and the classification / ranking metrics.
//!
//! Classification rule everywhere: predict member iff `score >= threshold`.

use serde::{Deserialize, Serialize};

use crate::audit::Label;
use crate::error::{DrcError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(predicted_member: &[bool], labels: &[Label]) -> Self {
        let mut c = Confusion::default();
        for (&p, l) in predicted_member.iter().zip(labels) {
            match (p, l.is_member()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn predicted_positive(&self) -> usize {
        self.tp + self.fp
    }

    pub fn metrics(&self) -> ClassMetrics {
        let n = self.total();
        let acc = if n == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / n as f64
        };
        let pp = self.predicted_positive();
        let precision_undefined = pp == 0;
        let precision = if precision_undefined {
            0.0
        } else {
            self.tp as f64 / pp as f64
        };
        let positives = self.tp + self.fn_;
        let recall = if positives == 0 {
            0.0
        } else {
            self.tp as f64 / positives as f64
        };
        ClassMetrics {
            acc,
            precision,
            recall,
            precision_undefined,
            confusion: *self,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    /// No sample was predicted member; `precision` is reported as 0.
    pub precision_undefined: bool,
    pub confusion: Confusion,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

fn check_inputs(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(DrcError::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(DrcError::invalid("scores contain NaN"));
    }
    let pos = labels.iter().filter(|l| l.is_member()).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(DrcError::SingleClass);
    }
    Ok((pos, neg))
}

/// Descending distinct scores with the member / nonmember counts at each.
fn grouped_desc(scores: &[f64], labels: &[Label]) -> Vec<(f64, usize, usize)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for i in idx {
        let (m, n) = if labels[i].is_member() {
            (1, 0)
        } else {
            (0, 1)
        };
        match groups.last_mut() {
            Some(g) if g.0 == scores[i] => {
                g.1 += m;
                g.2 += n;
            }
            _ => groups.push((scores[i], m, n)),
        }
    }
    groups
}

/// Accuracy-maximizing threshold over `-inf`, the midpoints between adjacent
/// distinct scores, and `+inf`. Ties go to the larger threshold.
pub fn calibrate_threshold(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (pos, _neg) = check_inputs(scores, labels)?;
    let groups = grouped_desc(scores, labels);
    // walk thresholds from +inf downward; correct = tp + tn
    let mut tp = 0usize;
    let mut fp = 0usize;
    let neg_total = labels.len() - pos;
    let correct = |tp: usize, fp: usize| tp + (neg_total - fp);
    let mut best_thr = f64::INFINITY;
    let mut best = correct(0, 0);
    for (i, &(s, m, n)) in groups.iter().enumerate() {
        tp += m;
        fp += n;
        let thr = match groups.get(i + 1) {
            Some(&(lower, _, _)) => midpoint(lower, s),
            None => f64::NEG_INFINITY,
        };
        // strictly better only: larger thresholds were visited first
        if correct(tp, fp) > best {
            best = correct(tp, fp);
            best_thr = thr;
        }
    }
    Ok(best_thr)
}

/// A threshold strictly above `lo` and at most `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

pub fn predict(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= threshold).collect()
}

pub fn compute_metrics(scores: &[f64], labels: &[Label], threshold: f64) -> ClassMetrics {
    Confusion::from_predictions(&predict(scores, threshold), labels).metrics()
}

/// Mann-Whitney AUC from average ranks, ties counted half.
pub fn compute_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        let members = idx[i..=j]
            .iter()
            .filter(|&&k| labels[k].is_member())
            .count();
        rank_sum += avg * members as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// ROC operating points from a descending threshold sweep, `(0,0)` to `(1,1)`.
pub fn roc_points(scores: &[f64], labels: &[Label]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut out = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (_, m, n) in grouped_desc(scores, labels) {
        tp += m;
        fp += n;
        out.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(out)
}

/// Trapezoidal area under a ROC polyline.
pub fn trapezoid_auc(roc: &[RocPoint]) -> f64 {
    roc.windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Best TPR among thresholds whose empirical FPR does not exceed `fpr_cap`.
/// No interpolation between operating points.
pub fn tpr_at_fpr(scores: &[f64], labels: &[Label], fpr_cap: f64) -> Result<f64> {
    if !(fpr_cap > 0.0 && fpr_cap < 1.0) {
        return Err(DrcError::invalid(format!(
            "fpr cap {fpr_cap} outside (0, 1)"
        )));
    }
    let (pos, neg) = check_inputs(scores, labels)?;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = 0.0;
    for (_, m, n) in grouped_desc(scores, labels) {
        tp += m;
        fp += n;
        if fp as f64 / neg as f64 <= fpr_cap {
            best = tp as f64 / pos as f64;
        } else {
            break;
        }
    }
    Ok(best)
}
