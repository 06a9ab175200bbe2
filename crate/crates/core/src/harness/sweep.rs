use std::fmt::Write as _;
use std::str::FromStr;

use crate::audit::{AggregationStrategy, AuditReport};
use crate::error::{DrcError, Result};
use crate::exec::Execution;
use crate::gridio::write_atomic;
use crate::harness::config::{AuditConfig, MaskSource};
use crate::harness::emit::emit_report;
use crate::harness::pipeline::{evaluate, prepare, score_samples};

pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    MaskRatio,
    /// Vote aggregation over the configured tasks.
    AgreeN,
    Interval,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::MaskRatio => "mask_ratio",
            SweepAxis::AgreeN => "agree_n",
            SweepAxis::Interval => "interval",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = DrcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask_ratio" => Ok(SweepAxis::MaskRatio),
            "agree_n" => Ok(SweepAxis::AgreeN),
            "interval" => Ok(SweepAxis::Interval),
            other => Err(DrcError::Config(format!(
                "unknown sweep axis {other:?}; expected mask_ratio, agree_n or interval"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub report: AuditReport,
}

impl SweepPoint {
    /// `(acc, precision, recall, auc)` as listed in `sweep.csv`; vote points
    /// have no AUC.
    pub fn row(&self, axis: SweepAxis) -> (f64, f64, f64, Option<f64>) {
        let r = &self.report;
        match axis {
            SweepAxis::AgreeN => {
                let v = &r.aggregation[&AggregationStrategy::Vote {
                    agree_n: self.value as usize,
                }
                .name()];
                (v.acc, v.precision, v.recall, None)
            }
            _ => (r.acc, r.precision, r.recall, Some(r.auc)),
        }
    }
}

fn as_count(axis: SweepAxis, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(DrcError::Config(format!(
            "{} values must be positive integers, got {v}",
            axis.name()
        )))
    }
}

/// One report per value over a shared dataset and denoiser.
pub fn sweep(
    cfg: &AuditConfig,
    axis: SweepAxis,
    values: &[f64],
    exec: Execution,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(DrcError::Config("sweep needs at least one value".into()));
    }
    let base = prepare(cfg)?;
    let mut points = Vec::with_capacity(values.len());
    match axis {
        SweepAxis::AgreeN => {
            let outcomes = score_samples(&base, exec)?;
            for &v in values {
                let n = as_count(axis, v)?;
                let mut c = cfg.clone();
                c.aggregation = vec![AggregationStrategy::Vote { agree_n: n }];
                let prep = base.reconfigure(c)?;
                points.push(SweepPoint {
                    value: v,
                    report: evaluate(&prep, &outcomes)?,
                });
            }
        }
        SweepAxis::MaskRatio | SweepAxis::Interval => {
            if axis == SweepAxis::MaskRatio && matches!(cfg.mask.source, MaskSource::File(_)) {
                return Err(DrcError::Config(
                    "mask_ratio sweeps need saliency masks".into(),
                ));
            }
            for &v in values {
                let mut c = cfg.clone();
                if axis == SweepAxis::MaskRatio {
                    c.mask.ratio = v;
                } else {
                    c.schedule.interval = as_count(axis, v)?;
                }
                let prep = base.reconfigure(c)?;
                let outcomes = score_samples(&prep, exec)?;
                points.push(SweepPoint {
                    value: v,
                    report: evaluate(&prep, &outcomes)?,
                });
            }
        }
    }
    if let Some(dir) = &cfg.output_dir {
        for p in &points {
            emit_report(&p.report, &dir.join(format!("{}_{}", axis.name(), p.value)))?;
        }
        write_atomic(&dir.join(SWEEP_FILE), sweep_csv(axis, &points).as_bytes())?;
    }
    Ok(points)
}

pub fn sweep_csv(axis: SweepAxis, points: &[SweepPoint]) -> String {
    let mut out = String::from("axis,value,acc,precision,recall,auc\n");
    for p in points {
        let (acc, precision, recall, auc) = p.row(axis);
        let auc = auc.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{acc},{precision},{recall},{auc}",
            axis.name(),
            p.value
        );
    }
    out
}
