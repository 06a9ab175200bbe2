use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::audit::{AuditReport, RocPoint};
use crate::error::{DrcError, Result};
use crate::gridio::{write_atomic, write_grid, write_pgm};
use crate::harness::pipeline::{Prepared, SampleOutcome};

pub const REPORT_FILE: &str = "report.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const ROC_FILE: &str = "roc.csv";

pub fn report_json(report: &AuditReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// One row per sample and task, baselines included.
pub fn scores_csv(report: &AuditReport) -> String {
    let mut out = String::from("sample_id,label,task,score,predicted\n");
    let order: Vec<&str> = report
        .tasks
        .iter()
        .chain(&report.baselines)
        .map(|t| t.task.as_str())
        .collect();
    for s in &report.per_sample {
        for task in &order {
            if let (Some(score), Some(pred)) = (s.scores.get(*task), s.predicted.get(*task)) {
                let _ = writeln!(
                    out,
                    "{},{},{task},{score},{}",
                    s.sample_id,
                    s.label.as_str(),
                    pred.as_str()
                );
            }
        }
    }
    out
}

pub fn roc_csv(roc: &[RocPoint]) -> String {
    let mut out = String::from("fpr,tpr\n");
    for p in roc {
        let _ = writeln!(out, "{},{}", p.fpr, p.tpr);
    }
    out
}

/// Writes `report.json`, `scores.csv`, `roc.csv` (primary task) and
/// `roc_<task>.csv` for every task and baseline.
pub fn emit_report(report: &AuditReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| DrcError::io(dir, e))?;
    write_atomic(&dir.join(REPORT_FILE), report_json(report).as_bytes())?;
    write_atomic(&dir.join(SCORES_FILE), scores_csv(report).as_bytes())?;
    write_atomic(&dir.join(ROC_FILE), roc_csv(&report.roc).as_bytes())?;
    for t in report.tasks.iter().chain(&report.baselines) {
        write_atomic(
            &dir.join(format!("roc_{}.csv", t.task)),
            roc_csv(&t.roc).as_bytes(),
        )?;
    }
    Ok(())
}

pub fn read_report(dir: &Path) -> Result<AuditReport> {
    let path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| DrcError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| DrcError::Format(format!("{}: {e}", path.display())))
}

/// PGM previews under `images/` and exact restorations under
/// `restored/<id>.<task>.drcgrid`, the stems an external encoder should
/// use for its `.emb` sidecars.
pub fn emit_images(prep: &Prepared, outcomes: &[SampleOutcome], dir: &Path) -> Result<()> {
    let images = dir.join("images");
    let restored = dir.join("restored");
    for d in [&images, &restored] {
        fs::create_dir_all(d).map_err(|e| DrcError::io(d, e))?;
    }
    let ids = prep.task_ids();
    for (s, o) in prep.samples.iter().zip(outcomes) {
        write_pgm(&images.join(format!("{}.pgm", s.id)), &s.image)?;
        let mask = o.mask.to_grid().map(|v| 2.0 * v - 1.0)?;
        write_pgm(&images.join(format!("{}.mask.pgm", s.id)), &mask)?;
        write_grid(&restored.join(format!("{}.drcgrid", s.id)), &s.image)?;
        for (k, id) in ids.iter().enumerate() {
            write_pgm(
                &images.join(format!("{}.{id}.degraded.pgm", s.id)),
                &o.degraded[k],
            )?;
            write_pgm(
                &images.join(format!("{}.{id}.restored.pgm", s.id)),
                &o.restored[k],
            )?;
            write_grid(
                &restored.join(format!("{}.{id}.drcgrid", s.id)),
                &o.restored[k],
            )?;
        }
    }
    Ok(())
}
