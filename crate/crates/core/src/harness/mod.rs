//! End-to-end audits: synthetic data, the per-sample
//! saliency→mask→degrade→restore→score pipeline, calibration and report files.

pub mod config;
mod emit;
mod pipeline;
mod sweep;
mod synth;

pub use config::AuditConfig;
pub use emit::{
    emit_images, emit_report, read_report, report_json, roc_csv, scores_csv, REPORT_FILE, ROC_FILE,
    SCORES_FILE,
};
pub use pipeline::{
    evaluate, prepare, run_single, sample_id, score_samples, Prepared, Sample, SampleOutcome,
    NAIVE_LOSS,
};
pub use sweep::{sweep, sweep_csv, SweepAxis, SweepPoint, SWEEP_FILE};
pub use synth::{generator_mixture, synth_dataset, SyntheticDataset};

use crate::audit::AuditReport;
use crate::error::Result;
use crate::exec::Execution;

/// [`run_audit_with`] using `DRC_THREADS` to pick the execution mode.
pub fn run_audit(cfg: &AuditConfig) -> Result<AuditReport> {
    run_audit_with(cfg, Execution::from_env()?)
}

/// Runs the audit and, when `output_dir` is set, writes the report files
/// (and images when `save_images` is set).
pub fn run_audit_with(cfg: &AuditConfig, exec: Execution) -> Result<AuditReport> {
    let prep = prepare(cfg)?;
    let outcomes = score_samples(&prep, exec)?;
    let report = evaluate(&prep, &outcomes)?;
    if let Some(dir) = &cfg.output_dir {
        emit_report(&report, dir)?;
        if cfg.save_images {
            emit_images(&prep, &outcomes, dir)?;
        }
    }
    Ok(report)
}
