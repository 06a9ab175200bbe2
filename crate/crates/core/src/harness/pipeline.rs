use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use crate::audit::{
    aggregate, calibrate_threshold, compute_auc, evaluate_scores, naive_loss_score, predict,
    AggregateReport, Aggregated, AuditReport, Confusion, Label, SampleRecord, ScoreRecord, Split,
    TaskReport,
};
use crate::degrade::{
    compose_degraded, degrade_full_stream, invert_mask, saliency_map, top_p_mask, Mask,
};
use crate::denoiser::{Denoiser, EmpiricalDenoiser, FileDenoiser, MixtureDenoiser};
use crate::error::{DrcError, Result};
use crate::exec::Execution;
use crate::gridio::read_grid;
use crate::harness::config::{AuditConfig, DenoiserChoice, MaskSource};
use crate::harness::synth::{generator_mixture, synth_dataset};
use crate::numerics::{Grid, SeededRng};
use crate::restore::{dump_trajectory, restore, restore_trajectory};
use crate::schedule::NoiseSchedule;

/// Task id of the loss-threshold baseline.
pub const NAIVE_LOSS: &str = "naive_loss";

const SPLIT_STREAM: u64 = 1 << 42;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: Label,
    pub split: Split,
    /// Global index: members first, then non-members. Also the RNG stream.
    pub index: usize,
    pub image: Grid,
}

/// Everything a run needs besides the per-sample work: the dataset, the
/// audited denoiser and the per-sample masks inputs. Cheap to reconfigure
/// for sweeps.
#[derive(Clone)]
pub struct Prepared {
    pub config: AuditConfig,
    pub schedule: NoiseSchedule,
    pub samples: Arc<Vec<Sample>>,
    pub denoiser: Arc<dyn Denoiser>,
    saliency: Arc<Vec<Grid>>,
    file_masks: Option<Arc<Vec<Mask>>>,
}

/// What one sample produced, in task order.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutcome {
    pub scores: BTreeMap<String, f64>,
    pub mask: Mask,
    pub degraded: Vec<Grid>,
    pub restored: Vec<Grid>,
    /// Naive-loss score per candidate timestep.
    pub naive: Vec<(usize, f64)>,
}

pub fn sample_id(label: Label, k: usize) -> String {
    match label {
        Label::Member => format!("m{k:04}"),
        Label::Nonmember => format!("n{k:04}"),
    }
}

/// Stratified split: per class, a seeded shuffle puts the first
/// `round(fraction * n)` (kept within `1..n`) into calibration.
fn calibration_flags(n: usize, fraction: f64, seed: u64, class: u64) -> Vec<bool> {
    let n_cal = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SeededRng::new(seed, SPLIT_STREAM + class);
    for i in (1..n).rev() {
        order.swap(i, rng.below(i + 1));
    }
    let mut flags = vec![false; n];
    for &i in &order[..n_cal] {
        flags[i] = true;
    }
    flags
}

pub fn prepare(cfg: &AuditConfig) -> Result<Prepared> {
    cfg.validate()?;
    let schedule = cfg.schedule.build()?;
    let d = &cfg.dataset;
    let data = synth_dataset(d)?;

    let cal_m = calibration_flags(d.n_members, cfg.calibration_fraction, d.seed, 0);
    let cal_n = calibration_flags(d.n_nonmembers, cfg.calibration_fraction, d.seed, 1);
    let split = |cal: bool| {
        if cal {
            Split::Calibration
        } else {
            Split::Evaluation
        }
    };
    let mut samples = Vec::with_capacity(d.n_members + d.n_nonmembers);
    for (k, image) in data.members.iter().enumerate() {
        samples.push(Sample {
            id: sample_id(Label::Member, k),
            label: Label::Member,
            split: split(cal_m[k]),
            index: k,
            image: image.clone(),
        });
    }
    for (k, image) in data.nonmembers.into_iter().enumerate() {
        samples.push(Sample {
            id: sample_id(Label::Nonmember, k),
            label: Label::Nonmember,
            split: split(cal_n[k]),
            index: d.n_members + k,
            image,
        });
    }

    let denoiser: Arc<dyn Denoiser> = match &cfg.denoiser {
        DenoiserChoice::Empirical => {
            Arc::new(EmpiricalDenoiser::new(data.members, schedule.clone())?)
        }
        DenoiserChoice::Mixture => Arc::new(MixtureDenoiser::new(
            generator_mixture(d)?,
            schedule.clone(),
        )),
        DenoiserChoice::File(dir) => Arc::new(
            FileDenoiser::new(dir, schedule.id())?
                .with_timeout(Duration::from_secs_f64(cfg.denoiser_timeout_secs)),
        ),
    };

    let saliency = Arc::new(samples.iter().map(|s| saliency_map(&s.image)).collect());
    let file_masks = match &cfg.mask.source {
        MaskSource::Saliency => None,
        MaskSource::File(dir) => Some(Arc::new(load_masks(dir, &samples)?)),
    };
    Ok(Prepared {
        config: cfg.clone(),
        schedule,
        samples: Arc::new(samples),
        denoiser,
        saliency,
        file_masks,
    })
}

fn load_masks(dir: &std::path::Path, samples: &[Sample]) -> Result<Vec<Mask>> {
    samples
        .iter()
        .map(|s| {
            let path: PathBuf = dir.join(format!("{}.drcgrid", s.id));
            if !path.is_file() {
                return Err(DrcError::Config(format!(
                    "mask file {} does not exist",
                    path.display()
                )));
            }
            let m = Mask::from_grid(&read_grid(&path)?)
                .map_err(|e| DrcError::Config(format!("{}: {e}", path.display())))?;
            if (m.height(), m.width()) != (s.image.height(), s.image.width()) {
                return Err(DrcError::Config(format!(
                    "mask {} does not match the image size",
                    path.display()
                )));
            }
            Ok(m)
        })
        .collect()
}

impl std::fmt::Debug for Prepared {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prepared")
            .field("config", &self.config)
            .field("schedule", &self.schedule.id())
            .field("samples", &self.samples.len())
            .finish_non_exhaustive()
    }
}

impl Prepared {
    /// Same dataset, schedule and denoiser under a changed config, e.g. a
    /// different mask ratio or stride.
    pub fn reconfigure(&self, cfg: AuditConfig) -> Result<Prepared> {
        cfg.validate()?;
        if cfg.dataset != self.config.dataset
            || cfg.denoiser != self.config.denoiser
            || cfg.calibration_fraction != self.config.calibration_fraction
            || cfg.schedule.build()? != self.schedule
        {
            return Err(DrcError::Config(
                "reconfigure may not change the dataset, schedule, denoiser or split".into(),
            ));
        }
        let file_masks = match (&cfg.mask.source, &self.config.mask.source) {
            (MaskSource::Saliency, _) => None,
            (a, b) if a == b => self.file_masks.clone(),
            (MaskSource::File(dir), _) => Some(Arc::new(load_masks(dir, &self.samples)?)),
        };
        Ok(Prepared {
            config: cfg,
            file_masks,
            ..self.clone()
        })
    }

    pub fn task_ids(&self) -> Vec<String> {
        self.config.task_ids()
    }

    pub fn mask(&self, i: usize) -> Result<Mask> {
        let m = match &self.file_masks {
            Some(masks) => masks[i].clone(),
            None => top_p_mask(&self.saliency[i], self.config.mask.ratio)?,
        };
        Ok(if self.config.mask.inverted {
            invert_mask(&m)
        } else {
            m
        })
    }

    fn restore_stream(&self, task: usize, sample: usize) -> u64 {
        ((task as u64) << 32) | self.samples[sample].index as u64
    }
}

/// Degrade, restore and compare one sample under one task.
fn run_task(
    prep: &Prepared,
    i: usize,
    task: usize,
    task_id: &str,
    mask: &Mask,
) -> Result<(f64, Grid, Grid)> {
    let cfg = &prep.config;
    let s = &prep.samples[i];
    let spec = &cfg.tasks[task];
    let x_lq =
        degrade_full_stream(&s.image, spec, s.index as u64).map_err(|e| e.at(&s.id, "degrade"))?;
    let x_d = compose_degraded(&s.image, &x_lq, mask).map_err(|e| e.at(&s.id, "degrade"))?;

    let rc = cfg
        .restore_config(&prep.schedule)
        .with_stream(prep.restore_stream(task, i));
    let den = prep.denoiser.as_ref();
    let restored = match (&cfg.output_dir, cfg.restore.record_trajectory) {
        (Some(out), true) => {
            let r = restore_trajectory(&x_d, &s.image, mask, den, &rc)
                .map_err(|e| e.at(&s.id, "restore"))?;
            let dir = out.join("trajectories").join(format!("{}.{task_id}", s.id));
            dump_trajectory(&r.trajectory, &dir).map_err(|e| e.at(&s.id, "restore"))?;
            r.restored
        }
        _ => restore(&x_d, &s.image, mask, den, &rc).map_err(|e| e.at(&s.id, "restore"))?,
    };
    let score = cfg
        .scorer
        .score(&s.image, &restored, &s.id, &format!("{}.{task_id}", s.id))
        .map_err(|e| e.at(&s.id, "compare"))?;
    Ok((score, x_d, restored))
}

/// Score of sample `i` under task `task`, computed in isolation.
pub fn run_single(prep: &Prepared, i: usize, task: usize) -> Result<f64> {
    let mask = prep
        .mask(i)
        .map_err(|e| e.at(&prep.samples[i].id, "mask"))?;
    let id = &prep.task_ids()[task];
    run_task(prep, i, task, id, &mask).map(|r| r.0)
}

fn run_sample(prep: &Prepared, i: usize, task_ids: &[String]) -> Result<SampleOutcome> {
    let s = &prep.samples[i];
    let mask = prep.mask(i).map_err(|e| e.at(&s.id, "mask"))?;
    let mut out = SampleOutcome {
        scores: BTreeMap::new(),
        mask,
        degraded: Vec::with_capacity(task_ids.len()),
        restored: Vec::with_capacity(task_ids.len()),
        naive: Vec::new(),
    };
    for (task, id) in task_ids.iter().enumerate() {
        let (score, x_d, restored) = run_task(prep, i, task, id, &out.mask)?;
        out.scores.insert(id.clone(), score);
        out.degraded.push(x_d);
        out.restored.push(restored);
    }
    let nl = &prep.config.naive_loss;
    if nl.enabled {
        for t in nl.candidates(prep.schedule.steps()) {
            let v = naive_loss_score(
                prep.denoiser.as_ref(),
                &s.image,
                t,
                &prep.schedule,
                nl.seed,
                s.index as u64,
            )
            .map_err(|e| e.at(&s.id, "naive_loss"))?;
            out.naive.push((t, v));
        }
    }
    Ok(out)
}

/// Runs every sample through every task, in sample order.
pub fn score_samples(prep: &Prepared, exec: Execution) -> Result<Vec<SampleOutcome>> {
    let ids = prep.task_ids();
    exec.map_indexed(prep.samples.len(), |i| run_sample(prep, i, &ids))
}

struct Columns {
    cal: Vec<usize>,
    eval: Vec<usize>,
    labels: Vec<Label>,
}

impl Columns {
    fn pick<T: Copy>(idx: &[usize], v: &[T]) -> Vec<T> {
        idx.iter().map(|&i| v[i]).collect()
    }

    fn evaluate(&self, task: &str, scores: &[f64]) -> Result<TaskReport> {
        let cs = Self::pick(&self.cal, scores);
        let cl = Self::pick(&self.cal, &self.labels);
        let es = Self::pick(&self.eval, scores);
        let el = Self::pick(&self.eval, &self.labels);
        evaluate_scores(task, (&cs, &cl), (&es, &el))
    }
}

/// Calibrates on the calibration split and reports the evaluation split.
pub fn evaluate(prep: &Prepared, outcomes: &[SampleOutcome]) -> Result<AuditReport> {
    let samples = &prep.samples;
    let cols = Columns {
        cal: (0..samples.len())
            .filter(|&i| samples[i].split == Split::Calibration)
            .collect(),
        eval: (0..samples.len())
            .filter(|&i| samples[i].split == Split::Evaluation)
            .collect(),
        labels: samples.iter().map(|s| s.label).collect(),
    };
    let ids = prep.task_ids();
    let column = |id: &str| -> Vec<f64> { outcomes.iter().map(|o| o.scores[id]).collect() };

    let tasks: Vec<TaskReport> = ids
        .iter()
        .map(|id| cols.evaluate(id, &column(id)))
        .collect::<Result<_>>()?;
    let thresholds: BTreeMap<String, f64> = tasks
        .iter()
        .map(|t| (t.task.clone(), t.threshold))
        .collect();

    let records: Vec<ScoreRecord> = samples
        .iter()
        .zip(outcomes)
        .map(|(s, o)| ScoreRecord {
            sample_id: s.id.clone(),
            label: s.label,
            scores: o.scores.clone(),
        })
        .collect();
    let mut aggregation = BTreeMap::new();
    for strategy in &prep.config.aggregation {
        let name = strategy.name();
        let report = match aggregate(&records, &ids, *strategy, &thresholds)? {
            Aggregated::Scores(scores) => {
                let r = cols.evaluate(&name, &scores)?;
                AggregateReport {
                    strategy: name.clone(),
                    threshold: Some(r.threshold),
                    acc: r.acc,
                    precision: r.precision,
                    recall: r.recall,
                    precision_undefined: r.precision_undefined,
                    auc: Some(r.auc),
                    tpr_at_fpr: Some(r.tpr_at_fpr),
                    predicted_positive: r.confusion.predicted_positive(),
                    confusion: r.confusion,
                }
            }
            Aggregated::Decisions(decisions) => {
                let c = Confusion::from_predictions(
                    &Columns::pick(&cols.eval, &decisions),
                    &Columns::pick(&cols.eval, &cols.labels),
                );
                let m = c.metrics();
                AggregateReport {
                    strategy: name.clone(),
                    threshold: None,
                    acc: m.acc,
                    precision: m.precision,
                    recall: m.recall,
                    precision_undefined: m.precision_undefined,
                    auc: None,
                    tpr_at_fpr: None,
                    predicted_positive: c.predicted_positive(),
                    confusion: c,
                }
            }
        };
        aggregation.insert(name, report);
    }

    let mut baselines = Vec::new();
    let mut naive_column = None;
    if let Some(first) = outcomes.first().filter(|o| !o.naive.is_empty()) {
        let cal_labels = Columns::pick(&cols.cal, &cols.labels);
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for (k, &(t, _)) in first.naive.iter().enumerate() {
            let scores: Vec<f64> = outcomes.iter().map(|o| o.naive[k].1).collect();
            let auc = compute_auc(&Columns::pick(&cols.cal, &scores), &cal_labels)?;
            // ascending t, so ties keep the smaller timestep
            if best.as_ref().is_none_or(|b| auc > b.1) {
                best = Some((t, auc, scores));
            }
        }
        let (t, _, scores) = best.expect("at least one candidate");
        let mut r = cols.evaluate(NAIVE_LOSS, &scores)?;
        r.timestep = Some(t);
        baselines.push(r);
        naive_column = Some((
            calibrate_threshold(&Columns::pick(&cols.cal, &scores), &cal_labels)?,
            scores,
        ));
    }

    let per_sample = samples
        .iter()
        .zip(outcomes)
        .enumerate()
        .map(|(i, (s, o))| {
            let mut scores = o.scores.clone();
            let mut predicted: BTreeMap<String, Label> = o
                .scores
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        Label::from_member(predict(&[*v], thresholds[k])[0]),
                    )
                })
                .collect();
            if let Some((thr, col)) = &naive_column {
                scores.insert(NAIVE_LOSS.to_string(), col[i]);
                predicted.insert(NAIVE_LOSS.to_string(), Label::from_member(col[i] >= *thr));
            }
            SampleRecord {
                sample_id: s.id.clone(),
                label: s.label,
                split: s.split,
                scores,
                predicted,
            }
        })
        .collect();

    let primary = tasks[0].clone();
    Ok(AuditReport::from_parts(
        &primary,
        tasks,
        aggregation,
        baselines,
        per_sample,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::DatasetConfig;

    fn small() -> AuditConfig {
        AuditConfig {
            dataset: DatasetConfig {
                n_members: 6,
                n_nonmembers: 6,
                height: 8,
                width: 8,
                ..DatasetConfig::default()
            },
            ..AuditConfig::default()
        }
    }

    #[test]
    fn splits_are_stratified_and_disjoint() {
        let prep = prepare(&small()).unwrap();
        for label in [Label::Member, Label::Nonmember] {
            let cal = prep
                .samples
                .iter()
                .filter(|s| s.label == label && s.split == Split::Calibration)
                .count();
            assert_eq!(cal, 3);
        }
        let flags = calibration_flags(2, 0.01, 0, 0);
        assert_eq!(flags.iter().filter(|f| **f).count(), 1);
    }

    #[test]
    fn isolated_rerun_matches() {
        let prep = prepare(&small()).unwrap();
        let out = score_samples(&prep, Execution::Sequential).unwrap();
        for i in [0, 7] {
            assert_eq!(run_single(&prep, i, 0).unwrap(), out[i].scores["noise"]);
        }
    }

    #[test]
    fn stage_errors_name_the_sample() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.denoiser = DenoiserChoice::File(dir.path().into());
        cfg.denoiser_timeout_secs = 0.05;
        cfg.naive_loss.enabled = false;
        let prep = prepare(&cfg).unwrap();
        let err = score_samples(&prep, Execution::Sequential).unwrap_err();
        match err {
            DrcError::Pipeline {
                sample_id, stage, ..
            } => {
                assert_eq!(sample_id, "m0000");
                assert_eq!(stage, "restore");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn reconfigure_guards_shared_state() {
        let prep = prepare(&small()).unwrap();
        let mut cfg = small();
        cfg.mask.ratio = 0.5;
        assert!(prep.reconfigure(cfg.clone()).is_ok());
        cfg.dataset.seed = 9;
        assert!(prep.reconfigure(cfg).unwrap_err().is_config());
    }
}
