//! The audit configuration file: one JSON document, unknown keys rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audit::AggregationStrategy;
use crate::compare::Scorer;
use crate::degrade::{degrade_full, DegradationSpec};
use crate::error::{DrcError, Result};
use crate::numerics::Grid;
use crate::restore::RestoreConfig;
use crate::schedule::NoiseSchedule;

fn config_err(e: impl fmt::Display) -> DrcError {
    DrcError::Config(e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    GaussianMixtureImages,
    Shapes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub generator: Generator,
    /// Mixture components (gaussian-mixture-images only).
    pub components: usize,
    /// Per-pixel std around each component mean; also the kernel bandwidth
    /// of the mixture denoiser for the shapes generator.
    pub component_std: f64,
    /// Independent draws the shapes-generator mixture denoiser is fitted to.
    pub reference_size: usize,
    pub n_members: usize,
    pub n_nonmembers: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            generator: Generator::GaussianMixtureImages,
            components: 4,
            component_std: 0.15,
            reference_size: 256,
            n_members: 64,
            n_nonmembers: 64,
            height: 16,
            width: 16,
            channels: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    /// Reserved; rejected at validation.
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub steps: usize,
    /// Both absent: `1e-4 .. 0.02` rescaled by `1000 / steps`.
    pub beta_start: Option<f64>,
    pub beta_end: Option<f64>,
    /// DDIM stride used by the restoration.
    pub interval: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Linear,
            steps: 100,
            beta_start: None,
            beta_end: None,
            interval: 5,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        if self.kind == ScheduleKind::Cosine {
            return Err(DrcError::Config(
                "schedule kind \"cosine\" is reserved and not implemented".into(),
            ));
        }
        let sched = match (self.beta_start, self.beta_end) {
            (None, None) => NoiseSchedule::rescaled_linear(self.steps),
            (Some(a), Some(b)) => NoiseSchedule::linear(self.steps, a, b),
            _ => {
                return Err(DrcError::Config(
                    "beta_start and beta_end must be given together".into(),
                ))
            }
        };
        sched.map_err(config_err)
    }
}

/// `"empirical"`, `"mixture"` or `"file:<dir>"`.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DenoiserChoice {
    #[default]
    Empirical,
    Mixture,
    File(PathBuf),
}

impl TryFrom<String> for DenoiserChoice {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        match s.as_str() {
            "empirical" => Ok(DenoiserChoice::Empirical),
            "mixture" => Ok(DenoiserChoice::Mixture),
            other => match other.strip_prefix("file:") {
                Some(dir) if !dir.is_empty() => Ok(DenoiserChoice::File(dir.into())),
                _ => Err(format!(
                    "unknown denoiser {other:?}; expected empirical, mixture or file:<dir>"
                )),
            },
        }
    }
}

impl From<DenoiserChoice> for String {
    fn from(d: DenoiserChoice) -> String {
        match d {
            DenoiserChoice::Empirical => "empirical".into(),
            DenoiserChoice::Mixture => "mixture".into(),
            DenoiserChoice::File(dir) => format!("file:{}", dir.display()),
        }
    }
}

/// `"saliency"` or `"file:<dir>"`, the latter holding `<sample_id>.drcgrid`.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MaskSource {
    #[default]
    Saliency,
    File(PathBuf),
}

impl TryFrom<String> for MaskSource {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        if s == "saliency" {
            return Ok(MaskSource::Saliency);
        }
        match s.strip_prefix("file:") {
            Some(dir) if !dir.is_empty() => Ok(MaskSource::File(dir.into())),
            _ => Err(format!(
                "unknown mask source {s:?}; expected saliency or file:<dir>"
            )),
        }
    }
}

impl From<MaskSource> for String {
    fn from(m: MaskSource) -> String {
        match m {
            MaskSource::Saliency => "saliency".into(),
            MaskSource::File(dir) => format!("file:{}", dir.display()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    /// Fraction of pixels masked; ignored for file masks.
    pub ratio: f64,
    pub source: MaskSource,
    /// Mask the least salient pixels instead.
    pub inverted: bool,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            ratio: 0.2,
            source: MaskSource::Saliency,
            inverted: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestoreSettings {
    /// Defaults to the schedule horizon.
    pub start_t: Option<usize>,
    pub seed: u64,
    pub renoise_init: bool,
    /// Dump `traj_t<t>.drcgrid` per sample and task under the output dir.
    pub record_trajectory: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaiveLossConfig {
    pub enabled: bool,
    /// Candidate timesteps; defaults to 5%, 10%, 20%, 40% and 80% of T.
    pub timesteps: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for NaiveLossConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            timesteps: None,
            seed: 0,
        }
    }
}

impl NaiveLossConfig {
    pub fn candidates(&self, steps: usize) -> Vec<usize> {
        let mut ts = match &self.timesteps {
            Some(ts) => ts.clone(),
            None => [5, 10, 20, 40, 80]
                .iter()
                .map(|pct| (steps * pct / 100).max(1))
                .collect(),
        };
        ts.sort_unstable();
        ts.dedup();
        ts
    }
}

fn default_tasks() -> Vec<DegradationSpec> {
    vec![DegradationSpec::noise()]
}

fn default_aggregation() -> Vec<AggregationStrategy> {
    vec![AggregationStrategy::Mean, AggregationStrategy::Median]
}

fn default_calibration_fraction() -> f64 {
    0.5
}

fn default_timeout() -> f64 {
    30.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub denoiser: DenoiserChoice,
    #[serde(default = "default_timeout")]
    pub denoiser_timeout_secs: f64,
    #[serde(default)]
    pub mask: MaskConfig,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<DegradationSpec>,
    #[serde(default)]
    pub restore: RestoreSettings,
    #[serde(default)]
    pub scorer: Scorer,
    #[serde(default = "default_aggregation")]
    pub aggregation: Vec<AggregationStrategy>,
    #[serde(default = "default_calibration_fraction")]
    pub calibration_fraction: f64,
    #[serde(default)]
    pub naive_loss: NaiveLossConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Also write PGM previews and restored grids.
    #[serde(default)]
    pub save_images: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

impl AuditConfig {
    /// The default audit with half of each image masked.
    pub fn hard() -> Self {
        let mut cfg = Self::default();
        cfg.mask.ratio = 0.5;
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: AuditConfig = serde_json::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DrcError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Task ids: the degradation kind, suffixed `_2`, `_3`, ... on repeats.
    pub fn task_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::with_capacity(self.tasks.len());
        for spec in &self.tasks {
            let base = spec.kind_name();
            let n = self
                .tasks
                .iter()
                .take(ids.len())
                .filter(|s| s.kind_name() == base)
                .count();
            ids.push(if n == 0 {
                base.to_string()
            } else {
                format!("{base}_{}", n + 1)
            });
        }
        ids
    }

    pub fn restore_config(&self, sched: &NoiseSchedule) -> RestoreConfig {
        let mut rc = RestoreConfig::new(sched.clone(), self.schedule.interval, self.restore.seed);
        if let Some(t) = self.restore.start_t {
            rc.start_t = t;
        }
        rc.renoise_init = self.restore.renoise_init;
        rc
    }

    /// Checks everything that can be checked before data exists. Errors are
    /// [`DrcError::Config`].
    pub fn validate(&self) -> Result<()> {
        let cfail = |msg: String| Err(DrcError::Config(msg));
        let d = &self.dataset;
        if d.n_members < 2 || d.n_nonmembers < 2 {
            return cfail(format!(
                "need at least 2 members and 2 non-members, got {} and {}",
                d.n_members, d.n_nonmembers
            ));
        }
        if d.height == 0 || d.width == 0 || !(d.channels == 1 || d.channels == 3) {
            return cfail(format!(
                "invalid image shape {}x{}x{}",
                d.height, d.width, d.channels
            ));
        }
        if d.components == 0 {
            return cfail("dataset needs at least one component".into());
        }
        if !(d.component_std > 0.0 && d.component_std.is_finite()) {
            return cfail(format!(
                "component_std must be positive, got {}",
                d.component_std
            ));
        }
        if d.generator == Generator::Shapes && d.reference_size == 0 {
            return cfail("reference_size must be positive".into());
        }
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return cfail(format!(
                "calibration_fraction must lie in (0, 1), got {}",
                self.calibration_fraction
            ));
        }
        if !(self.denoiser_timeout_secs > 0.0 && self.denoiser_timeout_secs.is_finite()) {
            return cfail("denoiser_timeout_secs must be positive".into());
        }

        let sched = self.schedule.build()?;
        self.restore_config(&sched).validate().map_err(config_err)?;

        if !(0.0..=1.0).contains(&self.mask.ratio) {
            return cfail(format!(
                "mask ratio must lie in [0, 1], got {}",
                self.mask.ratio
            ));
        }
        if self.tasks.is_empty() {
            return cfail("at least one task is required".into());
        }
        let probe = Grid::zeros(d.height, d.width, d.channels).map_err(config_err)?;
        for (id, spec) in self.task_ids().iter().zip(&self.tasks) {
            degrade_full(&probe, spec).map_err(|e| DrcError::Config(format!("task {id}: {e}")))?;
        }
        for strategy in &self.aggregation {
            strategy.validate(self.tasks.len()).map_err(config_err)?;
        }
        if self.naive_loss.enabled {
            let ts = self.naive_loss.candidates(sched.steps());
            if ts.is_empty() || ts.iter().any(|&t| t == 0 || t > sched.steps()) {
                return cfail(format!(
                    "naive_loss timesteps must lie in 1..={}",
                    sched.steps()
                ));
            }
        }

        if let DenoiserChoice::File(dir) = &self.denoiser {
            require_dir(dir, "denoiser")?;
        }
        if let MaskSource::File(dir) = &self.mask.source {
            require_dir(dir, "mask")?;
        }
        if let Scorer::External { dir } = &self.scorer {
            require_dir(dir, "embedding")?;
        }
        Ok(())
    }
}

fn require_dir(dir: &Path, what: &str) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(DrcError::Config(format!(
            "{what} directory {} does not exist",
            dir.display()
        )))
    }
}
