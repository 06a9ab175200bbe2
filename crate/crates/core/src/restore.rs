//! Replacement-guided deterministic DDIM restoration.
//!
//! Starting from the degraded image, every retained timestep re-noises the
//! original to the current level, pastes it over the unmasked region, and
//! takes a `sigma = 0` DDIM step. Only the masked ROI is ever generated by
//! the model; the surroundings anchor it.

use std::path::Path;

use crate::degrade::{select, Mask};
use crate::denoiser::Denoiser;
use crate::diffusion::ddim_step;
use crate::error::{DrcError, Result};
use crate::gridio::write_grid;
use crate::numerics::{gaussian_like, Grid, SeededRng};
use crate::schedule::{timestep_subsequence, NoiseSchedule};

/// Tolerance for the "unmasked region of `x_d` equals `x`" precondition.
pub const UNMASKED_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct RestoreConfig {
    pub schedule: NoiseSchedule,
    pub interval: usize,
    pub start_t: usize,
    pub seed: u64,
    /// Stream of `seed` used for the replacement noise; one per sample.
    pub stream: u64,
    /// Also forward-noise the masked region of the initial state.
    pub renoise_init: bool,
}

impl RestoreConfig {
    /// Full-horizon restoration with the given stride.
    pub fn new(schedule: NoiseSchedule, interval: usize, seed: u64) -> Self {
        let start_t = schedule.steps();
        Self {
            schedule,
            interval,
            start_t,
            seed,
            stream: 0,
            renoise_init: false,
        }
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        Self {
            stream,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t_max = self.schedule.steps();
        if !(1 <= self.interval && self.interval <= self.start_t && self.start_t <= t_max) {
            return Err(DrcError::invalid(format!(
                "need 1 <= interval ({}) <= start_t ({}) <= T ({t_max})",
                self.interval, self.start_t
            )));
        }
        Ok(())
    }

    /// Retained `(t, t_prev)` pairs.
    pub fn pairs(&self) -> Result<Vec<(usize, usize)>> {
        self.validate()?;
        let seq = timestep_subsequence(self.start_t, self.interval)?;
        Ok(seq.windows(2).map(|w| (w[0], w[1])).collect())
    }
}

/// State of the chain at one retained timestep, after the replacement.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub t: usize,
    /// Fresh noise drawn at this step.
    pub eps: Grid,
    /// `sqrt(abar_t) x + sqrt(1 - abar_t) eps`.
    pub x_prime: Grid,
    /// `M x_t + (1 - M) x'`, the denoiser input.
    pub x_t: Grid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Restoration {
    pub restored: Grid,
    pub trajectory: Vec<TrajectoryStep>,
}

pub fn restore(
    x_d: &Grid,
    x: &Grid,
    m: &Mask,
    den: &dyn Denoiser,
    cfg: &RestoreConfig,
) -> Result<Grid> {
    run(x_d, x, m, den, cfg, false).map(|r| r.restored)
}

/// As [`restore`], also returning every post-replacement state.
pub fn restore_trajectory(
    x_d: &Grid,
    x: &Grid,
    m: &Mask,
    den: &dyn Denoiser,
    cfg: &RestoreConfig,
) -> Result<Restoration> {
    run(x_d, x, m, den, cfg, true)
}

fn run(
    x_d: &Grid,
    x: &Grid,
    m: &Mask,
    den: &dyn Denoiser,
    cfg: &RestoreConfig,
    record: bool,
) -> Result<Restoration> {
    x_d.ensure_same_shape(x)?;
    m.check_grid(x)?;
    let pairs = cfg.pairs()?;
    check_unmasked(x_d, x, m)?;

    let sched = &cfg.schedule;
    let mut rng = SeededRng::new(cfg.seed, cfg.stream);
    let mut x_t = x_d.clone();
    if cfg.renoise_init {
        let ab = sched.alpha_bar(cfg.start_t);
        let z = gaussian_like(&mut rng, x_d);
        let noised = x_d.lincomb(ab.sqrt(), &z, (1.0 - ab).sqrt())?;
        x_t = select(m, &noised, x_d);
    }

    let mut trajectory = Vec::with_capacity(if record { pairs.len() } else { 0 });
    for (t, t_prev) in pairs {
        let ab = sched.alpha_bar(t);
        let eps = gaussian_like(&mut rng, x);
        let x_prime = x.lincomb(ab.sqrt(), &eps, (1.0 - ab).sqrt())?;
        x_t = select(m, &x_t, &x_prime);
        let eps_pred = den.predict_eps(&x_t, t)?;
        if eps_pred.shape() != x_t.shape() {
            return Err(DrcError::ShapeMismatch {
                left: eps_pred.shape(),
                right: x_t.shape(),
            });
        }
        let step = ddim_step(&x_t, t, t_prev, &eps_pred, 0.0, sched, &mut rng)?;
        if record {
            trajectory.push(TrajectoryStep {
                t,
                eps,
                x_prime,
                x_t: x_t.clone(),
            });
        }
        x_t = step.x_prev;
    }
    Ok(Restoration {
        restored: x_t,
        trajectory,
    })
}

fn check_unmasked(x_d: &Grid, x: &Grid, m: &Mask) -> Result<()> {
    let ch = x.channels();
    for (p, (a, b)) in x_d
        .data()
        .chunks_exact(ch)
        .zip(x.data().chunks_exact(ch))
        .enumerate()
    {
        if m.is_set(p) {
            continue;
        }
        if a.iter()
            .zip(b)
            .any(|(u, v)| (u - v).abs() > UNMASKED_TOLERANCE)
        {
            return Err(DrcError::invalid(format!(
                "degraded image differs from the original outside the mask at pixel {p}"
            )));
        }
    }
    Ok(())
}

/// Writes each trajectory state as `traj_t<t>.drcgrid` under `dir`.
pub fn dump_trajectory(trajectory: &[TrajectoryStep], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| DrcError::io(dir, e))?;
    for step in trajectory {
        write_grid(&dir.join(format!("traj_t{}.drcgrid", step.t)), &step.x_t)?;
    }
    Ok(())
}
