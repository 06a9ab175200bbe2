//! Variance schedules and the derived `alpha` / `alpha_bar` tables.

use crate::error::{DrcError, Result};

/// Tables are indexed by timestep and have length `T + 1`; index 0 holds the
/// clean-image convention `beta = 0`, `alpha = alpha_bar = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    id: String,
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(DrcError::invalid("schedule needs at least one step"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(DrcError::invalid(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let betas: Vec<f64> = std::iter::once(0.0)
            .chain((1..=steps).map(|t| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * (t - 1) as f64 / (steps - 1) as f64
                }
            }))
            .collect();
        let id = format!("linear-{steps}-{beta_start:e}-{beta_end:e}");
        Self::from_betas(betas, id)
    }

    /// Linear schedule with the usual `1e-4 .. 0.02` range rescaled by
    /// `1000 / steps`, so shorter horizons reach a comparable terminal noise.
    pub fn rescaled_linear(steps: usize) -> Result<Self> {
        let scale = 1000.0 / steps.max(1) as f64;
        Self::linear(steps, 1e-4 * scale, 0.02 * scale)
    }

    fn from_betas(betas: Vec<f64>, id: String) -> Result<Self> {
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        alpha_bars.push(acc);
        for a in &alphas[1..] {
            acc *= a;
            alpha_bars.push(acc);
        }
        if alpha_bars.iter().any(|&v| !(v > 0.0)) {
            return Err(DrcError::invalid("alpha_bar underflowed to zero"));
        }
        Ok(Self {
            steps: betas.len() - 1,
            betas,
            alphas,
            alpha_bars,
            id,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Stable identifier used in the file-denoiser manifest.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Errors unless `1 <= t <= T`.
    pub fn check_timestep(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            Err(DrcError::TimestepOutOfRange { t, max: self.steps })
        } else {
            Ok(())
        }
    }

    /// The `t` in `1..=T` whose `alpha_bar` is closest to `target`.
    pub fn timestep_nearest_alpha_bar(&self, target: f64) -> usize {
        (1..=self.steps)
            .min_by(|&a, &b| {
                let da = (self.alpha_bars[a] - target).abs();
                let db = (self.alpha_bars[b] - target).abs();
                da.total_cmp(&db)
            })
            .unwrap_or(1)
    }
}

/// Strided DDIM timesteps: `start, start - k, ...` down to the last positive
/// entry, always terminated by `0`. Consecutive entries are `(t, t_prev)`.
pub fn timestep_subsequence(start: usize, interval: usize) -> Result<Vec<usize>> {
    if interval == 0 || interval > start {
        return Err(DrcError::invalid(format!(
            "interval must satisfy 1 <= interval <= {start}, got {interval}"
        )));
    }
    let mut out: Vec<usize> = (1..=start).rev().step_by(interval).collect();
    out.push(0);
    Ok(out)
}
