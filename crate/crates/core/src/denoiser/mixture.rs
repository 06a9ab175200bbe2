use crate::denoiser::{softmax_in_place, Denoiser};
use crate::diffusion::eps_from_x0;
use crate::error::{DrcError, Result};
use crate::numerics::{Grid, SeededRng};
use crate::schedule::NoiseSchedule;

/// Isotropic Gaussian mixture `sum_k pi_k N(mu_k, s^2 I)` over grids.
#[derive(Clone, Debug)]
pub struct GaussianMixture {
    means: Vec<Grid>,
    std: f64,
    weights: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(means: Vec<Grid>, std: f64, weights: Vec<f64>) -> Result<Self> {
        let first = means
            .first()
            .ok_or_else(|| DrcError::invalid("mixture needs at least one component"))?;
        for m in &means {
            first.ensure_same_shape(m)?;
        }
        if !(std > 0.0 && std.is_finite()) {
            return Err(DrcError::invalid(format!(
                "component std must be positive, got {std}"
            )));
        }
        if weights.len() != means.len() {
            return Err(DrcError::invalid("one weight per component required"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(DrcError::invalid("mixture weights must be non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DrcError::invalid(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(Self {
            means,
            std,
            weights,
        })
    }

    pub fn uniform(means: Vec<Grid>, std: f64) -> Result<Self> {
        let k = means.len().max(1);
        Self::new(means, std, vec![1.0 / k as f64; k])
    }

    pub fn means(&self) -> &[Grid] {
        &self.means
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.means[0].shape()
    }

    /// Index of the component chosen by a uniform draw `u in [0, 1)`.
    fn component_for(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.weights.len() - 1
    }

    /// One draw; returns the component index alongside the sample.
    pub fn sample(&self, rng: &mut SeededRng) -> (usize, Grid) {
        let k = self.component_for(rng.uniform());
        let mu = &self.means[k];
        let data = mu
            .data()
            .iter()
            .map(|m| m + self.std * rng.standard_normal())
            .collect();
        (k, mu.with_data(data))
    }
}

/// Exact posterior-mean denoiser for data drawn from a [`GaussianMixture`].
#[derive(Clone, Debug)]
pub struct MixtureDenoiser {
    mixture: GaussianMixture,
    sched: NoiseSchedule,
}

impl MixtureDenoiser {
    pub fn new(mixture: GaussianMixture, sched: NoiseSchedule) -> Self {
        Self { mixture, sched }
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.mixture
    }

    /// Component responsibilities given `x_t`. Every component has marginal
    /// covariance `(abar s^2 + 1 - abar) I`, so only the means and priors
    /// discriminate.
    pub fn responsibilities(&self, x_t: &Grid, t: usize) -> Result<Vec<f64>> {
        self.sched.check_timestep(t)?;
        if x_t.shape() != self.mixture.shape() {
            return Err(DrcError::ShapeMismatch {
                left: x_t.shape(),
                right: self.mixture.shape(),
            });
        }
        let ab = self.sched.alpha_bar(t);
        let scale = ab.sqrt();
        let var = ab * self.mixture.std * self.mixture.std + (1.0 - ab);
        let mut logw: Vec<f64> = self
            .mixture
            .means
            .iter()
            .zip(&self.mixture.weights)
            .map(|(mu, &pi)| {
                let d: f64 = x_t
                    .data()
                    .iter()
                    .zip(mu.data())
                    .map(|(x, m)| (x - scale * m).powi(2))
                    .sum();
                pi.ln() - d / (2.0 * var)
            })
            .collect();
        softmax_in_place(&mut logw);
        Ok(logw)
    }

    pub fn posterior_mean(&self, x_t: &Grid, t: usize) -> Result<Grid> {
        let resp = self.responsibilities(x_t, t)?;
        let ab = self.sched.alpha_bar(t);
        let scale = ab.sqrt();
        let s2 = self.mixture.std * self.mixture.std;
        let gain = scale * s2 / (ab * s2 + 1.0 - ab);
        let mut acc = vec![0.0; x_t.len()];
        for (w, mu) in resp.iter().zip(&self.mixture.means) {
            if *w == 0.0 {
                continue;
            }
            for ((a, m), x) in acc.iter_mut().zip(mu.data()).zip(x_t.data()) {
                *a += w * (m + gain * (x - scale * m));
            }
        }
        Ok(x_t.with_data(acc))
    }
}

impl Denoiser for MixtureDenoiser {
    fn predict_eps(&self, x_t: &Grid, t: usize) -> Result<Grid> {
        let mean = self.posterior_mean(x_t, t)?;
        eps_from_x0(x_t, t, &mean, &self.sched)
    }
}
