//! Forward marginal, DDPM ancestral step, the denoising loss and the DDIM
//! update.

use crate::denoiser::Denoiser;
use crate::error::{DrcError, Result};
use crate::numerics::{checked, gaussian_like, Grid, SeededRng};
use crate::schedule::NoiseSchedule;

#[derive(Clone, Debug, PartialEq)]
pub struct DdimStepOutput {
    pub x_prev: Grid,
    pub x0_hat: Grid,
}

/// `sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps`.
pub fn forward_diffuse(x0: &Grid, t: usize, eps: &Grid, sched: &NoiseSchedule) -> Result<Grid> {
    sched.check_timestep(t)?;
    let ab = sched.alpha_bar(t);
    x0.lincomb(ab.sqrt(), eps, (1.0 - ab).sqrt())
}

/// Mean squared noise-prediction error at one `(x0, t, eps)` draw.
pub fn training_loss(
    den: &dyn Denoiser,
    x0: &Grid,
    t: usize,
    eps: &Grid,
    sched: &NoiseSchedule,
) -> Result<f64> {
    let x_t = forward_diffuse(x0, t, eps, sched)?;
    let pred = den.predict_eps(&x_t, t)?;
    eps.ensure_same_shape(&pred)?;
    Ok(eps.squared_distance(&pred)? / eps.len() as f64)
}

/// Clean-image estimate implied by a noise prediction.
pub fn x0_from_eps(x_t: &Grid, t: usize, eps_pred: &Grid, sched: &NoiseSchedule) -> Result<Grid> {
    let ab = sched.alpha_bar(t);
    let inv = 1.0 / ab.sqrt();
    x_t.lincomb(inv, eps_pred, -(1.0 - ab).sqrt() * inv)
}

/// Noise prediction implied by a clean-image estimate (inverse of
/// [`x0_from_eps`]).
pub fn eps_from_x0(x_t: &Grid, t: usize, x0_hat: &Grid, sched: &NoiseSchedule) -> Result<Grid> {
    let ab = sched.alpha_bar(t);
    let inv = 1.0 / (1.0 - ab).sqrt();
    x_t.lincomb(inv, x0_hat, -ab.sqrt() * inv)
}

/// One ancestral step `x_t -> x_{t-1}` with variance `beta_t`; no noise is
/// added on the final step `t = 1`.
pub fn ddpm_reverse_step(
    x_t: &Grid,
    t: usize,
    den: &dyn Denoiser,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<Grid> {
    sched.check_timestep(t)?;
    let eps = den.predict_eps(x_t, t)?;
    x_t.ensure_same_shape(&eps)?;
    let beta = sched.beta(t);
    let coef = beta / (1.0 - sched.alpha_bar(t)).sqrt();
    let scale = 1.0 / sched.alpha(t).sqrt();
    let mean = x_t.lincomb(scale, &eps, -scale * coef)?;
    if t == 1 || beta == 0.0 {
        return Ok(mean);
    }
    let z = gaussian_like(rng, x_t);
    mean.lincomb(1.0, &z, beta.sqrt())
}

/// Generalized DDIM update from `t` to `t_prev` given a noise prediction.
/// With `sigma_t == 0` the step is deterministic and `rng` is not touched.
pub fn ddim_step(
    x_t: &Grid,
    t: usize,
    t_prev: usize,
    eps_pred: &Grid,
    sigma_t: f64,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<DdimStepOutput> {
    sched.check_timestep(t)?;
    if t_prev >= t {
        return Err(DrcError::invalid(format!(
            "t_prev {t_prev} must be below t {t}"
        )));
    }
    x_t.ensure_same_shape(eps_pred)?;
    let ab_prev = sched.alpha_bar(t_prev);
    let sigma_max = (1.0 - ab_prev).sqrt();
    if !(sigma_t >= 0.0 && sigma_t <= sigma_max) {
        return Err(DrcError::invalid(format!(
            "sigma_t {sigma_t} outside [0, {sigma_max}]"
        )));
    }
    let x0_hat = x0_from_eps(x_t, t, eps_pred, sched)?;
    let dir = (1.0 - ab_prev - sigma_t * sigma_t).max(0.0).sqrt();
    let mut x_prev = x0_hat.lincomb(ab_prev.sqrt(), eps_pred, dir)?;
    if sigma_t > 0.0 {
        let z = gaussian_like(rng, x_t);
        x_prev = x_prev.lincomb(1.0, &z, sigma_t)?;
    }
    Ok(DdimStepOutput {
        x_prev: checked(x_prev, "ddim_step")?,
        x0_hat,
    })
}
