//! The audited models.
//!
//! A [`Denoiser`] is only ever queried as a black box through
//! `predict_eps(x_t, t)`. Two closed-form implementations ship with the
//! crate: [`EmpiricalDenoiser`] memorizes a finite training set exactly,
//! [`MixtureDenoiser`] knows the data distribution but no samples from it.
//! [`FileDenoiser`] forwards queries to an external process.

mod empirical;
mod file;
mod mixture;

pub use empirical::EmpiricalDenoiser;
pub use file::{serve, serve_pending, FileDenoiser, RequestManifest};
pub use mixture::{GaussianMixture, MixtureDenoiser};

use crate::error::Result;
use crate::numerics::Grid;

pub trait Denoiser: Send + Sync {
    /// Predicted noise for `x_t` at timestep `t` (`1 <= t <= T`).
    fn predict_eps(&self, x_t: &Grid, t: usize) -> Result<Grid>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_eps(&self, x_t: &Grid, t: usize) -> Result<Grid> {
        (**self).predict_eps(x_t, t)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict_eps(&self, x_t: &Grid, t: usize) -> Result<Grid> {
        (**self).predict_eps(x_t, t)
    }
}

/// Lower clamp for max-shifted log weights; `exp(-745)` is the smallest
/// positive subnormal.
pub(crate) const LOG_WEIGHT_FLOOR: f64 = -745.0;

/// Normalizes log weights in place into probabilities.
pub(crate) fn softmax_in_place(logw: &mut [f64]) {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for lw in logw.iter_mut() {
        *lw = (*lw - max).max(LOG_WEIGHT_FLOOR).exp();
        total += *lw;
    }
    for w in logw.iter_mut() {
        *w /= total;
    }
}
