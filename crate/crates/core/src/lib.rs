//! Degrade-restore-compare membership inference against diffusion denoisers.
//!
//! An image's most salient region is degraded, restored by the audited
//! denoiser with replacement-guided DDIM, and compared to the original.
//! Training members come back closer to themselves than unseen images do.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod compare;
pub mod degrade;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod exec;
pub mod gridio;
pub mod harness;
pub mod numerics;
pub mod restore;
pub mod schedule;

pub use error::{DrcError, Result};
pub use exec::Execution;
pub use numerics::{Grid, SeededRng};
pub use schedule::NoiseSchedule;
