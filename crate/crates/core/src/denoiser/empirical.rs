use crate::denoiser::{softmax_in_place, Denoiser};
use crate::diffusion::eps_from_x0;
use crate::error::{DrcError, Result};
use crate::numerics::{sq_dist, Grid};
use crate::schedule::NoiseSchedule;

/// Posterior-mean denoiser over a finite training set.
///
/// Under the forward kernel `x_t ~ N(sqrt(abar) x0, (1 - abar) I)` with `x0`
/// uniform over the members, the optimal noise predictor is the softmax
/// average of members weighted by their kernel likelihood. It is the exact
/// minimizer of the denoising loss on that set, so it memorizes perfectly.
#[derive(Clone, Debug)]
pub struct EmpiricalDenoiser {
    members: Vec<Grid>,
    shape: (usize, usize, usize),
    sched: NoiseSchedule,
    variance_floor: f64,
}

impl EmpiricalDenoiser {
    pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-12;

    pub fn new(members: Vec<Grid>, sched: NoiseSchedule) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| DrcError::invalid("empirical denoiser needs at least one member"))?;
        let shape = first.shape();
        for m in &members {
            first.ensure_same_shape(m)?;
        }
        Ok(Self {
            members,
            shape,
            sched,
            variance_floor: Self::DEFAULT_VARIANCE_FLOOR,
        })
    }

    pub fn with_variance_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor > 0.0) {
            return Err(DrcError::invalid("variance floor must be positive"));
        }
        self.variance_floor = floor;
        Ok(self)
    }

    pub fn members(&self) -> &[Grid] {
        &self.members
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }

    fn check(&self, x_t: &Grid, t: usize) -> Result<()> {
        self.sched.check_timestep(t)?;
        if x_t.shape() != self.shape {
            return Err(DrcError::ShapeMismatch {
                left: x_t.shape(),
                right: self.shape,
            });
        }
        Ok(())
    }

    /// Posterior probabilities of each member given `x_t`.
    pub fn posterior_weights(&self, x_t: &Grid, t: usize) -> Result<Vec<f64>> {
        self.check(x_t, t)?;
        let ab = self.sched.alpha_bar(t);
        let scale = ab.sqrt();
        let var = (1.0 - ab).max(self.variance_floor);
        let xt = x_t.data();
        let mut logw: Vec<f64> = self
            .members
            .iter()
            .map(|m| {
                let d: f64 = xt
                    .iter()
                    .zip(m.data())
                    .map(|(x, v)| {
                        let r = x - scale * v;
                        r * r
                    })
                    .sum();
                -d / (2.0 * var)
            })
            .collect();
        softmax_in_place(&mut logw);
        Ok(logw)
    }

    /// `E[x0 | x_t]` under the uniform prior over members.
    pub fn posterior_mean(&self, x_t: &Grid, t: usize) -> Result<Grid> {
        let weights = self.posterior_weights(x_t, t)?;
        let mut acc = vec![0.0; x_t.len()];
        for (w, m) in weights.iter().zip(&self.members) {
            if *w == 0.0 {
                continue;
            }
            for (a, v) in acc.iter_mut().zip(m.data()) {
                *a += w * v;
            }
        }
        Ok(x_t.with_data(acc))
    }

    /// Index of the member closest to `grid` in Euclidean distance.
    pub fn nearest_member(&self, grid: &Grid) -> Option<usize> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, m)| (i, sq_dist(m.data(), grid.data())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

impl Denoiser for EmpiricalDenoiser {
    fn predict_eps(&self, x_t: &Grid, t: usize) -> Result<Grid> {
        let mean = self.posterior_mean(x_t, t)?;
        eps_from_x0(x_t, t, &mean, &self.sched)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{forward_diffuse, x0_from_eps};
    use crate::numerics::{gaussian_grid, linf_distance, SeededRng};

    fn sched() -> NoiseSchedule {
        NoiseSchedule::linear(2, 0.1, 0.2).unwrap()
    }

    #[test]
    fn singleton_returns_member() {
        let s = NoiseSchedule::rescaled_linear(100).unwrap();
        let a = gaussian_grid(&mut SeededRng::new(1, 0), 4, 4, 1).unwrap();
        let d = EmpiricalDenoiser::new(vec![a.clone()], s).unwrap();
        for (seed, t) in [(2, 1), (3, 50), (4, 100)] {
            let x = gaussian_grid(&mut SeededRng::new(seed, 0), 4, 4, 1).unwrap();
            assert_eq!(d.posterior_mean(&x, t).unwrap(), a);
        }
    }

    #[test]
    fn equidistant_gives_midpoint() {
        let a = Grid::filled(2, 2, 1, 1.0).unwrap();
        let b = Grid::filled(2, 2, 1, -1.0).unwrap();
        let d = EmpiricalDenoiser::new(vec![a, b], sched()).unwrap();
        let x = Grid::zeros(2, 2, 1).unwrap();
        let m = d.posterior_mean(&x, 2).unwrap();
        assert!(m.data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn two_member_weights_match_direct_evaluation() {
        let plus = Grid::filled(4, 4, 1, 1.0).unwrap();
        let minus = Grid::filled(4, 4, 1, -1.0).unwrap();
        let s = sched();
        let ab: f64 = 0.72;
        let d = EmpiricalDenoiser::new(vec![plus.clone(), minus.clone()], s).unwrap();
        let x = Grid::filled(4, 4, 1, ab.sqrt()).unwrap();
        let w = d.posterior_weights(&x, 2).unwrap();
        // direct two-term evaluation: 16 elements, residuals 0 and 2 sqrt(ab)
        let d_plus = 0.0;
        let d_minus = 16.0 * (2.0 * ab.sqrt()).powi(2);
        let log_ratio = (d_minus - d_plus) / (2.0 * (1.0 - ab));
        assert!(((w[0] / w[1]).ln() - log_ratio).abs() < 1e-9);
        let w_plus = 1.0 / (1.0 + (-log_ratio).exp());
        assert!((w[0] - w_plus).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // a closer probe keeps both weights representable
        let x = Grid::filled(4, 4, 1, 0.05).unwrap();
        let w = d.posterior_weights(&x, 2).unwrap();
        let dp = 16.0 * (0.05 - ab.sqrt()).powi(2);
        let dm = 16.0 * (0.05 + ab.sqrt()).powi(2);
        let lr = (dm - dp) / (2.0 * (1.0 - ab));
        assert!(((w[0] / w[1]).ln() - lr).abs() < 1e-9);
    }

    #[test]
    fn predict_eps_recovers_forward_noise() {
        let s = NoiseSchedule::rescaled_linear(100).unwrap();
        let mut rng = SeededRng::new(5, 0);
        let m = gaussian_grid(&mut rng, 4, 4, 1).unwrap();
        let eps = gaussian_grid(&mut rng, 4, 4, 1).unwrap();
        let d = EmpiricalDenoiser::new(vec![m.clone()], s.clone()).unwrap();
        for t in [1, 30, 90] {
            let xt = forward_diffuse(&m, t, &eps, &s).unwrap();
            let pred = d.predict_eps(&xt, t).unwrap();
            assert!(linf_distance(&pred, &eps).unwrap() < 1e-9);
            // eps = 0 gives a zero prediction
            let clean = forward_diffuse(&m, t, &m.zeros_like(), &s).unwrap();
            assert!(d.predict_eps(&clean, t).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn eps_roundtrips_to_posterior_mean() {
        let s = NoiseSchedule::rescaled_linear(100).unwrap();
        let mut rng = SeededRng::new(6, 0);
        let members: Vec<Grid> = (0..5)
            .map(|_| gaussian_grid(&mut rng, 3, 3, 1).unwrap())
            .collect();
        let d = EmpiricalDenoiser::new(members, s.clone()).unwrap();
        let xt = gaussian_grid(&mut rng, 3, 3, 1).unwrap();
        let eps = d.predict_eps(&xt, 40).unwrap();
        let x0 = x0_from_eps(&xt, 40, &eps, &s).unwrap();
        let mean = d.posterior_mean(&xt, 40).unwrap();
        assert!(linf_distance(&x0, &mean).unwrap() < 1e-12);
    }

    #[test]
    fn errors() {
        let s = sched();
        assert!(EmpiricalDenoiser::new(vec![], s.clone()).is_err());
        let a = Grid::zeros(2, 2, 1).unwrap();
        let b = Grid::zeros(3, 2, 1).unwrap();
        assert!(EmpiricalDenoiser::new(vec![a.clone(), b.clone()], s.clone()).is_err());
        let d = EmpiricalDenoiser::new(vec![a.clone()], s).unwrap();
        assert!(matches!(
            d.predict_eps(&a, 0),
            Err(DrcError::TimestepOutOfRange { .. })
        ));
        assert!(matches!(
            d.predict_eps(&a, 3),
            Err(DrcError::TimestepOutOfRange { .. })
        ));
        assert!(d.predict_eps(&b, 1).is_err());
    }
}
