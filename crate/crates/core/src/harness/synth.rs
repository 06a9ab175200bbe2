//! Synthetic datasets. Image `i` (members first, then non-members) is drawn
//! from stream `i` of the dataset seed, so both sets come i.i.d. from one
//! generator and any image can be regenerated alone.

use crate::denoiser::GaussianMixture;
use crate::error::{DrcError, Result};
use crate::harness::config::{DatasetConfig, Generator};
use crate::numerics::{Grid, SeededRng};

const COMPONENT_STREAM: u64 = 1 << 40;
const REFERENCE_STREAM: u64 = 1 << 41;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub members: Vec<Grid>,
    pub nonmembers: Vec<Grid>,
}

pub fn synth_dataset(spec: &DatasetConfig) -> Result<SyntheticDataset> {
    check(spec)?;
    let total = spec.n_members + spec.n_nonmembers;
    let images: Vec<Grid> = match spec.generator {
        Generator::GaussianMixtureImages => {
            let mix = component_mixture(spec)?;
            (0..total)
                .map(|i| mix.sample(&mut SeededRng::new(spec.seed, i as u64)).1)
                .collect()
        }
        Generator::Shapes => (0..total)
            .map(|i| shapes_image(spec, &mut SeededRng::new(spec.seed, i as u64)))
            .collect::<Result<_>>()?,
    };
    let mut members = images;
    let nonmembers = members.split_off(spec.n_members);
    Ok(SyntheticDataset {
        members,
        nonmembers,
    })
}

/// The data distribution as a Gaussian mixture: exact for the mixture
/// generator, a kernel density over independent reference draws for shapes.
pub fn generator_mixture(spec: &DatasetConfig) -> Result<GaussianMixture> {
    check(spec)?;
    match spec.generator {
        Generator::GaussianMixtureImages => component_mixture(spec),
        Generator::Shapes => {
            let refs = (0..spec.reference_size)
                .map(|j| {
                    shapes_image(
                        spec,
                        &mut SeededRng::new(spec.seed, REFERENCE_STREAM + j as u64),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            GaussianMixture::uniform(refs, spec.component_std)
        }
    }
}

fn check(spec: &DatasetConfig) -> Result<()> {
    if spec.height == 0 || spec.width == 0 || spec.channels == 0 {
        return Err(DrcError::invalid("image dimensions must be positive"));
    }
    if spec.generator == Generator::Shapes && spec.height * spec.width < 4 {
        return Err(DrcError::invalid("shapes images need at least 4 pixels"));
    }
    if spec.components == 0 || !(spec.component_std > 0.0) {
        return Err(DrcError::invalid(
            "mixture needs components and a positive std",
        ));
    }
    Ok(())
}

fn uniform_in(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

/// Component means: a flat background plus two or three Gaussian blobs.
fn component_mixture(spec: &DatasetConfig) -> Result<GaussianMixture> {
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    let scale = h.min(w) as f64 / 16.0;
    let means = (0..spec.components)
        .map(|k| {
            let mut rng = SeededRng::new(spec.seed, COMPONENT_STREAM + k as u64);
            let background = uniform_in(&mut rng, -0.7, -0.2);
            let blobs: Vec<(f64, f64, f64, Vec<f64>)> = (0..2 + rng.below(2))
                .map(|_| {
                    let r0 = uniform_in(&mut rng, 0.0, h as f64);
                    let c0 = uniform_in(&mut rng, 0.0, w as f64);
                    let radius = uniform_in(&mut rng, 1.5, 4.0) * scale;
                    let amp = (0..c).map(|_| uniform_in(&mut rng, 0.6, 1.4)).collect();
                    (r0, c0, radius, amp)
                })
                .collect();
            Grid::from_fn(h, w, c, |row, col, ch| {
                let v: f64 = blobs
                    .iter()
                    .map(|(r0, c0, rad, amp)| {
                        let d2 = (row as f64 + 0.5 - r0).powi(2) + (col as f64 + 0.5 - c0).powi(2);
                        amp[ch] * (-d2 / (2.0 * rad * rad)).exp()
                    })
                    .sum();
                (background + v).clamp(-0.9, 0.9)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::uniform(means, spec.component_std)
}

/// A linear-gradient background with one to three filled ellipses.
fn shapes_image(spec: &DatasetConfig, rng: &mut SeededRng) -> Result<Grid> {
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    let base: Vec<f64> = (0..c).map(|_| uniform_in(rng, -0.8, 0.2)).collect();
    let theta = uniform_in(rng, 0.0, std::f64::consts::TAU);
    let amp = uniform_in(rng, 0.3, 0.6);
    let ellipses: Vec<[f64; 5]> = (0..1 + rng.below(3))
        .map(|_| {
            let side = h.min(w) as f64;
            [
                uniform_in(rng, 0.0, h as f64),
                uniform_in(rng, 0.0, w as f64),
                uniform_in(rng, side / 8.0, side / 3.0).max(0.75),
                uniform_in(rng, side / 8.0, side / 3.0).max(0.75),
                uniform_in(rng, 0.0, std::f64::consts::PI),
            ]
        })
        .collect();
    let fills: Vec<Vec<f64>> = ellipses
        .iter()
        .map(|_| (0..c).map(|_| uniform_in(rng, -1.0, 1.0)).collect())
        .collect();
    Grid::from_fn(h, w, c, |row, col, ch| {
        let (y, x) = (row as f64 + 0.5, col as f64 + 0.5);
        let mut v = base[ch]
            + amp * ((y / h as f64 - 0.5) * theta.cos() + (x / w as f64 - 0.5) * theta.sin());
        for (e, fill) in ellipses.iter().zip(&fills) {
            let (dy, dx) = (y - e[0], x - e[1]);
            let (s, co) = e[4].sin_cos();
            let u = dx * co + dy * s;
            let v2 = -dx * s + dy * co;
            if (u / e[2]).powi(2) + (v2 / e[3]).powi(2) <= 1.0 {
                v = fill[ch];
            }
        }
        v.clamp(-1.0, 1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linf_distance;

    fn spec(generator: Generator, n: usize) -> DatasetConfig {
        DatasetConfig {
            generator,
            n_members: n,
            n_nonmembers: n,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        for g in [Generator::GaussianMixtureImages, Generator::Shapes] {
            let s = spec(g, 5);
            assert_eq!(synth_dataset(&s).unwrap(), synth_dataset(&s).unwrap());
        }
    }

    #[test]
    fn shapes_are_distinct_and_non_constant() {
        let d = synth_dataset(&spec(Generator::Shapes, 4)).unwrap();
        let all: Vec<&Grid> = d.members.iter().chain(&d.nonmembers).collect();
        assert_eq!(all.len(), 8);
        for (i, a) in all.iter().enumerate() {
            let min = a.data().iter().copied().fold(f64::INFINITY, f64::min);
            let max = a.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(max > min);
            for b in &all[i + 1..] {
                assert!(linf_distance(a, b).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn each_image_depends_only_on_its_index() {
        let small = synth_dataset(&spec(Generator::GaussianMixtureImages, 3)).unwrap();
        let mut s = spec(Generator::GaussianMixtureImages, 3);
        s.n_nonmembers = 10;
        let big = synth_dataset(&s).unwrap();
        assert_eq!(small.members, big.members);
        assert_eq!(small.nonmembers[..], big.nonmembers[..3]);
    }

    #[test]
    fn mixture_samples_stay_near_their_component() {
        let s = spec(Generator::GaussianMixtureImages, 4);
        let mix = generator_mixture(&s).unwrap();
        assert_eq!(mix.means().len(), 4);
        let mut rng = SeededRng::new(1, 2);
        let (k, x) = mix.sample(&mut rng);
        let resid: f64 = x
            .data()
            .iter()
            .zip(mix.means()[k].data())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
        let var = resid / x.len() as f64;
        assert!((var.sqrt() - 0.15).abs() < 0.03, "{var}");
    }

    #[test]
    fn shapes_mixture_is_a_kde_over_reference_draws() {
        let mut s = spec(Generator::Shapes, 2);
        s.reference_size = 12;
        let mix = generator_mixture(&s).unwrap();
        assert_eq!(mix.means().len(), 12);
        let d = synth_dataset(&s).unwrap();
        assert!(mix.means().iter().all(|m| !d.members.contains(m)));
    }
}
