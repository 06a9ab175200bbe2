//! ROI masks and the degradations applied inside them.
//!
//! The ROI is the top-`p` fraction of pixels ranked by a saliency proxy
//! (3x3 local standard deviation plus central-difference gradient magnitude
//! of the channel-mean image). A degraded image keeps the original outside
//! the mask and takes the low-quality candidate inside it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{DrcError, Result};
use crate::numerics::{checked, Grid, SeededRng};

/// Per-pixel ROI selector, broadcast across channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(DrcError::invalid(
                "mask bit count must equal height * width",
            ));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    /// Reads an external one-channel mask: values above 0.5 are masked.
    pub fn from_grid(grid: &Grid) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(DrcError::invalid("external masks must have one channel"));
        }
        Self::new(
            grid.height(),
            grid.width(),
            grid.data().iter().map(|&v| v > 0.5).collect(),
        )
    }

    pub fn to_grid(&self) -> Grid {
        Grid::new(
            self.height,
            self.width,
            1,
            self.bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        )
        .expect("mask dimensions are valid")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn is_set(&self, pixel: usize) -> bool {
        self.bits[pixel]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Fraction of set pixels.
    pub fn ratio(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid.height() != self.height || grid.width() != self.width {
            return Err(DrcError::ShapeMismatch {
                left: grid.shape(),
                right: (self.height, self.width, grid.channels()),
            });
        }
        Ok(())
    }
}

pub fn invert_mask(m: &Mask) -> Mask {
    Mask {
        height: m.height,
        width: m.width,
        bits: m.bits.iter().map(|b| !b).collect(),
    }
}

fn channel_mean(x: &Grid) -> Vec<f64> {
    let c = x.channels();
    x.data()
        .chunks_exact(c)
        .map(|px| px.iter().sum::<f64>() / c as f64)
        .collect()
}

/// One-channel saliency in `[0, 1]`; all zeros for a constant image.
pub fn saliency_map(x: &Grid) -> Grid {
    let (h, w) = (x.height(), x.width());
    let g = channel_mean(x);
    let at = |r: usize, c: usize| g[r * w + c];
    let mut sal = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            // deviations from the centre pixel: exact zeros on flat regions
            let centre = at(r, c);
            let (mut n, mut sum, mut sq) = (0.0, 0.0, 0.0);
            for rr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    let d = at(rr, cc) - centre;
                    n += 1.0;
                    sum += d;
                    sq += d * d;
                }
            }
            let mean = sum / n;
            let std = (sq / n - mean * mean).max(0.0).sqrt();
            let dx = (at(r, (c + 1).min(w - 1)) - at(r, c.saturating_sub(1))) / 2.0;
            let dy = (at((r + 1).min(h - 1), c) - at(r.saturating_sub(1), c)) / 2.0;
            sal[r * w + c] = std + (dx * dx + dy * dy).sqrt();
        }
    }
    let max = sal.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut sal {
            *v /= max;
        }
    }
    Grid::new(h, w, 1, sal).expect("saliency of a valid grid is finite")
}

/// Number of pixels a ratio-`p` mask selects: `round(p * pixels)`, ties to even.
pub fn mask_pixel_count(p: f64, pixels: usize) -> usize {
    (p * pixels as f64).round_ties_even() as usize
}

/// Selects the `round(p * H * W)` most salient pixels; ties go to the lower
/// row-major index.
pub fn top_p_mask(sal: &Grid, p: f64) -> Result<Mask> {
    if sal.channels() != 1 {
        return Err(DrcError::invalid("saliency map must have one channel"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(DrcError::invalid(format!("mask ratio {p} outside [0, 1]")));
    }
    let n = sal.len();
    let k = mask_pixel_count(p, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sal.data()[b].total_cmp(&sal.data()[a]).then(a.cmp(&b)));
    let mut bits = vec![false; n];
    for &i in &order[..k] {
        bits[i] = true;
    }
    Mask::new(sal.height(), sal.width(), bits)
}

fn default_noise_std() -> f64 {
    1.0
}
fn default_blur_radius() -> usize {
    2
}
fn default_blur_sigma() -> f64 {
    1.5
}
fn default_streaks() -> usize {
    8
}
fn default_angle() -> f64 {
    60.0
}
fn default_intensity() -> f64 {
    1.0
}
fn default_factor() -> usize {
    2
}

/// A degradation operator and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DegradationSpec {
    Noise {
        #[serde(default = "default_noise_std")]
        std: f64,
        #[serde(default)]
        seed: u64,
    },
    Blur {
        #[serde(default = "default_blur_radius")]
        radius: usize,
        #[serde(default = "default_blur_sigma")]
        sigma: f64,
    },
    Rain {
        #[serde(default = "default_streaks")]
        streaks: usize,
        /// Streak length in pixels; 0 picks half the larger image side.
        #[serde(default)]
        length: usize,
        #[serde(default = "default_angle")]
        angle_deg: f64,
        #[serde(default = "default_intensity")]
        intensity: f64,
        #[serde(default)]
        seed: u64,
    },
    Inpaint {
        #[serde(default)]
        fill: f64,
    },
    Downup {
        #[serde(default = "default_factor")]
        factor: usize,
    },
}

impl DegradationSpec {
    pub fn noise() -> Self {
        DegradationSpec::Noise {
            std: default_noise_std(),
            seed: 0,
        }
    }

    pub fn blur() -> Self {
        DegradationSpec::Blur {
            radius: default_blur_radius(),
            sigma: default_blur_sigma(),
        }
    }

    pub fn rain() -> Self {
        DegradationSpec::Rain {
            streaks: default_streaks(),
            length: 0,
            angle_deg: default_angle(),
            intensity: default_intensity(),
            seed: 0,
        }
    }

    pub fn inpaint() -> Self {
        DegradationSpec::Inpaint { fill: 0.0 }
    }

    pub fn downup() -> Self {
        DegradationSpec::Downup {
            factor: default_factor(),
        }
    }

    /// The five default tasks: denoise, deblur, derain, inpaint, super-resolution.
    pub fn all_defaults() -> Vec<Self> {
        vec![
            Self::noise(),
            Self::blur(),
            Self::rain(),
            Self::inpaint(),
            Self::downup(),
        ]
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DegradationSpec::Noise { .. } => "noise",
            DegradationSpec::Blur { .. } => "blur",
            DegradationSpec::Rain { .. } => "rain",
            DegradationSpec::Inpaint { .. } => "inpaint",
            DegradationSpec::Downup { .. } => "downup",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DrcError::invalid(msg));
        match *self {
            DegradationSpec::Noise { std, .. } if !(std >= 0.0 && std.is_finite()) => {
                bad(format!("noise std must be non-negative, got {std}"))
            }
            DegradationSpec::Blur { sigma, .. } if !(sigma > 0.0 && sigma.is_finite()) => {
                bad(format!("blur sigma must be positive, got {sigma}"))
            }
            DegradationSpec::Rain {
                angle_deg,
                intensity,
                ..
            } if !(angle_deg.is_finite() && intensity.is_finite()) => {
                bad("rain parameters must be finite".into())
            }
            DegradationSpec::Inpaint { fill } if !fill.is_finite() => {
                bad("inpaint fill must be finite".into())
            }
            DegradationSpec::Downup { factor: 0 } => bad("downup factor must be positive".into()),
            _ => Ok(()),
        }
    }
}

/// Applies `spec` to the whole image; random kinds draw from `(seed, 0)`.
pub fn degrade_full(x: &Grid, spec: &DegradationSpec) -> Result<Grid> {
    degrade_full_stream(x, spec, 0)
}

/// As [`degrade_full`], with random kinds drawing from stream `stream` of
/// their seed so each sample gets independent noise.
pub fn degrade_full_stream(x: &Grid, spec: &DegradationSpec, stream: u64) -> Result<Grid> {
    spec.validate()?;
    let out = match *spec {
        DegradationSpec::Noise { std, seed } => {
            if std == 0.0 {
                return Ok(x.clone());
            }
            let mut rng = SeededRng::new(seed, stream);
            let data = x
                .data()
                .iter()
                .map(|v| v + std * rng.standard_normal())
                .collect();
            x.with_data(data)
        }
        DegradationSpec::Blur { radius, sigma } => gaussian_blur(x, radius, sigma)?,
        DegradationSpec::Rain {
            streaks,
            length,
            angle_deg,
            intensity,
            seed,
        } => rain(
            x,
            streaks,
            length,
            angle_deg,
            intensity,
            &mut SeededRng::new(seed, stream),
        ),
        DegradationSpec::Inpaint { fill } => x.with_data(vec![fill; x.len()]),
        DegradationSpec::Downup { factor } => downup(x, factor)?,
    };
    checked(out, "degrade_full")
}

fn gaussian_blur(x: &Grid, radius: usize, sigma: f64) -> Result<Grid> {
    let (h, w, ch) = x.shape();
    if radius >= h.min(w) {
        return Err(DrcError::invalid(format!(
            "blur radius {radius} must be below the smaller image side {}",
            h.min(w)
        )));
    }
    let r = radius as isize;
    let mut kernel: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let src = x.data();
    let mut tmp = vec![0.0; src.len()];
    for row in 0..h {
        for col in 0..w {
            for c in 0..ch {
                tmp[x.index(row, col, c)] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| {
                        wt * src[x.index(row, clamp(col as isize + k as isize - r, w), c)]
                    })
                    .sum();
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for row in 0..h {
        for col in 0..w {
            for c in 0..ch {
                out[x.index(row, col, c)] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| {
                        wt * tmp[x.index(clamp(row as isize + k as isize - r, h), col, c)]
                    })
                    .sum();
            }
        }
    }
    Ok(x.with_data(out))
}

fn rain(
    x: &Grid,
    streaks: usize,
    length: usize,
    angle_deg: f64,
    intensity: f64,
    rng: &mut SeededRng,
) -> Grid {
    let (h, w, ch) = x.shape();
    let length = if length == 0 {
        (h.max(w) / 2).max(1)
    } else {
        length
    };
    let (dr, dc) = {
        let a = angle_deg.to_radians();
        (a.sin(), a.cos())
    };
    let mut hit = BTreeSet::new();
    for _ in 0..streaks {
        let r0 = rng.uniform() * h as f64;
        let c0 = rng.uniform() * w as f64;
        for k in 0..length {
            let r = (r0 + k as f64 * dr).floor();
            let c = (c0 + k as f64 * dc).floor();
            if r >= 0.0 && c >= 0.0 && (r as usize) < h && (c as usize) < w {
                hit.insert(r as usize * w + c as usize);
            }
        }
    }
    let mut data = x.data().to_vec();
    for p in hit {
        for c in 0..ch {
            data[p * ch + c] += intensity;
        }
    }
    x.with_data(data)
}

fn downup(x: &Grid, factor: usize) -> Result<Grid> {
    let (h, w, ch) = x.shape();
    if h % factor != 0 || w % factor != 0 {
        return Err(DrcError::invalid(format!(
            "downup factor {factor} does not divide {h}x{w}"
        )));
    }
    let mut out = vec![0.0; x.len()];
    let area = (factor * factor) as f64;
    for br in 0..h / factor {
        for bc in 0..w / factor {
            for c in 0..ch {
                let mut sum = 0.0;
                for r in br * factor..(br + 1) * factor {
                    for cc in bc * factor..(bc + 1) * factor {
                        sum += x.get(r, cc, c);
                    }
                }
                let mean = sum / area;
                for r in br * factor..(br + 1) * factor {
                    for cc in bc * factor..(bc + 1) * factor {
                        out[x.index(r, cc, c)] = mean;
                    }
                }
            }
        }
    }
    Ok(x.with_data(out))
}

/// `M * x_lq + (1 - M) * x` by selection, so unmasked pixels are bit-identical to `x`.
pub fn compose_degraded(x: &Grid, x_lq: &Grid, m: &Mask) -> Result<Grid> {
    x.ensure_same_shape(x_lq)?;
    m.check_grid(x)?;
    Ok(select(m, x_lq, x))
}

/// Masked pixels from `inside`, the rest from `outside`. Shapes must match.
pub(crate) fn select(m: &Mask, inside: &Grid, outside: &Grid) -> Grid {
    let ch = inside.channels();
    let data = inside
        .data()
        .chunks_exact(ch)
        .zip(outside.data().chunks_exact(ch))
        .zip(m.bits())
        .flat_map(|((a, b), &set)| if set { a } else { b }.iter().copied())
        .collect();
    inside.with_data(data)
}
