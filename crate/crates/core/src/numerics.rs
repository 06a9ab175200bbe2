//! Dense image grids, reproducible Gaussian streams and distance helpers.
//!
//! Every other module passes images around as [`Grid`]: a row-major
//! `(row, col, channel)` array of `f64` in the model domain `[-1, 1]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DrcError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Grid {
    /// Builds a grid, rejecting zero dimensions, a wrong data length or
    /// non-finite values.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(DrcError::invalid(format!(
                "grid dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(DrcError::invalid(format!(
                "grid data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DrcError::NonFinite("Grid::new"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, 0.0)
    }

    /// A grid of zeros with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        self.with_data(vec![0.0; self.data.len()])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    /// Same shape, new data. Length and finiteness are the caller's contract.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col, channel)]
    }

    pub fn ensure_same_shape(&self, other: &Grid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(DrcError::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// Elementwise map; errors if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Grid> {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        checked(self.with_data(data), "Grid::map")
    }

    /// Elementwise binary combination of two same-shape grids.
    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        self.ensure_same_shape(other)?;
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        checked(self.with_data(data), "Grid::zip_map")
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &Grid, b: f64) -> Result<Grid> {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn squared_distance(&self, other: &Grid) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(sq_dist(&self.data, &other.data))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn checked(grid: Grid, what: &'static str) -> Result<Grid> {
    if grid.data.iter().all(|v| v.is_finite()) {
        Ok(grid)
    } else {
        Err(DrcError::NonFinite(what))
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A reproducible Gaussian stream keyed by `(seed, stream)`.
///
/// Each stream is an independent ChaCha8 stream, so the draws for one sample
/// never depend on how many values other samples consumed or on thread
/// scheduling.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        use rand::Rng;
        self.rng.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        use rand::Rng;
        self.rng.random_range(0..n)
    }
}

/// Draws an `h x w x c` grid of i.i.d. standard normals from `rng`.
pub fn gaussian_grid(rng: &mut SeededRng, h: usize, w: usize, c: usize) -> Result<Grid> {
    let n = h * w * c;
    let data = (0..n).map(|_| rng.standard_normal()).collect();
    Grid::new(h, w, c, data)
}

/// Gaussian grid shaped like `like`.
pub fn gaussian_like(rng: &mut SeededRng, like: &Grid) -> Grid {
    let data = (0..like.len()).map(|_| rng.standard_normal()).collect();
    like.with_data(data)
}

pub fn linf_distance(a: &Grid, b: &Grid) -> Result<f64> {
    a.ensure_same_shape(b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs())))
}

/// Mean absolute difference over all elements.
pub fn pixel_l1(a: &Grid, b: &Grid) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum();
    Ok(s / a.len() as f64)
}

/// Mean squared difference over all elements.
pub fn pixel_mse(a: &Grid, b: &Grid) -> Result<f64> {
    a.ensure_same_shape(b)?;
    Ok(sq_dist(&a.data, &b.data) / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64]) -> Grid {
        Grid::new(1, values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn construction_validates() {
        assert!(Grid::new(0, 1, 1, vec![]).is_err());
        assert!(Grid::new(1, 2, 1, vec![1.0]).is_err());
        assert!(matches!(
            Grid::new(1, 1, 1, vec![f64::NAN]),
            Err(DrcError::NonFinite(_))
        ));
        let g = Grid::from_fn(2, 3, 2, |r, c, ch| (r * 100 + c * 10 + ch) as f64).unwrap();
        assert_eq!(g.get(1, 2, 1), 121.0);
        assert_eq!(g.data()[g.index(1, 0, 1)], 101.0);
    }

    #[test]
    fn gaussian_grid_is_deterministic_per_stream() {
        let a = gaussian_grid(&mut SeededRng::new(7, 0), 2, 2, 1).unwrap();
        let b = gaussian_grid(&mut SeededRng::new(7, 0), 2, 2, 1).unwrap();
        assert_eq!(a.data(), b.data());
        let c = gaussian_grid(&mut SeededRng::new(7, 1), 2, 2, 1).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn stream_independent_of_other_streams() {
        let mut other = SeededRng::new(3, 0);
        for _ in 0..1000 {
            other.standard_normal();
        }
        let a = gaussian_grid(&mut SeededRng::new(3, 5), 4, 4, 1).unwrap();
        let b = gaussian_grid(&mut SeededRng::new(3, 5), 4, 4, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_moments() {
        let g = gaussian_grid(&mut SeededRng::new(11, 0), 1000, 1000, 1).unwrap();
        let n = g.len() as f64;
        let mean = g.mean();
        let var = g.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn linf_examples() {
        let a = row(&[0.0, 0.0]);
        let b = row(&[0.5, -0.25]);
        assert_eq!(linf_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(linf_distance(&a, &b).unwrap(), 0.5);
        let g1 = gaussian_grid(&mut SeededRng::new(1, 0), 3, 3, 1).unwrap();
        let g2 = gaussian_grid(&mut SeededRng::new(1, 1), 3, 3, 1).unwrap();
        let d = linf_distance(&g1, &g2).unwrap();
        assert!(d >= (g1.data()[0] - g2.data()[0]).abs());
        assert!(linf_distance(&a, &row(&[1.0])).is_err());
    }

    #[test]
    fn pixel_loss_examples() {
        let ones = row(&[1.0, 1.0]);
        let zeros = row(&[0.0, 0.0]);
        let half = row(&[1.0, 0.0]);
        assert_eq!(pixel_l1(&ones, &ones).unwrap(), 0.0);
        assert_eq!(pixel_mse(&ones, &ones).unwrap(), 0.0);
        assert_eq!(pixel_l1(&ones, &zeros).unwrap(), 1.0);
        assert_eq!(pixel_mse(&ones, &zeros).unwrap(), 1.0);
        assert_eq!(pixel_l1(&half, &zeros).unwrap(), 0.5);
        assert_eq!(pixel_mse(&half, &zeros).unwrap(), 0.5);
        assert!(pixel_mse(&ones, &Grid::zeros(2, 1, 1).unwrap()).is_err());
    }
}
