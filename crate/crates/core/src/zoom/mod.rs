//! Differentiable crop-and-zoom over 2-D activation grids.
//!
//! Coordinates are normalized: pixel `(i, j)` of an `H × W` grid has its
//! center at `((j + 0.5) / W, (i + 0.5) / H)`, with `z_x` running along
//! columns and `z_y` along rows. A zoom square is described by its center and
//! side length in these units.

mod backward;
mod bilinear;
mod extractor;
mod mask;
mod optimize;
mod search;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZslError};
use crate::scalar::Scalar;

pub use backward::{zoom_backward, zoom_forward, ZoomGradient};
pub use bilinear::bilinear_zoom;
pub use extractor::{BlockMeanPooling, DifferentiableFeatureExtractor, RandomLinearMap};
pub use mask::{apply_mask, soft_mask};
pub use optimize::{optimize_zoom, score_and_gradient, ZoomOptConfig, ZoomStep, ZoomTrajectory};
pub use search::{best_window, window_search, WindowMatch, DEFAULT_WINDOW_FRAC};

/// Smallest allowed side length; the upsampling factor `1 / z_s` diverges at 0.
pub const MIN_SIDE: f64 = 0.05;

/// Open-interval margin used when clamping centers after an update.
const CENTER_MARGIN: f64 = 1e-6;

/// Center `(z_x, z_y)` and side `z_s` of a square crop, all normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoomParams<T> {
    pub z_x: T,
    pub z_y: T,
    pub z_s: T,
}

impl<T: Scalar> ZoomParams<T> {
    pub fn new(z_x: T, z_y: T, z_s: T) -> Result<Self> {
        let p = Self { z_x, z_y, z_s };
        p.validate()?;
        Ok(p)
    }

    /// Whole-grid zoom: centered, side 1.
    pub fn full() -> Self {
        Self {
            z_x: T::lit(0.5),
            z_y: T::lit(0.5),
            z_s: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open = |v: T| v > T::zero() && v < T::one();
        if !open(self.z_x) || !open(self.z_y) {
            return Err(ZslError::invalid(format!(
                "zoom center ({}, {}) must lie in (0, 1)",
                self.z_x, self.z_y
            )));
        }
        if !(self.z_s >= T::lit(MIN_SIDE) && self.z_s <= T::one()) {
            return Err(ZslError::invalid(format!(
                "zoom side {} must lie in [{MIN_SIDE}, 1]",
                self.z_s
            )));
        }
        Ok(())
    }

    /// Projects arbitrary values back into the valid ranges.
    pub fn clamped(self) -> Self {
        let m = T::lit(CENTER_MARGIN);
        Self {
            z_x: self.z_x.max(m).min(T::one() - m),
            z_y: self.z_y.max(m).min(T::one() - m),
            z_s: self.z_s.max(T::lit(MIN_SIDE)).min(T::one()),
        }
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.z_x, self.z_y, self.z_s]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Sigmoid steepness for the soft mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskConfig {
    pub steepness: f64,
    /// Scale the steepness by `min(H, W) / 14` so the transition width stays
    /// fixed relative to the grid.
    pub rescale: bool,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            steepness: 10.0,
            rescale: true,
        }
    }
}

/// Grid size at which `steepness` is used unscaled.
const REFERENCE_GRID: f64 = 14.0;

impl MaskConfig {
    /// Fixed steepness, no resolution scaling.
    pub fn fixed(steepness: f64) -> Self {
        Self {
            steepness,
            rescale: false,
        }
    }

    pub fn effective_steepness(&self, height: usize, width: usize) -> f64 {
        if self.rescale {
            self.steepness * height.min(width) as f64 / REFERENCE_GRID
        } else {
            self.steepness
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.steepness > 0.0 && self.steepness.is_finite()) {
            return Err(ZslError::invalid(format!(
                "mask steepness must be positive, got {}",
                self.steepness
            )));
        }
        Ok(())
    }
}

/// `H × W × C` grid of activations stored row-major, channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> ImageGrid<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(ZslError::invalid("image grid dimensions must be positive"));
        }
        if data.len() != height * width * channels {
            return Err(ZslError::invalid(format!(
                "image grid data has {} values, expected {height}x{width}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ZslError::invalid("image grid has non-finite values"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![T::zero(); height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    data.push(f(i, j, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
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

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, c: usize) -> usize {
        (i * self.width + j) * self.channels + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> T {
        self.data[self.offset(i, j, c)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: T) {
        let o = self.offset(i, j, c);
        self.data[o] = v;
    }

    #[inline]
    pub(crate) fn add(&mut self, i: usize, j: usize, c: usize, v: T) {
        let o = self.offset(i, j, c);
        self.data[o] += v;
    }

    pub fn pixel(&self, i: usize, j: usize) -> &[T] {
        let o = self.offset(i, j, 0);
        &self.data[o..o + self.channels]
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Single-channel view of channel `c` as rows.
    pub fn channel_rows(&self, c: usize) -> Vec<Vec<T>> {
        (0..self.height)
            .map(|i| (0..self.width).map(|j| self.get(i, j, c)).collect())
            .collect()
    }
}

/// Continuous crop mask `M(i, j)` over an `H × W` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask<T> {
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Scalar> SoftMask<T> {
    /// Wraps explicit mask values, which must lie in `[0, 1]`.
    pub fn from_values(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(ZslError::invalid(format!(
                "mask has {} values, expected {height}x{width}",
                values.len()
            )));
        }
        if values.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(ZslError::invalid("mask values must lie in [0, 1]"));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.width + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.values.chunks(self.width).map(<[T]>::to_vec).collect()
    }
}
