use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ImageGrid;
use crate::error::{Result, ZslError};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Maps a grid to a feature vector and back-propagates through it.
///
/// Stands in for a convolutional backbone so that gradients from the
/// embedding can flow into the zoom parameters.
pub trait DifferentiableFeatureExtractor<T: Scalar> {
    fn extract(&self, grid: &ImageGrid<T>) -> Result<Vec<T>>;

    /// Gradient of `⟨upstream, extract(grid)⟩` w.r.t. `grid`.
    fn backward(&self, grid: &ImageGrid<T>, upstream: &[T]) -> Result<ImageGrid<T>>;
}

/// Averages each channel over a `blocks_y × blocks_x` partition of the grid.
/// Output index is `(by * blocks_x + bx) * channels + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockMeanPooling {
    pub blocks_y: usize,
    pub blocks_x: usize,
}

impl BlockMeanPooling {
    pub fn new(blocks_y: usize, blocks_x: usize) -> Self {
        Self { blocks_y, blocks_x }
    }

    pub fn output_dim(&self, channels: usize) -> usize {
        self.blocks_y * self.blocks_x * channels
    }

    fn check<T: Scalar>(&self, grid: &ImageGrid<T>) -> Result<()> {
        if self.blocks_y == 0
            || self.blocks_x == 0
            || self.blocks_y > grid.height()
            || self.blocks_x > grid.width()
        {
            return Err(ZslError::invalid(format!(
                "{}x{} pooling blocks do not fit a {}x{} grid",
                self.blocks_y,
                self.blocks_x,
                grid.height(),
                grid.width()
            )));
        }
        Ok(())
    }

    fn block_of(p: usize, n: usize, blocks: usize) -> usize {
        p * blocks / n
    }

    fn block_sizes(n: usize, blocks: usize) -> Vec<usize> {
        let mut sizes = vec![0; blocks];
        for p in 0..n {
            sizes[Self::block_of(p, n, blocks)] += 1;
        }
        sizes
    }
}

impl<T: Scalar> DifferentiableFeatureExtractor<T> for BlockMeanPooling {
    fn extract(&self, grid: &ImageGrid<T>) -> Result<Vec<T>> {
        self.check(grid)?;
        let (h, w, ch) = grid.shape();
        let rows = Self::block_sizes(h, self.blocks_y);
        let cols = Self::block_sizes(w, self.blocks_x);
        let mut out = vec![T::zero(); self.output_dim(ch)];
        for i in 0..h {
            let by = Self::block_of(i, h, self.blocks_y);
            for j in 0..w {
                let bx = Self::block_of(j, w, self.blocks_x);
                let base = (by * self.blocks_x + bx) * ch;
                for (c, &v) in grid.pixel(i, j).iter().enumerate() {
                    out[base + c] += v;
                }
            }
        }
        for (block, chunk) in out.chunks_mut(ch).enumerate() {
            let count = T::lit((rows[block / self.blocks_x] * cols[block % self.blocks_x]) as f64);
            chunk.iter_mut().for_each(|v| *v /= count);
        }
        Ok(out)
    }

    fn backward(&self, grid: &ImageGrid<T>, upstream: &[T]) -> Result<ImageGrid<T>> {
        self.check(grid)?;
        let (h, w, ch) = grid.shape();
        if upstream.len() != self.output_dim(ch) {
            return Err(ZslError::invalid(format!(
                "pooling upstream has length {}, expected {}",
                upstream.len(),
                self.output_dim(ch)
            )));
        }
        let rows = Self::block_sizes(h, self.blocks_y);
        let cols = Self::block_sizes(w, self.blocks_x);
        Ok(ImageGrid::from_fn(h, w, ch, |i, j, c| {
            let by = Self::block_of(i, h, self.blocks_y);
            let bx = Self::block_of(j, w, self.blocks_x);
            upstream[(by * self.blocks_x + bx) * ch + c] / T::lit((rows[by] * cols[bx]) as f64)
        }))
    }
}

/// Fixed seeded linear map from a flattened `H × W × C` grid to `d` features.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomLinearMap<T> {
    shape: (usize, usize, usize),
    /// `d × (H·W·C)`
    weights: DenseMatrix<T>,
}

impl<T: Scalar> RandomLinearMap<T> {
    /// Entries drawn uniformly from `[-1/√n, 1/√n]` with `n = H·W·C`.
    pub fn new(shape: (usize, usize, usize), out_dim: usize, seed: u64) -> Self {
        let n = shape.0 * shape.1 * shape.2;
        let bound = 1.0 / (n.max(1) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights =
            DenseMatrix::from_fn(out_dim, n, |_, _| T::lit(rng.random_range(-bound..=bound)));
        Self { shape, weights }
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    fn check(&self, grid: &ImageGrid<T>) -> Result<()> {
        if grid.shape() != self.shape {
            return Err(ZslError::invalid(format!(
                "linear map expects a {:?} grid, got {:?}",
                self.shape,
                grid.shape()
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> DifferentiableFeatureExtractor<T> for RandomLinearMap<T> {
    fn extract(&self, grid: &ImageGrid<T>) -> Result<Vec<T>> {
        self.check(grid)?;
        self.weights.matvec(grid.as_slice())
    }

    fn backward(&self, grid: &ImageGrid<T>, upstream: &[T]) -> Result<ImageGrid<T>> {
        self.check(grid)?;
        let flat = self.weights.tr_matvec(upstream)?;
        let (h, w, c) = self.shape;
        ImageGrid::new(h, w, c, flat)
    }
}
