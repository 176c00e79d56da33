use super::{ImageGrid, ZoomParams, MIN_SIDE};
use crate::error::{Result, ZslError};
use crate::scalar::Scalar;

/// Default window side as a fraction of the shorter grid side.
pub const DEFAULT_WINDOW_FRAC: f64 = 0.5;

/// Best-scoring square window found by [`best_window`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowMatch<T> {
    pub row: usize,
    pub col: usize,
    pub side: usize,
    /// Channel-summed activation inside the window.
    pub sum: T,
}

impl<T: Scalar> WindowMatch<T> {
    /// Normalized zoom parameters for this window on an `height × width` grid.
    pub fn to_zoom(&self, height: usize, width: usize) -> ZoomParams<T> {
        let half = self.side as f64 / 2.0;
        let side = (self.side as f64 / height.min(width) as f64).clamp(MIN_SIDE, 1.0);
        ZoomParams {
            z_x: T::lit((self.col as f64 + half) / width as f64),
            z_y: T::lit((self.row as f64 + half) / height as f64),
            z_s: T::lit(side),
        }
    }
}

/// Window side length in pixels for a given fraction.
pub fn window_side(height: usize, width: usize, window_frac: f64) -> Result<usize> {
    if !(window_frac > 0.0 && window_frac <= 1.0) {
        return Err(ZslError::invalid(format!(
            "window fraction must lie in (0, 1], got {window_frac}"
        )));
    }
    let side = (window_frac * height.min(width) as f64).ceil() as usize;
    if side == 0 || side > height || side > width {
        return Err(ZslError::invalid(format!(
            "window of side {side} does not fit a {height}x{width} grid"
        )));
    }
    Ok(side)
}

/// Slides a square window with stride 1 over the grid and returns the
/// position with the largest channel-summed activation. Ties go to the
/// smallest `(row, col)`.
pub fn best_window<T: Scalar>(grid: &ImageGrid<T>, window_frac: f64) -> Result<WindowMatch<T>> {
    let (h, w, _) = grid.shape();
    let side = window_side(h, w, window_frac)?;

    // summed-area table with a zero border row/column
    let stride = w + 1;
    let mut sat = vec![T::zero(); (h + 1) * stride];
    for i in 0..h {
        let mut row_sum = T::zero();
        for j in 0..w {
            row_sum += grid.pixel(i, j).iter().copied().sum::<T>();
            sat[(i + 1) * stride + j + 1] = sat[i * stride + j + 1] + row_sum;
        }
    }
    let window = |r: usize, c: usize| {
        sat[(r + side) * stride + c + side]
            - sat[r * stride + c + side]
            - sat[(r + side) * stride + c]
            + sat[r * stride + c]
    };

    let mut best = WindowMatch {
        row: 0,
        col: 0,
        side,
        sum: window(0, 0),
    };
    for r in 0..=(h - side) {
        for c in 0..=(w - side) {
            let s = window(r, c);
            if s > best.sum {
                best = WindowMatch {
                    row: r,
                    col: c,
                    side,
                    sum: s,
                };
            }
        }
    }
    Ok(best)
}

/// Highest-activation square window converted to zoom parameters.
pub fn window_search<T: Scalar>(
    feature_grid: &ImageGrid<T>,
    window_frac: f64,
) -> Result<ZoomParams<T>> {
    let m = best_window(feature_grid, window_frac)?;
    Ok(m.to_zoom(feature_grid.height(), feature_grid.width()))
}
