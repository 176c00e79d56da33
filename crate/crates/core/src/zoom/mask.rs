use super::{ImageGrid, MaskConfig, SoftMask, ZoomParams};
use crate::error::{Result, ZslError};
use crate::scalar::Scalar;

/// `σ(a) − σ(b)` for `a > b`, evaluated on whichever tail keeps precision.
#[inline]
fn sigmoid_diff<T: Scalar>(a: T, b: T) -> T {
    if a + b > T::zero() {
        (-b).sigmoid() - (-a).sigmoid()
    } else {
        a.sigmoid() - b.sigmoid()
    }
}

#[inline]
fn sigmoid_slope<T: Scalar>(t: T) -> T {
    t.sigmoid() * (-t).sigmoid()
}

/// One-dimensional mask profile along an axis with `n` pixels, together with
/// its derivatives w.r.t. the center and side length.
pub(super) struct AxisMask<T> {
    pub value: Vec<T>,
    pub d_center: Vec<T>,
    pub d_side: Vec<T>,
}

pub(super) fn axis_mask<T: Scalar>(n: usize, center: T, side: T, k: T) -> AxisMask<T> {
    let half = T::lit(0.5) * side;
    let mut value = Vec::with_capacity(n);
    let mut d_center = Vec::with_capacity(n);
    let mut d_side = Vec::with_capacity(n);
    let nf = T::lit(n as f64);
    for p in 0..n {
        let u = (T::lit(p as f64) + T::lit(0.5)) / nf;
        let a = k * (u - center + half);
        let b = k * (u - center - half);
        let sa = sigmoid_slope(a);
        let sb = sigmoid_slope(b);
        value.push(sigmoid_diff(a, b));
        d_center.push(k * (sb - sa));
        d_side.push(T::lit(0.5) * k * (sa + sb));
    }
    AxisMask {
        value,
        d_center,
        d_side,
    }
}

pub(super) fn check_mask_inputs<T: Scalar>(
    zoom: &ZoomParams<T>,
    cfg: &MaskConfig,
    height: usize,
    width: usize,
) -> Result<()> {
    zoom.validate()?;
    cfg.validate()?;
    if height < 2 || width < 2 {
        return Err(ZslError::invalid(format!(
            "soft mask needs a grid of at least 2x2, got {height}x{width}"
        )));
    }
    Ok(())
}

/// Separable sigmoid-difference mask `M(i, j) = M_x(u_j) · M_y(v_i)`.
pub fn soft_mask<T: Scalar>(
    zoom: &ZoomParams<T>,
    cfg: &MaskConfig,
    height: usize,
    width: usize,
) -> Result<SoftMask<T>> {
    check_mask_inputs(zoom, cfg, height, width)?;
    let k = T::lit(cfg.effective_steepness(height, width));
    let mx = axis_mask(width, zoom.z_x, zoom.z_s, k);
    let my = axis_mask(height, zoom.z_y, zoom.z_s, k);
    let mut values = Vec::with_capacity(height * width);
    for &y in &my.value {
        for &x in &mx.value {
            values.push(y * x);
        }
    }
    Ok(SoftMask {
        height,
        width,
        values,
    })
}

/// Element-wise product of every channel with the mask.
pub fn apply_mask<T: Scalar>(image: &ImageGrid<T>, mask: &SoftMask<T>) -> Result<ImageGrid<T>> {
    if image.height() != mask.height() || image.width() != mask.width() {
        return Err(ZslError::invalid(format!(
            "mask is {}x{} but image is {}x{}",
            mask.height(),
            mask.width(),
            image.height(),
            image.width()
        )));
    }
    Ok(ImageGrid::from_fn(
        image.height(),
        image.width(),
        image.channels(),
        |i, j, c| image.get(i, j, c) * mask.get(i, j),
    ))
}
