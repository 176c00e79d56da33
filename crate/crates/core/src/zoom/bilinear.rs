use super::{ImageGrid, ZoomParams};
use crate::error::{Result, ZslError};
use crate::scalar::Scalar;

/// Where one output row (or column) samples the source grid.
///
/// The continuous source coordinate is
/// `p = (center − side/2 + side·(o + 0.5)/n_out)·n_in − 0.5`; the sample blends
/// integral index `⌊p⌋` and `⌊p⌋ + 1` with weights `1 − {p}` and `{p}`,
/// both clamped to the grid border.
#[derive(Debug, Clone, Copy)]
pub(super) struct AxisSample<T> {
    pub lo: usize,
    pub hi: usize,
    pub frac: T,
    /// `∂p/∂center`
    pub dp_center: T,
    /// `∂p/∂side`
    pub dp_side: T,
}

pub(super) fn axis_samples<T: Scalar>(
    n_in: usize,
    n_out: usize,
    center: T,
    side: T,
) -> Vec<AxisSample<T>> {
    let nin = T::lit(n_in as f64);
    let nout = T::lit(n_out as f64);
    let half = T::lit(0.5);
    let origin = center - half * side;
    let last = (n_in - 1) as i64;
    (0..n_out)
        .map(|o| {
            let rel = (T::lit(o as f64) + half) / nout;
            let p = (origin + side * rel) * nin - half;
            let base = p.floor();
            let frac = p - base;
            let base = base.to_i64().unwrap_or(0);
            AxisSample {
                lo: base.clamp(0, last) as usize,
                hi: (base + 1).clamp(0, last) as usize,
                frac,
                dp_center: nin,
                dp_side: nin * (rel - half),
            }
        })
        .collect()
}

pub(super) fn check_zoom_output(out_h: usize, out_w: usize) -> Result<()> {
    if out_h < 2 || out_w < 2 {
        return Err(ZslError::invalid(format!(
            "zoom output must be at least 2x2, got {out_h}x{out_w}"
        )));
    }
    Ok(())
}

/// Resamples the square region described by `zoom` onto an `out_h × out_w`
/// grid with bilinear interpolation. The upsampling factor is `1 / z_s`.
pub fn bilinear_zoom<T: Scalar>(
    crop: &ImageGrid<T>,
    zoom: &ZoomParams<T>,
    out_h: usize,
    out_w: usize,
) -> Result<ImageGrid<T>> {
    zoom.validate()?;
    check_zoom_output(out_h, out_w)?;
    let rows = axis_samples(crop.height(), out_h, zoom.z_y, zoom.z_s);
    let cols = axis_samples(crop.width(), out_w, zoom.z_x, zoom.z_s);
    Ok(resample(crop, &rows, &cols))
}

pub(super) fn resample<T: Scalar>(
    src: &ImageGrid<T>,
    rows: &[AxisSample<T>],
    cols: &[AxisSample<T>],
) -> ImageGrid<T> {
    let channels = src.channels();
    let mut out = ImageGrid::zeros(rows.len(), cols.len(), channels);
    for (i, r) in rows.iter().enumerate() {
        let wr = [T::one() - r.frac, r.frac];
        for (j, c) in cols.iter().enumerate() {
            let wc = [T::one() - c.frac, c.frac];
            for ch in 0..channels {
                let v = wr[0] * (wc[0] * src.get(r.lo, c.lo, ch) + wc[1] * src.get(r.lo, c.hi, ch))
                    + wr[1] * (wc[0] * src.get(r.hi, c.lo, ch) + wc[1] * src.get(r.hi, c.hi, ch));
                out.set(i, j, ch, v);
            }
        }
    }
    out
}
