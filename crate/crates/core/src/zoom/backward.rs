use super::bilinear::{axis_samples, check_zoom_output};
use super::mask::{axis_mask, check_mask_inputs};
use super::{ImageGrid, MaskConfig, ZoomParams};
use crate::error::{Result, ZslError};
use crate::scalar::Scalar;

/// Partial derivatives w.r.t. `(z_x, z_y, z_s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoomGradient<T> {
    pub z_x: T,
    pub z_y: T,
    pub z_s: T,
}

impl<T: Scalar> ZoomGradient<T> {
    pub fn as_array(&self) -> [T; 3] {
        [self.z_x, self.z_y, self.z_s]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Soft-crops `image` at its native resolution and zooms the region onto an
/// `out_h × out_w` grid.
pub fn zoom_forward<T: Scalar>(
    image: &ImageGrid<T>,
    zoom: &ZoomParams<T>,
    cfg: &MaskConfig,
    out_h: usize,
    out_w: usize,
) -> Result<ImageGrid<T>> {
    let mask = super::soft_mask(zoom, cfg, image.height(), image.width())?;
    let crop = super::apply_mask(image, &mask)?;
    super::bilinear_zoom(&crop, zoom, out_h, out_w)
}

/// Gradient of `⟨upstream, zoom_forward(image, zoom)⟩` w.r.t. the zoom
/// parameters. The output size is taken from `upstream`.
///
/// The zoom parameters enter twice: through the mask values that scale each
/// source pixel, and through the bilinear sampling positions. Both paths are
/// differentiated exactly; at integral sampling positions the right-hand
/// derivative of the interpolant is used.
pub fn zoom_backward<T: Scalar>(
    image: &ImageGrid<T>,
    zoom: &ZoomParams<T>,
    cfg: &MaskConfig,
    upstream: &ImageGrid<T>,
) -> Result<ZoomGradient<T>> {
    let (h, w, ch) = image.shape();
    check_mask_inputs(zoom, cfg, h, w)?;
    let (out_h, out_w, up_ch) = upstream.shape();
    check_zoom_output(out_h, out_w)?;
    if up_ch != ch {
        return Err(ZslError::invalid(format!(
            "upstream has {up_ch} channels, image has {ch}"
        )));
    }

    let k = T::lit(cfg.effective_steepness(h, w));
    let mx = axis_mask(w, zoom.z_x, zoom.z_s, k);
    let my = axis_mask(h, zoom.z_y, zoom.z_s, k);
    let crop = ImageGrid::from_fn(h, w, ch, |i, j, c| {
        image.get(i, j, c) * my.value[i] * mx.value[j]
    });

    let rows = axis_samples(h, out_h, zoom.z_y, zoom.z_s);
    let cols = axis_samples(w, out_w, zoom.z_x, zoom.z_s);

    let mut g = ZoomGradient {
        z_x: T::zero(),
        z_y: T::zero(),
        z_s: T::zero(),
    };
    // adjoint of the resampling w.r.t. the cropped grid
    let mut crop_grad = ImageGrid::zeros(h, w, ch);

    for (i, r) in rows.iter().enumerate() {
        let wr = [T::one() - r.frac, r.frac];
        for (j, c) in cols.iter().enumerate() {
            let wc = [T::one() - c.frac, c.frac];
            for chn in 0..ch {
                let u = upstream.get(i, j, chn);
                if u == T::zero() {
                    continue;
                }
                let ll = crop.get(r.lo, c.lo, chn);
                let lh = crop.get(r.lo, c.hi, chn);
                let hl = crop.get(r.hi, c.lo, chn);
                let hh = crop.get(r.hi, c.hi, chn);

                let dv_drow = wc[0] * (hl - ll) + wc[1] * (hh - lh);
                let dv_dcol = wr[0] * (lh - ll) + wr[1] * (hh - hl);
                g.z_y += u * dv_drow * r.dp_center;
                g.z_x += u * dv_dcol * c.dp_center;
                g.z_s += u * (dv_drow * r.dp_side + dv_dcol * c.dp_side);

                crop_grad.add(r.lo, c.lo, chn, u * wr[0] * wc[0]);
                crop_grad.add(r.lo, c.hi, chn, u * wr[0] * wc[1]);
                crop_grad.add(r.hi, c.lo, chn, u * wr[1] * wc[0]);
                crop_grad.add(r.hi, c.hi, chn, u * wr[1] * wc[1]);
            }
        }
    }

    for i in 0..h {
        for j in 0..w {
            let mut acc = T::zero();
            for chn in 0..ch {
                acc += crop_grad.get(i, j, chn) * image.get(i, j, chn);
            }
            if acc == T::zero() {
                continue;
            }
            g.z_x += acc * my.value[i] * mx.d_center[j];
            g.z_y += acc * my.d_center[i] * mx.value[j];
            g.z_s += acc * (my.d_side[i] * mx.value[j] + my.value[i] * mx.d_side[j]);
        }
    }

    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{central_diff, rel_err};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn objective(img: &ImageGrid<f64>, z: [f64; 3], cfg: &MaskConfig, up: &ImageGrid<f64>) -> f64 {
        let zoom = ZoomParams {
            z_x: z[0],
            z_y: z[1],
            z_s: z[2],
        };
        let out = zoom_forward(img, &zoom, cfg, up.height(), up.width()).unwrap();
        out.as_slice()
            .iter()
            .zip(up.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let img = ImageGrid::from_fn(6, 6, 2, |i, j, c| (i + 2 * j + c) as f64);
        let up = ImageGrid::zeros(5, 5, 2);
        let g = zoom_backward(
            &img,
            &ZoomParams::new(0.4, 0.6, 0.5).unwrap(),
            &MaskConfig::default(),
            &up,
        )
        .unwrap();
        assert_eq!(g.as_array(), [0.0; 3]);
    }

    #[test]
    fn symmetric_setup_has_no_center_gradient() {
        let n = 8;
        let img = ImageGrid::from_fn(n, n, 1, |i, j, _| {
            let di = i as f64 - 3.5;
            let dj = j as f64 - 3.5;
            (-(di * di + dj * dj) / 6.0).exp()
        });
        let up = ImageGrid::from_fn(n, n, 1, |_, _, _| 1.0);
        // side 0.55 keeps every sampling position off the integer kinks
        let g = zoom_backward(
            &img,
            &ZoomParams::new(0.5, 0.5, 0.55).unwrap(),
            &MaskConfig::default(),
            &up,
        )
        .unwrap();
        assert!(g.z_x.abs() < 1e-8, "{g:?}");
        assert!(g.z_y.abs() < 1e-8, "{g:?}");
        assert!(g.z_s.abs() > 1e-6);
    }

    #[test]
    fn matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let (h, w, c) = (
                rng.random_range(3..9),
                rng.random_range(3..9),
                rng.random_range(1..3),
            );
            let img = ImageGrid::from_fn(h, w, c, |_, _, _| rng.random_range(-1.0..1.0));
            let (oh, ow) = (rng.random_range(2..8), rng.random_range(2..8));
            let up = ImageGrid::from_fn(oh, ow, c, |_, _, _| rng.random_range(-1.0..1.0));
            let z = [
                rng.random_range(0.3..0.7),
                rng.random_range(0.3..0.7),
                rng.random_range(0.3..0.9),
            ];
            let cfg = MaskConfig::default();
            let g = zoom_backward(
                &img,
                &ZoomParams {
                    z_x: z[0],
                    z_y: z[1],
                    z_s: z[2],
                },
                &cfg,
                &up,
            )
            .unwrap()
            .as_array();
            let fd = central_diff(|p| objective(&img, [p[0], p[1], p[2]], &cfg, &up), &z, 1e-5);
            for a in 0..3 {
                assert!(
                    rel_err(g[a], fd[a]) < 1e-4,
                    "axis {a}: {} vs {}",
                    g[a],
                    fd[a]
                );
            }
        }
    }
}
