use serde::{Deserialize, Serialize};

use super::{
    zoom_backward, zoom_forward, DifferentiableFeatureExtractor, ImageGrid, MaskConfig, ZoomParams,
};
use crate::domain::{AttributeMatrix, ClassId, EmbeddingModel};
use crate::error::{Result, ZslError};
use crate::linalg::dot;
use crate::scalar::Scalar;

/// Gradient-ascent settings for [`optimize_zoom`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZoomOptConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub init: ZoomParams<f64>,
    pub mask: MaskConfig,
    /// Zoom output size; defaults to the input grid size.
    pub output_size: Option<(usize, usize)>,
}

impl Default for ZoomOptConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            learning_rate: 1e-2,
            init: ZoomParams {
                z_x: 0.5,
                z_y: 0.5,
                z_s: 0.5,
            },
            mask: MaskConfig::default(),
            output_size: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoomStep<T> {
    pub params: ZoomParams<T>,
    /// True-class compatibility score at `params`.
    pub score: T,
    /// `-score`, the quantity being minimized.
    pub loss: T,
}

/// Every iterate of the optimization, starting with the initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoomTrajectory<T> {
    pub steps: Vec<ZoomStep<T>>,
}

impl<T: Scalar> ZoomTrajectory<T> {
    pub fn initial(&self) -> &ZoomStep<T> {
        &self.steps[0]
    }

    pub fn last(&self) -> &ZoomStep<T> {
        self.steps
            .last()
            .expect("trajectory holds the initial step")
    }
}

/// Score and gradient of `⟨W_attᵀ φ(zoom(image)), a⟩` w.r.t. the zoom.
pub fn score_and_gradient<T, E>(
    image: &ImageGrid<T>,
    extractor: &E,
    w_att: &crate::linalg::DenseMatrix<T>,
    attr: &[T],
    zoom: &ZoomParams<T>,
    mask: &MaskConfig,
    out: (usize, usize),
) -> Result<(T, [T; 3])>
where
    T: Scalar,
    E: DifferentiableFeatureExtractor<T> + ?Sized,
{
    let zoomed = zoom_forward(image, zoom, mask, out.0, out.1)?;
    let feature = extractor.extract(&zoomed)?;
    if feature.len() != w_att.rows() {
        return Err(ZslError::invalid(format!(
            "extractor produced {} features, model expects {}",
            feature.len(),
            w_att.rows()
        )));
    }
    // ∂score/∂φ = W_att a
    let dphi = w_att.matvec(attr)?;
    let score = dot(&feature, &dphi);
    let upstream = extractor.backward(&zoomed, &dphi)?;
    let g = zoom_backward(image, zoom, mask, &upstream)?;
    Ok((score, g.as_array()))
}

/// Gradient ascent on the true-class compatibility score w.r.t. the zoom
/// parameters, clamping them to their valid ranges after every step.
pub fn optimize_zoom<T, E>(
    image: &ImageGrid<T>,
    extractor: &E,
    model: &EmbeddingModel<T>,
    attrs: &AttributeMatrix<T>,
    true_class: ClassId,
    opt: &ZoomOptConfig,
) -> Result<ZoomTrajectory<T>>
where
    T: Scalar,
    E: DifferentiableFeatureExtractor<T> + ?Sized,
{
    let attr = attrs
        .get(true_class)
        .ok_or_else(|| ZslError::invalid(format!("class {true_class} has no attribute row")))?;
    if attr.len() != model.att_dim() {
        return Err(ZslError::invalid(format!(
            "attribute dimension {} does not match model dimension {}",
            attr.len(),
            model.att_dim()
        )));
    }
    if !(opt.learning_rate >= 0.0 && opt.learning_rate.is_finite()) {
        return Err(ZslError::invalid(
            "zoom learning rate must be finite and non-negative",
        ));
    }
    let out = opt.output_size.unwrap_or((image.height(), image.width()));
    let lr = T::lit(opt.learning_rate);
    let mut zoom = ZoomParams::new(
        T::lit(opt.init.z_x),
        T::lit(opt.init.z_y),
        T::lit(opt.init.z_s),
    )?;
    let mut steps = Vec::with_capacity(opt.steps + 1);

    for step in 0..=opt.steps {
        let (score, grad) =
            score_and_gradient(image, extractor, &model.w_att, attr, &zoom, &opt.mask, out)?;
        if !score.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(ZslError::numeric(
                format!("zoom step {step}"),
                "non-finite score or gradient",
            ));
        }
        steps.push(ZoomStep {
            params: zoom,
            score,
            loss: -score,
        });
        if step == opt.steps {
            break;
        }
        zoom = ZoomParams {
            z_x: zoom.z_x + lr * grad[0],
            z_y: zoom.z_y + lr * grad[1],
            z_s: zoom.z_s + lr * grad[2],
        }
        .clamped();
    }
    Ok(ZoomTrajectory { steps })
}
