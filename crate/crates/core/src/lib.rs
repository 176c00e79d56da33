//! Zero-shot classification with augmented attribute embeddings.
//!
//! Features are projected into two spaces: the user-defined attribute (UA)
//! space, trained with a softmax loss over seen classes, and a latent
//! attribute (LA) space, trained with a triplet loss. Unseen-class LA
//! prototypes are transferred from seen-class means through ridge-regression
//! weights computed in UA space. A differentiable crop-and-zoom kernel
//! provides the multi-scale inputs.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which is what gradient checks and
//! training use.

pub mod domain;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod scalar;
pub mod transfer;
pub mod zoom;

#[cfg(test)]
mod testutil;

pub use domain::{
    split_embedding, validate_dataset, AttributeNormalization, ClassId, Split, ValidationReport,
    Violation,
};
pub use error::{Result, ZslError};
pub use scalar::Scalar;

pub type Matrix = linalg::DenseMatrix<f64>;
pub type AttributeMatrix = domain::AttributeMatrix<f64>;
pub type FeatureSet = domain::FeatureSet<f64>;
pub type EmbeddingModel = domain::EmbeddingModel<f64>;
pub type EmbeddedFeature = domain::EmbeddedFeature<f64>;
pub type ImageGrid = zoom::ImageGrid<f64>;
pub type SoftMask = zoom::SoftMask<f64>;
pub type ZoomParams = zoom::ZoomParams<f64>;

/// Single-precision aliases.
pub mod f32 {
    pub type Matrix = crate::linalg::DenseMatrix<f32>;
    pub type AttributeMatrix = crate::domain::AttributeMatrix<f32>;
    pub type FeatureSet = crate::domain::FeatureSet<f32>;
    pub type EmbeddingModel = crate::domain::EmbeddingModel<f32>;
    pub type ImageGrid = crate::zoom::ImageGrid<f32>;
}
