use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{AttributeMatrix, ClassId, EmbeddingModel};
use crate::embedding::{combine_la, MultiScaleCombiner};
use crate::error::{Result, ZslError};
use crate::linalg::{dot, DenseMatrix};
use crate::scalar::Scalar;
use crate::transfer::PrototypeSet;

/// Which embedding space a prediction is scored in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Space {
    #[serde(rename = "ua")]
    Ua,
    #[serde(rename = "la")]
    La,
    #[serde(rename = "ua+la")]
    UaLa,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Space::Ua => "ua",
            Space::La => "la",
            Space::UaLa => "ua+la",
        })
    }
}

impl FromStr for Space {
    type Err = ZslError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ua" => Ok(Space::Ua),
            "la" => Ok(Space::La),
            "ua+la" | "ua-la" | "uala" => Ok(Space::UaLa),
            other => Err(ZslError::invalid(format!(
                "unknown space {other:?} (expected ua, la or ua+la)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult<T> {
    pub predicted: ClassId,
    /// One score per candidate class, in candidate order.
    pub scores: Vec<T>,
    pub space: Space,
}

/// Index of the largest score; among equal scores the smallest class id wins.
pub fn argmax<T: Scalar>(scores: &[T], class_ids: &[ClassId]) -> Result<usize> {
    if scores.is_empty() || scores.len() != class_ids.len() {
        return Err(ZslError::invalid(format!(
            "{} scores for {} candidate classes",
            scores.len(),
            class_ids.len()
        )));
    }
    let mut best = 0;
    for i in 1..scores.len() {
        let (s, b) = (scores[i], scores[best]);
        if !s.is_finite() {
            return Err(ZslError::numeric(
                "prediction",
                format!("non-finite score for class {}", class_ids[i]),
            ));
        }
        if s > b || (s == b && class_ids[i] < class_ids[best]) {
            best = i;
        }
    }
    if !scores[best].is_finite() {
        return Err(ZslError::numeric("prediction", "non-finite score"));
    }
    Ok(best)
}

fn finish<T: Scalar>(
    scores: Vec<T>,
    class_ids: &[ClassId],
    space: Space,
) -> Result<PredictionResult<T>> {
    let best = argmax(&scores, class_ids)?;
    Ok(PredictionResult {
        predicted: class_ids[best],
        scores,
        space,
    })
}

fn ua_scores<T: Scalar>(phi_att: &[T], attrs: &AttributeMatrix<T>) -> Result<Vec<T>> {
    if attrs.is_empty() {
        return Err(ZslError::invalid("no candidate classes"));
    }
    if phi_att.len() != attrs.dim() {
        return Err(ZslError::invalid(format!(
            "UA feature has dimension {}, attributes have {}",
            phi_att.len(),
            attrs.dim()
        )));
    }
    Ok(attrs.values().row_iter().map(|a| dot(phi_att, a)).collect())
}

fn la_scores<T: Scalar>(phi_lat: &[T], prototypes: &PrototypeSet<T>) -> Result<Vec<T>> {
    if prototypes.is_empty() {
        return Err(ZslError::invalid("no candidate prototypes"));
    }
    if phi_lat.len() != prototypes.dim() {
        return Err(ZslError::invalid(format!(
            "LA feature has dimension {}, prototypes have {}",
            phi_lat.len(),
            prototypes.dim()
        )));
    }
    Ok(prototypes
        .prototypes
        .row_iter()
        .map(|p| dot(phi_lat, p))
        .collect())
}

/// Prototypes reordered to follow the attribute-matrix class order.
fn aligned<'a, T: Scalar>(
    attrs: &AttributeMatrix<T>,
    prototypes: &'a PrototypeSet<T>,
) -> Result<std::borrow::Cow<'a, PrototypeSet<T>>> {
    if prototypes.class_ids == attrs.class_ids() {
        Ok(std::borrow::Cow::Borrowed(prototypes))
    } else if prototypes.len() == attrs.len() {
        Ok(std::borrow::Cow::Owned(
            prototypes.subset(attrs.class_ids())?,
        ))
    } else {
        Err(ZslError::invalid(format!(
            "{} prototypes for {} attribute classes",
            prototypes.len(),
            attrs.len()
        )))
    }
}

/// `argmax_c ⟨φ_att, a^c⟩`.
pub fn predict_ua<T: Scalar>(
    phi_att: &[T],
    attrs: &AttributeMatrix<T>,
) -> Result<PredictionResult<T>> {
    finish(ua_scores(phi_att, attrs)?, attrs.class_ids(), Space::Ua)
}

/// `argmax_c ⟨φ_lat, φ̄_lat^c⟩`.
pub fn predict_la<T: Scalar>(
    phi_lat: &[T],
    prototypes: &PrototypeSet<T>,
) -> Result<PredictionResult<T>> {
    finish(
        la_scores(phi_lat, prototypes)?,
        &prototypes.class_ids,
        Space::La,
    )
}

/// `argmax_c (⟨φ_att, a^c⟩ + ⟨φ_lat, φ̄_lat^c⟩)`. Scores follow the order of
/// `attrs`; prototypes are matched by class id.
pub fn predict_combined<T: Scalar>(
    phi_att: &[T],
    phi_lat: &[T],
    attrs: &AttributeMatrix<T>,
    prototypes: &PrototypeSet<T>,
) -> Result<PredictionResult<T>> {
    let protos = aligned(attrs, prototypes)?;
    let mut scores = ua_scores(phi_att, attrs)?;
    for (s, l) in scores.iter_mut().zip(la_scores(phi_lat, &protos)?) {
        *s += l;
    }
    finish(scores, attrs.class_ids(), Space::UaLa)
}

/// Projects each scale, combines UA through `combiner` and LA through
/// [`combine_la`], then scores with [`predict_combined`]. `prototypes` must
/// live in the combined LA space.
pub fn predict_multiscale<T: Scalar>(
    features: &[&[T]],
    models: &[EmbeddingModel<T>],
    combiner: &MultiScaleCombiner<T>,
    prototypes: &PrototypeSet<T>,
    attrs: &AttributeMatrix<T>,
) -> Result<PredictionResult<T>> {
    if features.len() != models.len() || models.len() != combiner.scales() {
        return Err(ZslError::invalid(format!(
            "{} feature scales, {} models, combiner over {} scales",
            features.len(),
            models.len(),
            combiner.scales()
        )));
    }
    let embedded = features
        .iter()
        .zip(models)
        .map(|(x, m)| m.project(x))
        .collect::<Result<Vec<_>>>()?;
    let att: Vec<&[T]> = embedded.iter().map(|e| e.att.as_slice()).collect();
    let lat: Vec<&[T]> = embedded.iter().map(|e| e.lat.as_slice()).collect();
    let phi_att = combiner.combine(&att)?;
    let phi_lat = combine_la(&lat);
    predict_combined(&phi_att, &phi_lat, attrs, prototypes)
}

/// Predictions for a batch of embedded samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPrediction<T> {
    pub class_ids: Vec<ClassId>,
    pub predicted: Vec<ClassId>,
    /// `n × classes`.
    pub scores: DenseMatrix<T>,
    pub space: Space,
}

fn zscore<T: Scalar>(m: &mut DenseMatrix<T>) {
    let n = m.as_slice().len();
    if n == 0 {
        return;
    }
    let nf = T::lit(n as f64);
    let mean = m.as_slice().iter().copied().sum::<T>() / nf;
    let var = m
        .as_slice()
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<T>()
        / nf;
    let sd = var.sqrt();
    let inv = if sd > T::zero() {
        T::one() / sd
    } else {
        T::one()
    };
    m.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = (*v - mean) * inv);
}

/// Scores every row of `att` / `lat` against `attrs` (and `prototypes`,
/// matched by class id). With `zscore_terms`, each score term is shifted and
/// scaled to zero mean and unit variance over the batch before summing.
pub fn predict_batch<T: Scalar>(
    att: Option<&DenseMatrix<T>>,
    lat: Option<&DenseMatrix<T>>,
    attrs: &AttributeMatrix<T>,
    prototypes: Option<&PrototypeSet<T>>,
    space: Space,
    zscore_terms: bool,
) -> Result<BatchPrediction<T>> {
    let ua_term = |att: &DenseMatrix<T>| -> Result<DenseMatrix<T>> {
        let mut s = DenseMatrix::zeros(att.rows(), attrs.len());
        for (i, row) in att.row_iter().enumerate() {
            s.row_mut(i).copy_from_slice(&ua_scores(row, attrs)?);
        }
        Ok(s)
    };
    let la_term = |lat: &DenseMatrix<T>, protos: &PrototypeSet<T>| -> Result<DenseMatrix<T>> {
        let protos = aligned(attrs, protos)?;
        let mut s = DenseMatrix::zeros(lat.rows(), attrs.len());
        for (i, row) in lat.row_iter().enumerate() {
            s.row_mut(i).copy_from_slice(&la_scores(row, &protos)?);
        }
        Ok(s)
    };
    let need_att =
        || att.ok_or_else(|| ZslError::invalid(format!("space {space} needs UA features")));
    let need_lat =
        || lat.ok_or_else(|| ZslError::invalid(format!("space {space} needs LA features")));
    let need_protos = || {
        prototypes.ok_or_else(|| ZslError::invalid(format!("space {space} needs LA prototypes")))
    };

    let scores = match space {
        Space::Ua => ua_term(need_att()?)?,
        Space::La => la_term(need_lat()?, need_protos()?)?,
        Space::UaLa => {
            let a = need_att()?;
            let l = need_lat()?;
            if a.rows() != l.rows() {
                return Err(ZslError::invalid(
                    "UA and LA batches differ in sample count",
                ));
            }
            let mut ua = ua_term(a)?;
            let mut la = la_term(l, need_protos()?)?;
            if zscore_terms {
                zscore(&mut ua);
                zscore(&mut la);
            }
            ua.add_scaled(T::one(), &la);
            ua
        }
    };
    let class_ids = attrs.class_ids().to_vec();
    let predicted = scores
        .row_iter()
        .map(|row| argmax(row, &class_ids).map(|i| class_ids[i]))
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchPrediction {
        class_ids,
        predicted,
        scores,
        space,
    })
}
