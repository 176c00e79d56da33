//! Domain types: classes, attribute tables, feature sets, splits and the
//! augmented embedding model, plus dataset validation.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZslError};
use crate::linalg::{l2_normalize, DenseMatrix};
use crate::scalar::Scalar;

/// Dense class identifier in `0..c`, assigned at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub usize);

impl ClassId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-class attribute vectors, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMatrix<T> {
    class_ids: Vec<ClassId>,
    values: DenseMatrix<T>,
    lookup: HashMap<ClassId, usize>,
}

/// Optional rescaling applied when attributes are ingested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeNormalization {
    #[default]
    None,
    /// Each attribute column rescaled to `[0, 1]`.
    MinMax,
    /// Each class row scaled to unit norm.
    L2,
}

impl<T: Scalar> AttributeMatrix<T> {
    pub fn new(class_ids: Vec<ClassId>, values: DenseMatrix<T>) -> Result<Self> {
        if values.cols() == 0 {
            return Err(ZslError::invalid("attribute dimension must be at least 1"));
        }
        if values.rows() != class_ids.len() {
            return Err(ZslError::invalid(format!(
                "{} attribute rows for {} classes",
                values.rows(),
                class_ids.len()
            )));
        }
        if !values.is_finite() {
            return Err(ZslError::invalid("attribute matrix has non-finite entries"));
        }
        let mut lookup = HashMap::with_capacity(class_ids.len());
        for (row, &c) in class_ids.iter().enumerate() {
            if lookup.insert(c, row).is_some() {
                return Err(ZslError::invalid(format!("duplicate class id {c}")));
            }
        }
        Ok(Self {
            class_ids,
            values,
            lookup,
        })
    }

    /// Attribute table whose row `c` belongs to class `c`.
    pub fn dense(values: DenseMatrix<T>) -> Result<Self> {
        let ids = (0..values.rows()).map(ClassId).collect();
        Self::new(ids, values)
    }

    pub fn class_ids(&self) -> &[ClassId] {
        &self.class_ids
    }

    pub fn values(&self) -> &DenseMatrix<T> {
        &self.values
    }

    /// Attribute dimension `k`.
    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn position(&self, class: ClassId) -> Option<usize> {
        self.lookup.get(&class).copied()
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.lookup.contains_key(&class)
    }

    pub fn get(&self, class: ClassId) -> Option<&[T]> {
        self.position(class).map(|r| self.values.row(r))
    }

    /// Restricts the table to `classes`, keeping the given order.
    pub fn subset(&self, classes: &[ClassId]) -> Result<Self> {
        let rows = classes
            .iter()
            .map(|&c| {
                self.position(c)
                    .ok_or_else(|| ZslError::invalid(format!("class {c} has no attribute row")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(classes.to_vec(), self.values.select_rows(&rows))
    }

    pub fn normalized(&self, mode: AttributeNormalization) -> Self {
        let mut values = self.values.clone();
        match mode {
            AttributeNormalization::None => {}
            AttributeNormalization::MinMax => {
                for j in 0..values.cols() {
                    let col = values.column(j);
                    let lo = col.iter().copied().fold(T::infinity(), T::min);
                    let hi = col.iter().copied().fold(T::neg_infinity(), T::max);
                    let span = hi - lo;
                    for i in 0..values.rows() {
                        values[(i, j)] = if span > T::zero() {
                            (values[(i, j)] - lo) / span
                        } else {
                            T::zero()
                        };
                    }
                }
            }
            AttributeNormalization::L2 => {
                for i in 0..values.rows() {
                    let n = l2_normalize(values.row(i));
                    values.row_mut(i).copy_from_slice(&n);
                }
            }
        }
        Self {
            class_ids: self.class_ids.clone(),
            values,
            lookup: self.lookup.clone(),
        }
    }
}

/// Labeled feature vectors for one scale of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    pub scale_id: u32,
    pub features: DenseMatrix<T>,
    pub labels: Vec<ClassId>,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn new(scale_id: u32, features: DenseMatrix<T>, labels: Vec<ClassId>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(ZslError::invalid(format!(
                "scale {scale_id}: {} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(ZslError::invalid(format!("scale {scale_id}: no samples")));
        }
        Ok(Self {
            scale_id,
            features,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[T] {
        self.features.row(i)
    }

    /// Keeps the samples at `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            scale_id: self.scale_id,
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Indices of the samples whose label is in `classes`.
    pub fn indices_of(&self, classes: &[ClassId]) -> Vec<usize> {
        let set: HashSet<_> = classes.iter().copied().collect();
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| set.contains(l))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Disjoint partition of the classes into seen (training) and unseen (test).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seen_classes: Vec<ClassId>,
    pub unseen_classes: Vec<ClassId>,
}

impl Split {
    pub fn new(seen_classes: Vec<ClassId>, unseen_classes: Vec<ClassId>) -> Result<Self> {
        let split = Self {
            seen_classes,
            unseen_classes,
        };
        if let Some(v) = split.violations().into_iter().next() {
            return Err(ZslError::invalid(v.to_string()));
        }
        Ok(split)
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.seen_classes.is_empty() {
            out.push(Violation::EmptyClassList { seen: true });
        }
        if self.unseen_classes.is_empty() {
            out.push(Violation::EmptyClassList { seen: false });
        }
        let seen: HashSet<_> = self.seen_classes.iter().collect();
        let mut overlap: Vec<_> = self
            .unseen_classes
            .iter()
            .filter(|c| seen.contains(c))
            .copied()
            .collect();
        overlap.sort();
        overlap.dedup();
        out.extend(
            overlap
                .into_iter()
                .map(|class| Violation::SeenUnseenOverlap { class }),
        );
        out
    }

    /// Seen classes followed by unseen classes, sorted by id.
    pub fn all_classes(&self) -> Vec<ClassId> {
        let mut all: Vec<_> = self
            .seen_classes
            .iter()
            .chain(&self.unseen_classes)
            .copied()
            .collect();
        all.sort();
        all.dedup();
        all
    }
}

/// Augmented projection `W_aug = [W_att | W_lat]` for one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel<T> {
    pub scale_id: u32,
    /// `d × k`, maps features onto the user-defined attribute space.
    pub w_att: DenseMatrix<T>,
    /// `d × k_lat`, maps features onto the latent attribute space.
    pub w_lat: DenseMatrix<T>,
}

impl<T: Scalar> EmbeddingModel<T> {
    pub fn new(scale_id: u32, w_att: DenseMatrix<T>, w_lat: DenseMatrix<T>) -> Result<Self> {
        if w_att.rows() != w_lat.rows() {
            return Err(ZslError::invalid(format!(
                "w_att has {} rows but w_lat has {}",
                w_att.rows(),
                w_lat.rows()
            )));
        }
        if w_att.cols() == 0 || w_lat.cols() == 0 {
            return Err(ZslError::invalid(
                "attribute and latent dimensions must be at least 1",
            ));
        }
        if !w_att.is_finite() || !w_lat.is_finite() {
            return Err(ZslError::invalid(
                "embedding weights contain non-finite entries",
            ));
        }
        Ok(Self {
            scale_id,
            w_att,
            w_lat,
        })
    }

    pub fn zeros(scale_id: u32, d: usize, k: usize, k_lat: usize) -> Self {
        Self {
            scale_id,
            w_att: DenseMatrix::zeros(d, k),
            w_lat: DenseMatrix::zeros(d, k_lat),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.w_att.rows()
    }

    pub fn att_dim(&self) -> usize {
        self.w_att.cols()
    }

    pub fn lat_dim(&self) -> usize {
        self.w_lat.cols()
    }

    /// `(W_attᵀ f, W_latᵀ f)`.
    pub fn project(&self, feature: &[T]) -> Result<EmbeddedFeature<T>> {
        if feature.len() != self.feature_dim() {
            return Err(ZslError::invalid(format!(
                "feature has dimension {}, model expects {}",
                feature.len(),
                self.feature_dim()
            )));
        }
        Ok(EmbeddedFeature {
            att: self.w_att.tr_matvec(feature)?,
            lat: self.w_lat.tr_matvec(feature)?,
        })
    }

    /// Projects every row of `features`; returns `(att, lat)` matrices.
    pub fn project_all(
        &self,
        features: &DenseMatrix<T>,
    ) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
        if features.cols() != self.feature_dim() {
            return Err(ZslError::invalid(format!(
                "features have dimension {}, model expects {}",
                features.cols(),
                self.feature_dim()
            )));
        }
        Ok((features.matmul(&self.w_att)?, features.matmul(&self.w_lat)?))
    }
}

/// A feature mapped into the augmented attribute space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedFeature<T> {
    pub att: Vec<T>,
    pub lat: Vec<T>,
}

impl<T: Scalar> EmbeddedFeature<T> {
    pub fn concat(&self) -> Vec<T> {
        let mut v = self.att.clone();
        v.extend_from_slice(&self.lat);
        v
    }
}

pub fn project<T: Scalar>(model: &EmbeddingModel<T>, feature: &[T]) -> Result<EmbeddedFeature<T>> {
    model.project(feature)
}

/// Splits `[φ_att; φ_lat]` after the first `k` entries. The latent part must
/// be non-empty.
pub fn split_embedding<T: Scalar>(phi_e: &[T], k: usize) -> Result<EmbeddedFeature<T>> {
    if k == 0 || phi_e.len() <= k {
        return Err(ZslError::invalid(format!(
            "cannot split a {}-vector into k={k} attribute entries and a non-empty latent part",
            phi_e.len()
        )));
    }
    let (att, lat) = phi_e.split_at(k);
    Ok(EmbeddedFeature {
        att: att.to_vec(),
        lat: lat.to_vec(),
    })
}

/// A single dataset consistency problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyClassList {
        seen: bool,
    },
    SeenUnseenOverlap {
        class: ClassId,
    },
    MissingAttributes {
        class: ClassId,
    },
    UnknownLabel {
        scale: u32,
        sample: usize,
        label: ClassId,
    },
    DimensionMismatch {
        scale: u32,
        dim: usize,
        expected: usize,
    },
    SampleCountMismatch {
        scale: u32,
        count: usize,
        expected: usize,
    },
    LabelMismatch {
        scale: u32,
        sample: usize,
    },
    NonFiniteFeature {
        scale: u32,
        sample: usize,
    },
    NonFiniteAttribute {
        class: ClassId,
    },
    NoScales,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyClassList { seen } => {
                write!(
                    f,
                    "{} class list is empty",
                    if *seen { "seen" } else { "unseen" }
                )
            }
            Violation::SeenUnseenOverlap { class } => {
                write!(f, "class {class} is listed as both seen and unseen")
            }
            Violation::MissingAttributes { class } => {
                write!(f, "class {class} has no attribute row")
            }
            Violation::UnknownLabel {
                scale,
                sample,
                label,
            } => write!(
                f,
                "scale {scale} sample {sample}: label {label} is neither seen nor unseen"
            ),
            Violation::DimensionMismatch {
                scale,
                dim,
                expected,
            } => write!(
                f,
                "scale {scale}: feature dimension {dim} differs from {expected}"
            ),
            Violation::SampleCountMismatch {
                scale,
                count,
                expected,
            } => write!(
                f,
                "scale {scale}: {count} samples, other scales have {expected}"
            ),
            Violation::LabelMismatch { scale, sample } => write!(
                f,
                "scale {scale} sample {sample}: label differs from the first scale"
            ),
            Violation::NonFiniteFeature { scale, sample } => {
                write!(f, "scale {scale} sample {sample}: non-finite feature value")
            }
            Violation::NonFiniteAttribute { class } => {
                write!(f, "class {class}: non-finite attribute value")
            }
            Violation::NoScales => write!(f, "no feature scales supplied"),
        }
    }
}

/// Outcome of [`validate_dataset`]; empty means the dataset is consistent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks features, attributes and split for mutual consistency. Scales are
/// expected to describe the same samples, so sample counts, labels and
/// feature dimensions are compared against the first scale.
pub fn validate_dataset<T: Scalar>(
    features: &[FeatureSet<T>],
    attrs: &AttributeMatrix<T>,
    split: &Split,
) -> ValidationReport {
    let mut violations = split.violations();

    for &class in split.seen_classes.iter().chain(&split.unseen_classes) {
        match attrs.get(class) {
            None => violations.push(Violation::MissingAttributes { class }),
            Some(row) if row.iter().any(|v| !v.is_finite()) => {
                violations.push(Violation::NonFiniteAttribute { class })
            }
            Some(_) => {}
        }
    }

    let known: HashSet<ClassId> = split
        .seen_classes
        .iter()
        .chain(&split.unseen_classes)
        .copied()
        .collect();

    let Some(first) = features.first() else {
        violations.push(Violation::NoScales);
        return ValidationReport { violations };
    };

    for fs in features {
        if fs.dim() != first.dim() {
            violations.push(Violation::DimensionMismatch {
                scale: fs.scale_id,
                dim: fs.dim(),
                expected: first.dim(),
            });
        }
        if fs.len() != first.len() {
            violations.push(Violation::SampleCountMismatch {
                scale: fs.scale_id,
                count: fs.len(),
                expected: first.len(),
            });
        } else if let Some(sample) = fs
            .labels
            .iter()
            .zip(&first.labels)
            .position(|(a, b)| a != b)
        {
            violations.push(Violation::LabelMismatch {
                scale: fs.scale_id,
                sample,
            });
        }
        for (sample, &label) in fs.labels.iter().enumerate() {
            if !known.contains(&label) {
                violations.push(Violation::UnknownLabel {
                    scale: fs.scale_id,
                    sample,
                    label,
                });
            }
        }
        for (sample, row) in fs.features.row_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                violations.push(Violation::NonFiniteFeature {
                    scale: fs.scale_id,
                    sample,
                });
            }
        }
    }

    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[usize]) -> Vec<ClassId> {
        v.iter().copied().map(ClassId).collect()
    }

    #[test]
    fn project_examples() {
        let eye = EmbeddingModel::new(1, DenseMatrix::<f64>::identity(3), DenseMatrix::identity(3))
            .unwrap();
        let f = [0.5, -1.0, 2.0];
        assert_eq!(eye.project(&f).unwrap().att, f.to_vec());

        let zero = EmbeddingModel::<f64>::zeros(1, 3, 2, 2);
        assert_eq!(zero.project(&f).unwrap().att, vec![0.0, 0.0]);

        let w = DenseMatrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let m = EmbeddingModel::new(1, w.clone(), w).unwrap();
        assert_eq!(m.project(&[3.0, 4.0]).unwrap().att, vec![11.0]);
        assert!(m.project(&[1.0]).is_err());
    }

    #[test]
    fn split_examples() {
        let e = split_embedding(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!((e.att, e.lat), (vec![1.0, 2.0], vec![3.0, 4.0]));
        let z = split_embedding(&[0.0, 0.0], 1).unwrap();
        assert_eq!((z.att, z.lat), (vec![0.0], vec![0.0]));
        assert!(split_embedding(&[5.0], 1).is_err());
    }

    fn fixture() -> (Vec<FeatureSet<f64>>, AttributeMatrix<f64>, Split) {
        let attrs = AttributeMatrix::dense(
            DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]).unwrap(),
        )
        .unwrap();
        let split = Split::new(ids(&[0, 1]), ids(&[2])).unwrap();
        let fs = FeatureSet::new(
            1,
            DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]).unwrap(),
            ids(&[0, 1, 2]),
        )
        .unwrap();
        (vec![fs], attrs, split)
    }

    #[test]
    fn consistent_dataset_is_valid() {
        let (fs, attrs, split) = fixture();
        assert!(validate_dataset(&fs, &attrs, &split).is_valid());
    }

    #[test]
    fn overlap_and_unknown_label_reported() {
        let (mut fs, attrs, _) = fixture();
        let split = Split {
            seen_classes: ids(&[0, 1]),
            unseen_classes: ids(&[1]),
        };
        let report = validate_dataset(&fs, &attrs, &split);
        assert!(report
            .violations
            .contains(&Violation::SeenUnseenOverlap { class: ClassId(1) }));
        assert!(Split::new(ids(&[0, 1]), ids(&[1])).is_err());

        fs[0].labels[2] = ClassId(7);
        let split = Split::new(ids(&[0, 1]), ids(&[2])).unwrap();
        let report = validate_dataset(&fs, &attrs, &split);
        assert_eq!(
            report.violations,
            vec![Violation::UnknownLabel {
                scale: 1,
                sample: 2,
                label: ClassId(7)
            }]
        );
    }

    #[test]
    fn scale_dimension_mismatch_flagged() {
        let attrs = AttributeMatrix::dense(DenseMatrix::<f64>::identity(2)).unwrap();
        let split = Split::new(ids(&[0]), ids(&[1])).unwrap();
        let labels = ids(&[0, 1]);
        let s1 = FeatureSet::new(1, DenseMatrix::zeros(2, 64), labels.clone()).unwrap();
        let s2 = FeatureSet::new(2, DenseMatrix::zeros(2, 32), labels).unwrap();
        let report = validate_dataset(&[s1, s2], &attrs, &split);
        assert_eq!(
            report.violations,
            vec![Violation::DimensionMismatch {
                scale: 2,
                dim: 32,
                expected: 64
            }]
        );
    }

    #[test]
    fn non_finite_and_missing_attributes_flagged() {
        let (mut fs, attrs, _) = fixture();
        fs[0].features[(1, 1)] = f64::NAN;
        let split = Split::new(ids(&[0, 1]), ids(&[2, 5])).unwrap();
        let report = validate_dataset(&fs, &attrs, &split);
        assert!(report
            .violations
            .contains(&Violation::MissingAttributes { class: ClassId(5) }));
        assert!(report.violations.contains(&Violation::NonFiniteFeature {
            scale: 1,
            sample: 1
        }));
    }

    #[test]
    fn attribute_matrix_invariants() {
        let m = DenseMatrix::<f64>::identity(2);
        assert!(AttributeMatrix::new(ids(&[0, 0]), m.clone()).is_err());
        assert!(AttributeMatrix::new(ids(&[0]), m.clone()).is_err());
        assert!(AttributeMatrix::new(vec![], DenseMatrix::<f64>::zeros(0, 0)).is_err());
        let a = AttributeMatrix::new(ids(&[4, 2]), m).unwrap();
        assert_eq!(a.get(ClassId(2)), Some(&[0.0, 1.0][..]));
        let sub = a.subset(&ids(&[2])).unwrap();
        assert_eq!(sub.class_ids(), &ids(&[2])[..]);
        assert!(a.subset(&ids(&[9])).is_err());
    }

    #[test]
    fn attribute_normalizations() {
        let a = AttributeMatrix::dense(DenseMatrix::from_rows(&[[2.0, 3.0], [4.0, 3.0]]).unwrap())
            .unwrap();
        let mm = a.normalized(AttributeNormalization::MinMax);
        assert_eq!(mm.values().as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        let l2 = a.normalized(AttributeNormalization::L2);
        for r in l2.values().row_iter() {
            assert!((crate::linalg::l2_norm::<f64>(r) - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn projection_is_linear(
            w in proptest::collection::vec(-2.0..2.0f64, 12),
            f in proptest::collection::vec(-3.0..3.0f64, 4),
            g in proptest::collection::vec(-3.0..3.0f64, 4),
            a in -2.0..2.0f64,
            b in -2.0..2.0f64,
        ) {
            let w = DenseMatrix::from_vec(4, 3, w).unwrap();
            let m = EmbeddingModel::new(1, w.clone(), w).unwrap();
            let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
            let lhs = m.project(&mix).unwrap().att;
            let pf = m.project(&f).unwrap().att;
            let pg = m.project(&g).unwrap().att;
            for i in 0..3 {
                let rhs = a * pf[i] + b * pg[i];
                let scale = 1.0_f64.max(rhs.abs()).max(lhs[i].abs());
                prop_assert!((lhs[i] - rhs).abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn split_round_trips(
            att in proptest::collection::vec(-5.0..5.0f64, 1..6),
            lat in proptest::collection::vec(-5.0..5.0f64, 1..6),
        ) {
            let mut joined = att.clone();
            joined.extend_from_slice(&lat);
            let e = split_embedding(&joined, att.len()).unwrap();
            prop_assert_eq!(e.att, att);
            prop_assert_eq!(e.lat, lat);
        }

        #[test]
        fn normalize_norm_is_zero_or_one(v in proptest::collection::vec(-1e3..1e3f64, 1..8)) {
            let n = crate::linalg::l2_norm(&l2_normalize(&v));
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-10);
        }
    }
}
