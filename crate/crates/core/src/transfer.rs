//! Ridge-regression transfer from seen to unseen classes and LA prototypes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::domain::{AttributeMatrix, ClassId, EmbeddingModel, FeatureSet};
use crate::error::{Result, ZslError};
use crate::linalg::{axpy, l2_normalize, Cholesky, DenseMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub lambda: f64,
    /// Scale each LA feature to unit norm before averaging into a seen
    /// prototype.
    pub normalize_first: bool,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            normalize_first: false,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(ZslError::Config(format!(
                "transfer lambda must be a finite value >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Factors `A Aᵀ + λI` once so several unseen classes can share it.
struct RidgeSystem<T> {
    chol: Cholesky<T>,
}

impl<T: Scalar> RidgeSystem<T> {
    fn new(seen_attrs: &DenseMatrix<T>, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(ZslError::invalid(format!(
                "ridge lambda must be >= 0, got {lambda}"
            )));
        }
        if seen_attrs.rows() == 0 {
            return Err(ZslError::invalid(
                "ridge regression needs at least one seen class",
            ));
        }
        let mut gram = seen_attrs.gram();
        let l = T::lit(lambda);
        for i in 0..gram.rows() {
            gram[(i, i)] += l;
        }
        let chol = Cholesky::factor(&gram).map_err(|e| match e {
            ZslError::NumericFailure { message, .. } => {
                ZslError::numeric(format!("ridge regression (lambda = {lambda})"), message)
            }
            other => other,
        })?;
        Ok(Self { chol })
    }

    fn solve(&self, seen_attrs: &DenseMatrix<T>, unseen_attr: &[T]) -> Result<Vec<T>> {
        if unseen_attr.len() != seen_attrs.cols() {
            return Err(ZslError::invalid(format!(
                "unseen attribute has dimension {}, seen attributes have {}",
                unseen_attr.len(),
                seen_attrs.cols()
            )));
        }
        let rhs = seen_attrs.matvec(unseen_attr)?;
        self.chol.solve(&rhs)
    }
}

/// `β = (A Aᵀ + λI)⁻¹ A a^u`, with `A` the `c_s × k` seen-attribute matrix.
pub fn ridge_betas<T: Scalar>(
    seen_attrs: &DenseMatrix<T>,
    unseen_attr: &[T],
    lambda: f64,
) -> Result<Vec<T>> {
    RidgeSystem::new(seen_attrs, lambda)?.solve(seen_attrs, unseen_attr)
}

/// One β vector per unseen class, indexed over `seen`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferWeights<T> {
    pub seen: Vec<ClassId>,
    pub unseen: Vec<ClassId>,
    /// `c_u × c_s`; row `u` is `β^u`.
    pub betas: DenseMatrix<T>,
}

impl<T: Scalar> TransferWeights<T> {
    pub fn compute(
        seen_attrs: &AttributeMatrix<T>,
        unseen_attrs: &AttributeMatrix<T>,
        lambda: f64,
    ) -> Result<Self> {
        let a = seen_attrs.values();
        let system = RidgeSystem::new(a, lambda)?;
        let mut betas = DenseMatrix::zeros(unseen_attrs.len(), seen_attrs.len());
        for (u, row) in unseen_attrs.values().row_iter().enumerate() {
            let beta = system.solve(a, row)?;
            if beta.iter().any(|b| !b.is_finite()) {
                return Err(ZslError::numeric(
                    format!("ridge regression for class {}", unseen_attrs.class_ids()[u]),
                    "non-finite β",
                ));
            }
            betas.row_mut(u).copy_from_slice(&beta);
        }
        Ok(Self {
            seen: seen_attrs.class_ids().to_vec(),
            unseen: unseen_attrs.class_ids().to_vec(),
            betas,
        })
    }

    pub fn beta(&self, unseen: ClassId) -> Option<&[T]> {
        self.unseen
            .iter()
            .position(|&c| c == unseen)
            .map(|i| self.betas.row(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    EmpiricalMean,
    Transferred,
}

/// Per-class LA prototypes, one row per class id.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet<T> {
    pub class_ids: Vec<ClassId>,
    pub prototypes: DenseMatrix<T>,
    pub provenance: Vec<Provenance>,
}

impl<T: Scalar> PrototypeSet<T> {
    pub fn new(
        class_ids: Vec<ClassId>,
        prototypes: DenseMatrix<T>,
        provenance: Vec<Provenance>,
    ) -> Result<Self> {
        if class_ids.len() != prototypes.rows() || provenance.len() != prototypes.rows() {
            return Err(ZslError::invalid(format!(
                "prototype set: {} ids and {} provenance flags for {} rows",
                class_ids.len(),
                provenance.len(),
                prototypes.rows()
            )));
        }
        if !prototypes.is_finite() {
            return Err(ZslError::invalid(
                "prototype set contains non-finite values",
            ));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = class_ids.iter().find(|c| !seen.insert(**c)) {
            return Err(ZslError::invalid(format!(
                "prototype set lists class {dup} twice"
            )));
        }
        Ok(Self {
            class_ids,
            prototypes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.cols()
    }

    pub fn get(&self, class: ClassId) -> Option<&[T]> {
        self.class_ids
            .iter()
            .position(|&c| c == class)
            .map(|i| self.prototypes.row(i))
    }

    /// `Some` when every row shares one provenance.
    pub fn uniform_provenance(&self) -> Option<Provenance> {
        let first = *self.provenance.first()?;
        self.provenance.iter().all(|&p| p == first).then_some(first)
    }

    /// Rows of `self` followed by rows of `other`, used for the joint label
    /// space in generalized evaluation.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let prototypes = DenseMatrix::vstack(&[&self.prototypes, &other.prototypes])?;
        let class_ids = self
            .class_ids
            .iter()
            .chain(&other.class_ids)
            .copied()
            .collect();
        let provenance = self
            .provenance
            .iter()
            .chain(&other.provenance)
            .copied()
            .collect();
        Self::new(class_ids, prototypes, provenance)
    }

    /// Rows for `classes`, in that order.
    pub fn subset(&self, classes: &[ClassId]) -> Result<Self> {
        let mut idx = Vec::with_capacity(classes.len());
        for &c in classes {
            let i = self
                .class_ids
                .iter()
                .position(|&x| x == c)
                .ok_or_else(|| ZslError::invalid(format!("no prototype for class {c}")))?;
            idx.push(i);
        }
        Ok(Self {
            class_ids: classes.to_vec(),
            prototypes: self.prototypes.select_rows(&idx),
            provenance: idx.iter().map(|&i| self.provenance[i]).collect(),
        })
    }
}

/// Per-class mean of the rows of `lat` (one row per sample), for each class
/// in `classes`.
pub fn class_means<T: Scalar>(
    lat: &DenseMatrix<T>,
    labels: &[ClassId],
    classes: &[ClassId],
    normalize_first: bool,
) -> Result<PrototypeSet<T>> {
    if lat.rows() != labels.len() {
        return Err(ZslError::invalid(format!(
            "{} LA rows for {} labels",
            lat.rows(),
            labels.len()
        )));
    }
    let slot: HashMap<ClassId, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut sums = DenseMatrix::zeros(classes.len(), lat.cols());
    let mut counts = vec![0usize; classes.len()];
    for (row, label) in lat.row_iter().zip(labels) {
        let Some(&s) = slot.get(label) else { continue };
        counts[s] += 1;
        if normalize_first {
            axpy(T::one(), &l2_normalize(row), sums.row_mut(s));
        } else {
            axpy(T::one(), row, sums.row_mut(s));
        }
    }
    if let Some(i) = counts.iter().position(|&n| n == 0) {
        return Err(ZslError::invalid(format!(
            "class {} has no training samples for its prototype",
            classes[i]
        )));
    }
    for (s, &n) in counts.iter().enumerate() {
        let inv = T::one() / T::lit(n as f64);
        sums.row_mut(s).iter_mut().for_each(|v| *v *= inv);
    }
    PrototypeSet::new(
        classes.to_vec(),
        sums,
        vec![Provenance::EmpiricalMean; classes.len()],
    )
}

/// Mean `φ_lat` of each seen class over the training samples in `features`.
pub fn seen_prototypes<T: Scalar>(
    model: &EmbeddingModel<T>,
    features: &FeatureSet<T>,
    seen_classes: &[ClassId],
    normalize_first: bool,
) -> Result<PrototypeSet<T>> {
    let (_, lat) = model.project_all(&features.features)?;
    class_means(&lat, &features.labels, seen_classes, normalize_first)
}

/// `φ̄_lat^u = Σ_c β_c^u φ̄_lat^c` for every unseen class in `betas`.
pub fn unseen_prototypes<T: Scalar>(
    betas: &TransferWeights<T>,
    seen: &PrototypeSet<T>,
) -> Result<PrototypeSet<T>> {
    if betas.seen != seen.class_ids {
        return Err(ZslError::invalid(format!(
            "transfer weights are indexed over {} seen classes that do not match the {} seen prototypes",
            betas.seen.len(),
            seen.len()
        )));
    }
    let prototypes = betas.betas.matmul(&seen.prototypes)?;
    if !prototypes.is_finite() {
        return Err(ZslError::numeric("unseen prototypes", "non-finite value"));
    }
    PrototypeSet::new(
        betas.unseen.clone(),
        prototypes,
        vec![Provenance::Transferred; betas.unseen.len()],
    )
}
