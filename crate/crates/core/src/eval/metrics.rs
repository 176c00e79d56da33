use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::ClassId;
use crate::error::{Result, ZslError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAccuracy {
    pub class: ClassId,
    pub correct: usize,
    pub total: usize,
    /// Percent.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McaReport {
    /// Sorted by class id.
    pub per_class: Vec<ClassAccuracy>,
    /// Unweighted mean of the per-class accuracies, percent.
    pub mca: f64,
}

impl McaReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,correct,total,accuracy\n");
        for c in &self.per_class {
            out.push_str(&format!(
                "{},{},{},{:.6}\n",
                c.class, c.correct, c.total, c.accuracy
            ));
        }
        out.push_str(&format!("mca,,,{:.6}\n", self.mca));
        out
    }
}

/// Per-class accuracy over the classes that occur in `labels`, and their
/// unweighted mean. Every label must belong to `classes`.
pub fn mca(predictions: &[ClassId], labels: &[ClassId], classes: &[ClassId]) -> Result<McaReport> {
    if labels.is_empty() {
        return Err(ZslError::invalid(
            "cannot compute accuracy of an empty prediction set",
        ));
    }
    if predictions.len() != labels.len() {
        return Err(ZslError::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let allowed: HashSet<ClassId> = classes.iter().copied().collect();
    let mut tally: BTreeMap<ClassId, (usize, usize)> = BTreeMap::new();
    for (&p, &l) in predictions.iter().zip(labels) {
        if !allowed.contains(&l) {
            return Err(ZslError::invalid(format!(
                "label {l} is outside the evaluated class set"
            )));
        }
        let e = tally.entry(l).or_default();
        e.1 += 1;
        if p == l {
            e.0 += 1;
        }
    }
    let per_class: Vec<ClassAccuracy> = tally
        .into_iter()
        .map(|(class, (correct, total))| ClassAccuracy {
            class,
            correct,
            total,
            accuracy: 100.0 * correct as f64 / total as f64,
        })
        .collect();
    let mca = per_class.iter().map(|c| c.accuracy).sum::<f64>() / per_class.len() as f64;
    Ok(McaReport { per_class, mca })
}

/// `2ab/(a+b)`, defined as 0 when both are 0.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GzslReport {
    /// Unseen test samples scored against the joint label space, percent.
    pub a_u: f64,
    /// Held-out seen samples scored against the joint label space, percent.
    pub a_s: f64,
    pub h: f64,
}

impl GzslReport {
    pub fn from_accuracies(a_u: f64, a_s: f64) -> Result<Self> {
        for (name, v) in [("A_U->T", a_u), ("A_S->T", a_s)] {
            if !(0.0..=100.0).contains(&v) {
                return Err(ZslError::invalid(format!(
                    "{name} = {v} is not a percentage"
                )));
            }
        }
        Ok(Self {
            a_u,
            a_s,
            h: harmonic_mean(a_u, a_s),
        })
    }

    pub fn to_csv(&self) -> String {
        format!("a_u,a_s,h\n{:.6},{:.6},{:.6}\n", self.a_u, self.a_s, self.h)
    }
}

/// Predictions for one partition, made over the joint label space.
#[derive(Debug, Clone, Copy)]
pub struct Partition<'a> {
    pub predictions: &'a [ClassId],
    pub labels: &'a [ClassId],
}

/// Per-class MCA of each partition over `joint_classes`, and their harmonic
/// mean.
pub fn gzsl_eval(
    unseen: Partition<'_>,
    seen: Partition<'_>,
    joint_classes: &[ClassId],
) -> Result<GzslReport> {
    if unseen.labels.is_empty() || seen.labels.is_empty() {
        return Err(ZslError::invalid(
            "generalized evaluation needs both an unseen and a seen partition",
        ));
    }
    let u = mca(unseen.predictions, unseen.labels, joint_classes)?;
    let s = mca(seen.predictions, seen.labels, joint_classes)?;
    GzslReport::from_accuracies(u.mca, s.mca)
}

/// Seeded per-class holdout: about `frac` of each seen class's samples go to
/// the test side, but every class keeps at least one training sample.
/// Returns `(train, test)` sample indices, each in ascending order.
pub fn seen_holdout(labels: &[ClassId], frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&frac) {
        return Err(ZslError::invalid(format!(
            "holdout fraction must be in [0, 1), got {frac}"
        )));
    }
    let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut train = Vec::with_capacity(labels.len());
    let mut test = Vec::new();
    for idx in by_class.values_mut() {
        idx.shuffle(&mut rng);
        let n_test = ((idx.len() as f64 * frac).round() as usize).min(idx.len() - 1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Number of samples per label.
pub fn class_counts(labels: &[ClassId]) -> HashMap<ClassId, usize> {
    let mut m = HashMap::new();
    for &l in labels {
        *m.entry(l).or_insert(0) += 1;
    }
    m
}
