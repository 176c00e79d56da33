use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ClassId;
use crate::linalg::{squared_distance, DenseMatrix};
use crate::scalar::Scalar;

/// Indices into a batch: `anchor` and `positive` share a class, `negative`
/// does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripletStrategy {
    /// Uniformly random positive and negative per anchor.
    #[default]
    Random,
    /// Random positive; the closest negative that is still farther than the
    /// positive. Falls back to a random negative when none qualifies.
    SemiHard,
}

/// At most one triplet per anchor, so a batch yields at most `labels.len()`
/// triplets. Anchors whose class has no second sample in the batch are
/// skipped; a batch with fewer than two classes yields nothing.
///
/// `lat` holds the latent embedding of each batch row and is only read by
/// [`TripletStrategy::SemiHard`].
pub fn sample_triplets<T: Scalar, R: Rng + ?Sized>(
    labels: &[ClassId],
    strategy: TripletStrategy,
    lat: &DenseMatrix<T>,
    rng: &mut R,
) -> Vec<Triplet> {
    let mut by_class: HashMap<ClassId, Vec<usize>> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Vec::new();
    }
    if strategy == TripletStrategy::SemiHard {
        assert_eq!(lat.rows(), labels.len(), "one latent row per batch sample");
    }

    let mut out = Vec::new();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (anchor, &label) in labels.iter().enumerate() {
        positives.clear();
        positives.extend(by_class[&label].iter().copied().filter(|&p| p != anchor));
        let Some(&positive) = positives.choose(rng) else {
            continue;
        };
        negatives.clear();
        negatives.extend((0..labels.len()).filter(|&n| labels[n] != label));

        let negative = match strategy {
            TripletStrategy::Random => *negatives.choose(rng).expect("at least two classes"),
            TripletStrategy::SemiHard => {
                let d_pos = squared_distance(lat.row(anchor), lat.row(positive));
                let semi_hard = negatives
                    .iter()
                    .map(|&n| (n, squared_distance(lat.row(anchor), lat.row(n))))
                    .filter(|&(_, d)| d > d_pos)
                    .fold(None, |best: Option<(usize, T)>, cur| match best {
                        Some(b) if b.1 <= cur.1 => Some(b),
                        _ => Some(cur),
                    });
                match semi_hard {
                    Some((n, _)) => n,
                    None => *negatives.choose(rng).expect("at least two classes"),
                }
            }
        };
        out.push(Triplet {
            anchor,
            positive,
            negative,
        });
    }
    out
}
