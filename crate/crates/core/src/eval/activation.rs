use serde::Serialize;

use super::predict::Space;
use crate::domain::{ClassId, EmbeddingModel, FeatureSet};
use crate::error::{Result, ZslError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedSample {
    pub index: usize,
    pub label: ClassId,
    pub value: f64,
}

/// Samples with the largest and smallest values of one embedded-feature
/// element.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationReport {
    pub space: Space,
    pub element: usize,
    pub largest: Vec<RankedSample>,
    pub smallest: Vec<RankedSample>,
}

impl ActivationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("end,rank,index,label,value\n");
        for (end, list) in [("largest", &self.largest), ("smallest", &self.smallest)] {
            for (r, s) in list.iter().enumerate() {
                out.push_str(&format!(
                    "{end},{},{},{},{}\n",
                    r + 1,
                    s.index,
                    s.label,
                    s.value
                ));
            }
        }
        out
    }
}

/// Ranks samples by element `element` of `φ_att` (`Space::Ua`) or `φ_lat`
/// (`Space::La`). Equal values keep sample-index order; `top_k` is clamped
/// to the sample count.
pub fn activation_report<T: Scalar>(
    model: &EmbeddingModel<T>,
    features: &FeatureSet<T>,
    space: Space,
    element: usize,
    top_k: usize,
) -> Result<ActivationReport> {
    let dim = match space {
        Space::Ua => model.att_dim(),
        Space::La => model.lat_dim(),
        Space::UaLa => {
            return Err(ZslError::invalid(
                "activation reports are per space: use ua or la",
            ));
        }
    };
    if element >= dim {
        return Err(ZslError::invalid(format!(
            "element {element} is out of range for the {dim}-dim {space} space"
        )));
    }
    let (att, lat) = model.project_all(&features.features)?;
    let m = if space == Space::Ua { att } else { lat };
    let mut ranked: Vec<RankedSample> = (0..m.rows())
        .map(|i| RankedSample {
            index: i,
            label: features.labels[i],
            value: m[(i, element)].to_f64_lossy(),
        })
        .collect();
    let k = top_k.min(ranked.len());
    // stable sorts keep index order among equal values
    ranked.sort_by(|a, b| b.value.total_cmp(&a.value));
    let largest = ranked[..k].to_vec();
    ranked.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.index.cmp(&b.index)));
    let smallest = ranked[..k].to_vec();
    Ok(ActivationReport {
        space,
        element,
        largest,
        smallest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn fixture() -> (EmbeddingModel<f64>, FeatureSet<f64>) {
        // UA element 0 is the class-0 indicator; LA element 0 is constant
        let model = EmbeddingModel::new(
            0,
            DenseMatrix::from_rows(&[[1.0], [0.0], [0.0]]).unwrap(),
            DenseMatrix::from_rows(&[[0.0], [0.0], [1.0]]).unwrap(),
        )
        .unwrap();
        let x = DenseMatrix::from_rows(&[
            [0.0, 1.0, 1.0],
            [1.0, 0.0, 1.0],
            [0.0, 1.0, 1.0],
            [1.0, 0.0, 1.0],
            [0.0, 1.0, 1.0],
        ])
        .unwrap();
        let labels = vec![ClassId(1), ClassId(0), ClassId(1), ClassId(0), ClassId(1)];
        (model, FeatureSet::new(0, x, labels).unwrap())
    }

    #[test]
    fn indicator_element_selects_its_class() {
        let (m, f) = fixture();
        let r = activation_report(&m, &f, Space::Ua, 0, 2).unwrap();
        assert!(r.largest.iter().all(|s| s.label == ClassId(0)));
        assert_eq!(
            r.largest.iter().map(|s| s.index).collect::<Vec<_>>(),
            vec![1, 3]
        );
        assert_eq!(
            r.smallest.iter().map(|s| s.index).collect::<Vec<_>>(),
            vec![0, 2]
        );
    }

    #[test]
    fn constant_element_ranks_by_index_and_clamps() {
        let (m, f) = fixture();
        let r = activation_report(&m, &f, Space::La, 0, 10).unwrap();
        assert_eq!(
            r.largest.iter().map(|s| s.index).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
        assert_eq!(
            r.smallest.iter().map(|s| s.index).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
        assert!(r.to_csv().lines().count() == 11);
    }

    #[test]
    fn out_of_range_element() {
        let (m, f) = fixture();
        assert!(activation_report(&m, &f, Space::La, 1, 3).is_err());
        assert!(activation_report(&m, &f, Space::UaLa, 0, 3).is_err());
    }
}
