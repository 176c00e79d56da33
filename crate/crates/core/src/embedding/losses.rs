use crate::domain::{AttributeMatrix, ClassId};
use crate::error::{Result, ZslError};
use crate::linalg::{axpy, dot, squared_distance, DenseMatrix};
use crate::scalar::Scalar;

/// `s^c = ⟨Wᵀ f, a^c⟩` for every class row of `attrs`, in row order.
pub fn compatibility_scores<T: Scalar>(
    w: &DenseMatrix<T>,
    feature: &[T],
    attrs: &AttributeMatrix<T>,
) -> Result<Vec<T>> {
    if w.cols() != attrs.dim() {
        return Err(ZslError::invalid(format!(
            "projection has {} columns, attributes have dimension {}",
            w.cols(),
            attrs.dim()
        )));
    }
    if feature.len() != w.rows() {
        return Err(ZslError::invalid(format!(
            "feature has dimension {}, projection expects {}",
            feature.len(),
            w.rows()
        )));
    }
    let embedded = w.tr_matvec(feature)?;
    attrs.values().matvec(&embedded)
}

/// `log Σ exp(s)` and the softmax of `s`, computed around the maximum.
pub(crate) fn log_softmax_parts<T: Scalar>(scores: &[T]) -> (T, Vec<T>) {
    let (imax, &max) =
        scores.iter().enumerate().fold(
            (0, &scores[0]),
            |best, (i, s)| if *s > *best.1 { (i, s) } else { best },
        );
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let rest: T = exps
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != imax)
        .map(|(_, &e)| e)
        .sum();
    let total = T::one() + rest;
    let lse = max + rest.ln_1p();
    (lse, exps.into_iter().map(|e| e / total).collect())
}

/// Mean softmax cross-entropy with gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxGrad<T> {
    pub loss: T,
    /// `∂L/∂W`, `d × k`.
    pub grad_w: DenseMatrix<T>,
    /// `∂L/∂x_i` for every batch row, `n × d`.
    pub grad_features: DenseMatrix<T>,
}

/// `L = −(1/N) Σ_i log softmax(s_i)_{y_i}` over the classes in `attrs`, with
/// `s_i^c = ⟨Wᵀ x_i, a^c⟩`.
pub fn softmax_loss_grad<T: Scalar>(
    w: &DenseMatrix<T>,
    features: &DenseMatrix<T>,
    labels: &[ClassId],
    attrs: &AttributeMatrix<T>,
) -> Result<SoftmaxGrad<T>> {
    let (d, k) = w.shape();
    if k != attrs.dim() {
        return Err(ZslError::invalid(format!(
            "projection has {k} columns, attributes have dimension {}",
            attrs.dim()
        )));
    }
    if features.cols() != d {
        return Err(ZslError::invalid(format!(
            "features have dimension {}, projection expects {d}",
            features.cols()
        )));
    }
    if features.rows() != labels.len() || labels.is_empty() {
        return Err(ZslError::invalid(format!(
            "{} feature rows for {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let targets = labels
        .iter()
        .map(|&y| {
            attrs.position(y).ok_or_else(|| {
                ZslError::invalid(format!("label {y} is not among the scored classes"))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let a = attrs.values();
    let inv_n = T::one() / T::lit(labels.len() as f64);
    let mut loss = T::zero();
    let mut grad_w = DenseMatrix::zeros(d, k);
    let mut grad_features = DenseMatrix::zeros(features.rows(), d);

    for (i, (x, &target)) in features.row_iter().zip(&targets).enumerate() {
        let embedded = w.tr_matvec(x)?;
        let scores = a.matvec(&embedded)?;
        let (lse, mut probs) = log_softmax_parts(&scores);
        loss += lse - scores[target];
        // ∂L_i/∂s = (p − onehot) / N, pulled back onto the embedded vector
        probs[target] -= T::one();
        probs.iter_mut().for_each(|p| *p *= inv_n);
        let d_embedded = a.tr_matvec(&probs)?;
        grad_w.add_outer(T::one(), x, &d_embedded);
        let gx = w.matvec(&d_embedded)?;
        grad_features.row_mut(i).copy_from_slice(&gx);
    }

    Ok(SoftmaxGrad {
        loss: loss * inv_n,
        grad_w,
        grad_features,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad<T> {
    pub loss: T,
    pub d_anchor: Vec<T>,
    pub d_positive: Vec<T>,
    pub d_negative: Vec<T>,
}

/// `max(0, m + ‖a − p‖² − ‖a − n‖²)` with its gradients, which vanish when
/// the hinge is inactive.
pub fn triplet_loss_grad<T: Scalar>(
    anchor: &[T],
    positive: &[T],
    negative: &[T],
    margin: T,
) -> TripletGrad<T> {
    assert!(
        anchor.len() == positive.len() && anchor.len() == negative.len(),
        "triplet members must share a dimension"
    );
    let zeros = || vec![T::zero(); anchor.len()];
    let hinge = margin + squared_distance(anchor, positive) - squared_distance(anchor, negative);
    if hinge <= T::zero() {
        return TripletGrad {
            loss: T::zero(),
            d_anchor: zeros(),
            d_positive: zeros(),
            d_negative: zeros(),
        };
    }
    let two = T::lit(2.0);
    let d_anchor = positive
        .iter()
        .zip(negative)
        .map(|(&p, &n)| two * (n - p))
        .collect();
    let d_positive = anchor
        .iter()
        .zip(positive)
        .map(|(&a, &p)| two * (p - a))
        .collect();
    let d_negative = anchor
        .iter()
        .zip(negative)
        .map(|(&a, &n)| two * (a - n))
        .collect();
    TripletGrad {
        loss: hinge,
        d_anchor,
        d_positive,
        d_negative,
    }
}

/// Mean triplet loss over `triplets` of rows of `lat`, and its gradient
/// w.r.t. every row of `lat`. An empty triplet list gives zero loss.
pub(crate) fn batch_triplet_loss<T: Scalar>(
    lat: &DenseMatrix<T>,
    triplets: &[super::Triplet],
    margin: T,
) -> (T, DenseMatrix<T>) {
    let mut grad = DenseMatrix::zeros(lat.rows(), lat.cols());
    if triplets.is_empty() {
        return (T::zero(), grad);
    }
    let inv = T::one() / T::lit(triplets.len() as f64);
    let mut loss = T::zero();
    for t in triplets {
        let g = triplet_loss_grad(
            lat.row(t.anchor),
            lat.row(t.positive),
            lat.row(t.negative),
            margin,
        );
        if g.loss == T::zero() {
            continue;
        }
        loss += g.loss;
        axpy(inv, &g.d_anchor, grad.row_mut(t.anchor));
        axpy(inv, &g.d_positive, grad.row_mut(t.positive));
        axpy(inv, &g.d_negative, grad.row_mut(t.negative));
    }
    (loss * inv, grad)
}

/// `⟨φ_att, a^c⟩` for every class row, given an already projected feature.
pub fn embedded_scores<T: Scalar>(phi_att: &[T], attrs: &AttributeMatrix<T>) -> Result<Vec<T>> {
    if phi_att.len() != attrs.dim() {
        return Err(ZslError::invalid(format!(
            "embedded feature has dimension {}, attributes have {}",
            phi_att.len(),
            attrs.dim()
        )));
    }
    Ok(attrs.values().row_iter().map(|a| dot(phi_att, a)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{central_diff, rel_err};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(v: &[usize]) -> Vec<ClassId> {
        v.iter().copied().map(ClassId).collect()
    }

    #[test]
    fn score_examples() {
        let attrs = AttributeMatrix::dense(DenseMatrix::<f64>::identity(2)).unwrap();
        let eye = DenseMatrix::identity(2);
        assert_eq!(
            compatibility_scores(&eye, &[1.0, 0.0], &attrs).unwrap(),
            vec![1.0, 0.0]
        );
        assert_eq!(
            compatibility_scores(&eye, &[0.0, 0.0], &attrs).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(compatibility_scores(&eye, &[1.0], &attrs).is_err());

        let attrs3 = AttributeMatrix::dense(DenseMatrix::<f64>::identity(3)).unwrap();
        let s = compatibility_scores(&DenseMatrix::identity(3), attrs3.values().row(1), &attrs3)
            .unwrap();
        assert_eq!(s, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_weights_give_log_class_count() {
        let attrs = AttributeMatrix::dense(
            DenseMatrix::from_rows(&[[0.2, 0.9], [0.4, 0.1], [0.7, 0.7], [0.0, 1.0]]).unwrap(),
        )
        .unwrap();
        let x = DenseMatrix::from_rows(&[[1.0, -2.0, 0.5], [3.0, 0.0, 1.0]]).unwrap();
        let g = softmax_loss_grad(&DenseMatrix::zeros(3, 2), &x, &ids(&[1, 3]), &attrs).unwrap();
        assert!((g.loss - 4.0_f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn large_margin_drives_loss_to_zero() {
        let attrs = AttributeMatrix::dense(DenseMatrix::<f64>::identity(2)).unwrap();
        let x = DenseMatrix::from_rows(&[[50.0, 0.0]]).unwrap();
        let g = softmax_loss_grad(&DenseMatrix::identity(2), &x, &ids(&[0]), &attrs).unwrap();
        assert!(g.loss < 1e-20);
        assert!(g.loss >= 0.0);
    }

    #[test]
    fn label_outside_attrs_rejected() {
        let attrs = AttributeMatrix::dense(DenseMatrix::<f64>::identity(2)).unwrap();
        let x = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(softmax_loss_grad(&DenseMatrix::identity(2), &x, &ids(&[5]), &attrs).is_err());
    }

    #[test]
    fn softmax_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (d, k, c, n) = (4, 3, 5, 6);
        let attrs = AttributeMatrix::dense(DenseMatrix::from_fn(c, k, |_, _| {
            rng.random_range(0.0..1.0)
        }))
        .unwrap();
        let w = DenseMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0));
        let x = DenseMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let labels: Vec<ClassId> = (0..n).map(|i| ClassId(i % c)).collect();
        let g = softmax_loss_grad(&w, &x, &labels, &attrs).unwrap();

        let fd_w = central_diff(
            |p| {
                let wp = DenseMatrix::from_vec(d, k, p.to_vec()).unwrap();
                softmax_loss_grad(&wp, &x, &labels, &attrs).unwrap().loss
            },
            w.as_slice(),
            1e-5,
        );
        for (a, b) in g.grad_w.as_slice().iter().zip(&fd_w) {
            assert!(rel_err(*a, *b) < 1e-4, "{a} vs {b}");
        }
        let fd_x = central_diff(
            |p| {
                let xp = DenseMatrix::from_vec(n, d, p.to_vec()).unwrap();
                softmax_loss_grad(&w, &xp, &labels, &attrs).unwrap().loss
            },
            x.as_slice(),
            1e-5,
        );
        for (a, b) in g.grad_features.as_slice().iter().zip(&fd_x) {
            assert!(rel_err(*a, *b) < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn triplet_examples() {
        // d_pos = 0, d_neg = 2
        let g = triplet_loss_grad(&[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0], 1.0_f64);
        assert_eq!(g.loss, 0.0);
        assert!(g
            .d_anchor
            .iter()
            .chain(&g.d_positive)
            .chain(&g.d_negative)
            .all(|&v| v == 0.0));
        // d_pos = 1, d_neg = 0.5
        let s = 0.5_f64.sqrt();
        let g = triplet_loss_grad(&[0.0, 0.0], &[1.0, 0.0], &[0.0, s], 1.0);
        assert!((g.loss - 1.5).abs() < 1e-15);
    }

    #[test]
    fn triplet_gradient_matches_finite_differences() {
        let a = [0.3, -0.2, 0.9];
        let p = [0.8, 0.1, -0.4];
        let n = [0.1, 0.0, 0.5];
        let g = triplet_loss_grad(&a, &p, &n, 1.0);
        assert!(g.loss > 0.0);
        let all: Vec<f64> = a.iter().chain(&p).chain(&n).copied().collect();
        let fd = central_diff(
            |v| triplet_loss_grad(&v[0..3], &v[3..6], &v[6..9], 1.0).loss,
            &all,
            1e-5,
        );
        let an: Vec<f64> = g
            .d_anchor
            .iter()
            .chain(&g.d_positive)
            .chain(&g.d_negative)
            .copied()
            .collect();
        for (x, y) in an.iter().zip(&fd) {
            assert!(rel_err(*x, *y) < 1e-4);
        }
    }

    proptest! {
        #[test]
        fn triplet_loss_nonnegative_and_zero_iff_separated(
            a in proptest::collection::vec(-2.0..2.0f64, 3),
            p in proptest::collection::vec(-2.0..2.0f64, 3),
            n in proptest::collection::vec(-2.0..2.0f64, 3),
            m in 0.1..2.0f64,
        ) {
            let g = triplet_loss_grad(&a, &p, &n, m);
            prop_assert!(g.loss >= 0.0);
            let separated = squared_distance(&a, &n) >= squared_distance(&a, &p) + m;
            prop_assert_eq!(g.loss == 0.0, separated);
        }

        #[test]
        fn softmax_loss_shift_invariant(
            shift in proptest::collection::vec(-3.0..3.0f64, 2),
            x in proptest::collection::vec(-2.0..2.0f64, 3),
        ) {
            let attrs_m = DenseMatrix::from_rows(&[[0.1, 0.9], [0.5, 0.2], [0.8, 0.6]]).unwrap();
            let shifted = DenseMatrix::from_fn(3, 2, |i, j| attrs_m[(i, j)] + shift[j]);
            let w = DenseMatrix::from_rows(&[[0.3, -0.1], [0.2, 0.4], [-0.5, 0.1]]).unwrap();
            let x = DenseMatrix::from_vec(1, 3, x).unwrap();
            let labels = ids(&[2]);
            let base = softmax_loss_grad(&w, &x, &labels, &AttributeMatrix::dense(attrs_m).unwrap()).unwrap();
            let moved = softmax_loss_grad(&w, &x, &labels, &AttributeMatrix::dense(shifted).unwrap()).unwrap();
            prop_assert!((base.loss - moved.loss).abs() < 1e-10);
        }

        #[test]
        fn positive_rescaling_keeps_argmax(
            x in proptest::collection::vec(-2.0..2.0f64, 3),
            scale in 0.01..100.0f64,
        ) {
            let attrs = AttributeMatrix::dense(
                DenseMatrix::from_rows(&[[0.1, 0.9], [0.5, 0.2], [0.8, 0.6]]).unwrap()).unwrap();
            let w = DenseMatrix::from_rows(&[[0.3, -0.1], [0.2, 0.4], [-0.5, 0.1]]).unwrap();
            let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, s)| if *s > v[b] { i } else { b });
            let s1 = compatibility_scores(&w, &x, &attrs).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
            let s2 = compatibility_scores(&w, &xs, &attrs).unwrap();
            prop_assert_eq!(argmax(&s1), argmax(&s2));
        }
    }
}
