use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::losses::softmax_loss_grad;
use super::train::TrainConfig;
use crate::domain::{AttributeMatrix, ClassId};
use crate::error::{Result, ZslError};
use crate::linalg::{l2_normalize, DenseMatrix};
use crate::scalar::Scalar;

/// Linear map `W_com` (`S·k × k`) from concatenated per-scale UA features to
/// a single UA feature.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleCombiner<T> {
    pub w_com: DenseMatrix<T>,
}

impl<T: Scalar> MultiScaleCombiner<T> {
    /// `(1/S)·[I; …; I]`: the combined feature is the mean of the scales.
    pub fn averaging(scales: usize, k: usize) -> Self {
        let w = T::one() / T::lit(scales as f64);
        Self {
            w_com: DenseMatrix::from_fn(
                scales * k,
                k,
                |i, j| if i % k == j { w } else { T::zero() },
            ),
        }
    }

    pub fn att_dim(&self) -> usize {
        self.w_com.cols()
    }

    pub fn scales(&self) -> usize {
        self.w_com.rows() / self.w_com.cols().max(1)
    }

    /// `W_comᵀ [φ_att^1; …; φ_att^S]`.
    pub fn combine(&self, per_scale: &[&[T]]) -> Result<Vec<T>> {
        let stacked: Vec<T> = per_scale.iter().flat_map(|v| v.iter().copied()).collect();
        if stacked.len() != self.w_com.rows() {
            return Err(ZslError::invalid(format!(
                "combiner expects {} stacked UA entries, got {}",
                self.w_com.rows(),
                stacked.len()
            )));
        }
        self.w_com.tr_matvec(&stacked)
    }
}

/// Concatenates per-scale LA features after scaling each to unit norm.
pub fn combine_la<T: Scalar>(per_scale: &[&[T]]) -> Vec<T> {
    per_scale.iter().flat_map(|v| l2_normalize(v)).collect()
}

fn hstack<T: Scalar>(blocks: &[DenseMatrix<T>]) -> Result<DenseMatrix<T>> {
    let rows = blocks.first().map_or(0, |b| b.rows());
    if blocks.iter().any(|b| b.rows() != rows) {
        return Err(ZslError::invalid(
            "per-scale UA features must have the same sample count",
        ));
    }
    let cols: usize = blocks.iter().map(|b| b.cols()).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        let mut off = 0;
        for b in blocks {
            out.row_mut(i)[off..off + b.cols()].copy_from_slice(b.row(i));
            off += b.cols();
        }
    }
    Ok(out)
}

/// Trains `W_com` with the softmax loss on stacked per-scale UA features,
/// starting from [`MultiScaleCombiner::averaging`]. The per-scale models are
/// not touched; callers pass their frozen UA outputs.
pub fn train_combiner<T: Scalar>(
    ua_per_scale: &[DenseMatrix<T>],
    labels: &[ClassId],
    attrs: &AttributeMatrix<T>,
    cfg: &TrainConfig,
) -> Result<(MultiScaleCombiner<T>, Vec<f64>)> {
    cfg.validate()?;
    let k = attrs.dim();
    if ua_per_scale.is_empty() || ua_per_scale.iter().any(|m| m.cols() != k) {
        return Err(ZslError::invalid(format!(
            "combiner needs at least one scale of {k}-dim UA features"
        )));
    }
    let stacked = hstack(ua_per_scale)?;
    if stacked.rows() != labels.len() {
        return Err(ZslError::invalid(
            "UA feature rows and labels differ in count",
        ));
    }
    let mut combiner = MultiScaleCombiner::averaging(ua_per_scale.len(), k);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let lr = T::lit(cfg.learning_rate);
    let mu = T::lit(cfg.momentum);
    let mut velocity = DenseMatrix::zeros(combiner.w_com.rows(), k);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = stacked.select_rows(chunk);
            let y: Vec<ClassId> = chunk.iter().map(|&i| labels[i]).collect();
            let g = softmax_loss_grad(&combiner.w_com, &x, &y, attrs)?;
            if !g.loss.is_finite() || !g.grad_w.is_finite() {
                return Err(ZslError::numeric(
                    format!("combiner epoch {epoch} batch {b}"),
                    "non-finite loss or gradient",
                ));
            }
            velocity.scale(mu);
            velocity.add_scaled(T::one(), &g.grad_w);
            combiner.w_com.add_scaled(-lr, &velocity);
            sum += g.loss.to_f64_lossy();
            batches += 1;
        }
        history.push(sum / batches as f64);
    }
    Ok((combiner, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averaging_of_identical_scales_is_identity() {
        let c = MultiScaleCombiner::<f64>::averaging(2, 3);
        let v = [0.3, -1.2, 4.0];
        let out = c.combine(&[&v, &v]).unwrap();
        for (a, b) in out.iter().zip(v) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(c.scales(), 2);
        assert!(c.combine(&[&v]).is_err());
    }

    #[test]
    fn combine_la_examples() {
        let out = combine_la(&[&[3.0, 4.0], &[0.0, 0.0]]);
        assert_eq!(out.len(), 4);
        assert!((out[0] - 0.6_f64).abs() < 1e-15 && (out[1] - 0.8).abs() < 1e-15);
        assert_eq!(&out[2..], &[0.0, 0.0]);

        let u = [0.6_f64, 0.8];
        let w = [1.0_f64, 0.0];
        let out = combine_la(&[&u, &w]);
        for (a, b) in out.iter().zip([0.6, 0.8, 1.0, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_learning_rate_leaves_combiner() {
        let attrs = AttributeMatrix::dense(DenseMatrix::<f64>::identity(2)).unwrap();
        let ua = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.8, 0.1]]).unwrap();
        let labels = vec![ClassId(0), ClassId(1), ClassId(0)];
        let mut cfg = TrainConfig::with_seed(1);
        cfg.learning_rate = 0.0;
        cfg.epochs = 3;
        let (c, hist) = train_combiner(&[ua.clone(), ua], &labels, &attrs, &cfg).unwrap();
        assert_eq!(c, MultiScaleCombiner::averaging(2, 2));
        assert_eq!(hist.len(), 3);
    }

    #[test]
    fn training_reduces_combiner_loss() {
        let attrs = AttributeMatrix::dense(DenseMatrix::<f64>::identity(2)).unwrap();
        let s1 = DenseMatrix::from_rows(&[[0.2, 0.1], [0.1, 0.3], [0.3, 0.0], [0.0, 0.2]]).unwrap();
        let s2 =
            DenseMatrix::from_rows(&[[0.5, -0.2], [-0.1, 0.6], [0.4, 0.1], [0.1, 0.5]]).unwrap();
        let labels = vec![ClassId(0), ClassId(1), ClassId(0), ClassId(1)];
        let mut cfg = TrainConfig::with_seed(2);
        cfg.epochs = 50;
        cfg.learning_rate = 0.5;
        let (_, hist) = train_combiner(&[s1, s2], &labels, &attrs, &cfg).unwrap();
        assert!(hist.last().unwrap() < hist.first().unwrap());
    }
}
