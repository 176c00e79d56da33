use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{batch_triplet_loss, softmax_loss_grad};
use super::sampling::{sample_triplets, Triplet, TripletStrategy};
use crate::domain::{AttributeMatrix, ClassId, EmbeddingModel, FeatureSet};
use crate::error::{Result, ZslError};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Per-term weights of the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub att: f64,
    pub lat: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { att: 1.0, lat: 1.0 }
    }
}

fn default_epochs() -> usize {
    40
}
fn default_learning_rate() -> f64 {
    0.05
}
fn default_batch_size() -> usize {
    32
}
fn default_margin() -> f64 {
    1.0
}

/// SGD settings. The seed has no default so that every run is reproducible
/// from its config alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub triplet_strategy: TripletStrategy,
    pub seed: u64,
    #[serde(default)]
    pub loss_weights: LossWeights,
    /// Latent dimension; defaults to the attribute dimension.
    #[serde(default)]
    pub k_lat: Option<usize>,
    /// Heavy-ball momentum coefficient; 0 is plain SGD.
    #[serde(default)]
    pub momentum: f64,
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            margin: default_margin(),
            triplet_strategy: TripletStrategy::default(),
            seed,
            loss_weights: LossWeights::default(),
            k_lat: None,
            momentum: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(ZslError::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ZslError::invalid(
                "learning rate must be finite and non-negative",
            ));
        }
        if self.batch_size == 0 || (self.loss_weights.lat > 0.0 && self.batch_size < 2) {
            return Err(ZslError::invalid(
                "batch size must be at least 2 when the triplet term is active",
            ));
        }
        if self.margin.is_nan() || self.margin <= 0.0 {
            return Err(ZslError::invalid("triplet margin must be positive"));
        }
        if !(self.loss_weights.att >= 0.0 && self.loss_weights.lat >= 0.0) {
            return Err(ZslError::invalid("loss weights must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ZslError::invalid("momentum must lie in [0, 1)"));
        }
        if self.k_lat == Some(0) {
            return Err(ZslError::invalid("latent dimension must be at least 1"));
        }
        Ok(())
    }
}

/// Losses of one scale, averaged over the batches of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub scale: u32,
    pub l_att: f64,
    pub l_lat: f64,
    /// Weighted sum `w_att·L_att + w_lat·L_lat`.
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn for_scale(&self, scale: u32) -> impl Iterator<Item = &EpochRecord> + '_ {
        self.records.iter().filter(move |r| r.scale == scale)
    }

    /// Sum over scales of the weighted loss for each epoch, in epoch order.
    pub fn epoch_totals(&self) -> Vec<f64> {
        let epochs = self.records.iter().map(|r| r.epoch).max().unwrap_or(0);
        (1..=epochs)
            .map(|e| {
                self.records
                    .iter()
                    .filter(|r| r.epoch == e)
                    .map(|r| r.total)
                    .sum()
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,scale,l_att,l_lat,total\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{:e},{:e},{:e}\n",
                r.epoch, r.scale, r.l_att, r.l_lat, r.total
            ));
        }
        s
    }
}

/// Loss terms of one scale on one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms<T> {
    pub l_att: T,
    pub l_lat: T,
}

/// Objective value and weight gradients over every scale for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchObjective<T> {
    pub terms: Vec<LossTerms<T>>,
    pub total: T,
    /// `(∂L/∂W_att, ∂L/∂W_lat)` per scale.
    pub grads: Vec<(DenseMatrix<T>, DenseMatrix<T>)>,
}

/// Weighted sum over scales of the softmax term on `W_att` and the triplet
/// term on `W_lat`, with `triplets[s]` indexing rows of `batch[s]`.
pub fn batch_objective<T: Scalar>(
    models: &[EmbeddingModel<T>],
    batch: &[DenseMatrix<T>],
    labels: &[ClassId],
    attrs: &AttributeMatrix<T>,
    triplets: &[Vec<Triplet>],
    margin: T,
    weights: LossWeights,
) -> Result<BatchObjective<T>> {
    if models.len() != batch.len() || models.len() != triplets.len() {
        return Err(ZslError::invalid(
            "one batch and triplet list is needed per scale",
        ));
    }
    let w_att = T::lit(weights.att);
    let w_lat = T::lit(weights.lat);
    let mut terms = Vec::with_capacity(models.len());
    let mut grads = Vec::with_capacity(models.len());
    let mut total = T::zero();
    for ((model, x), trip) in models.iter().zip(batch).zip(triplets) {
        let sm = softmax_loss_grad(&model.w_att, x, labels, attrs)?;
        let mut g_att = sm.grad_w;
        g_att.scale(w_att);

        let lat = x.matmul(&model.w_lat)?;
        let (l_lat, d_lat) = batch_triplet_loss(&lat, trip, margin);
        // ∂L/∂W_lat = Xᵀ ∂L/∂Φ_lat
        let mut g_lat = x.transpose().matmul(&d_lat)?;
        g_lat.scale(w_lat);

        total += w_att * sm.loss + w_lat * l_lat;
        terms.push(LossTerms {
            l_att: sm.loss,
            l_lat,
        });
        grads.push((g_att, g_lat));
    }
    Ok(BatchObjective {
        terms,
        total,
        grads,
    })
}

/// Uniform `[-1/√d, 1/√d]` initialization for every scale.
pub fn init_models<T: Scalar>(
    features: &[FeatureSet<T>],
    attrs: &AttributeMatrix<T>,
    cfg: &TrainConfig,
) -> Vec<EmbeddingModel<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = attrs.dim();
    let k_lat = cfg.k_lat.unwrap_or(k);
    features
        .iter()
        .map(|fs| {
            let d = fs.dim();
            let bound = 1.0 / (d.max(1) as f64).sqrt();
            let mut draw = |rows, cols| {
                DenseMatrix::from_fn(rows, cols, |_, _| T::lit(rng.random_range(-bound..=bound)))
            };
            let w_att = draw(d, k);
            let w_lat = draw(d, k_lat);
            EmbeddingModel {
                scale_id: fs.scale_id,
                w_att,
                w_lat,
            }
        })
        .collect()
}

fn check_training_inputs<T: Scalar>(
    features: &[FeatureSet<T>],
    attrs: &AttributeMatrix<T>,
) -> Result<()> {
    let first = features
        .first()
        .ok_or_else(|| ZslError::invalid("training needs at least one scale"))?;
    for fs in features {
        if fs.labels != first.labels {
            return Err(ZslError::invalid(format!(
                "scale {} does not share the sample list of scale {}",
                fs.scale_id, first.scale_id
            )));
        }
    }
    if let Some(l) = first.labels.iter().find(|l| !attrs.contains(**l)) {
        return Err(ZslError::invalid(format!(
            "training label {l} has no seen-class attribute row"
        )));
    }
    Ok(())
}

/// Mini-batch SGD on `W_att` and `W_lat` of every scale, from the seeded
/// initialization of [`init_models`].
///
/// `features` must hold seen-class training samples only, with the same
/// samples in the same order at every scale; `attrs` holds the seen-class
/// rows the softmax normalizes over.
pub fn train<T: Scalar>(
    features: &[FeatureSet<T>],
    attrs: &AttributeMatrix<T>,
    cfg: &TrainConfig,
) -> Result<(Vec<EmbeddingModel<T>>, TrainReport)> {
    cfg.validate()?;
    check_training_inputs(features, attrs)?;
    let models = init_models(features, attrs, cfg);
    train_from(models, features, attrs, cfg)
}

/// Continues training from the given models.
pub fn train_from<T: Scalar>(
    mut models: Vec<EmbeddingModel<T>>,
    features: &[FeatureSet<T>],
    attrs: &AttributeMatrix<T>,
    cfg: &TrainConfig,
) -> Result<(Vec<EmbeddingModel<T>>, TrainReport)> {
    cfg.validate()?;
    check_training_inputs(features, attrs)?;
    if models.len() != features.len() {
        return Err(ZslError::invalid("one model is needed per scale"));
    }
    for (m, fs) in models.iter().zip(features) {
        if m.feature_dim() != fs.dim() || m.att_dim() != attrs.dim() {
            return Err(ZslError::invalid(format!(
                "model for scale {} does not match the feature or attribute dimension",
                fs.scale_id
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let n = features[0].len();
    let labels = &features[0].labels;
    let lr = T::lit(cfg.learning_rate);
    let mu = T::lit(cfg.momentum);
    let margin = T::lit(cfg.margin);
    let use_triplets = cfg.loss_weights.lat > 0.0;

    let mut velocity: Vec<(DenseMatrix<T>, DenseMatrix<T>)> = models
        .iter()
        .map(|m| {
            (
                DenseMatrix::zeros(m.w_att.rows(), m.w_att.cols()),
                DenseMatrix::zeros(m.w_lat.rows(), m.w_lat.cols()),
            )
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    let mut report = TrainReport::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = vec![(0.0_f64, 0.0_f64); models.len()];
        let mut batches = 0usize;

        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch_labels: Vec<ClassId> = chunk.iter().map(|&i| labels[i]).collect();
            let batch: Vec<DenseMatrix<T>> = features
                .iter()
                .map(|fs| fs.features.select_rows(chunk))
                .collect();
            let triplets: Vec<Vec<Triplet>> = if use_triplets {
                models
                    .iter()
                    .zip(&batch)
                    .map(|(m, x)| {
                        let lat = if cfg.triplet_strategy == TripletStrategy::SemiHard {
                            x.matmul(&m.w_lat)
                        } else {
                            Ok(DenseMatrix::zeros(0, 0))
                        }?;
                        Ok(sample_triplets(
                            &batch_labels,
                            cfg.triplet_strategy,
                            &lat,
                            &mut rng,
                        ))
                    })
                    .collect::<Result<_>>()?
            } else {
                vec![Vec::new(); models.len()]
            };

            let obj = batch_objective(
                &models,
                &batch,
                &batch_labels,
                attrs,
                &triplets,
                margin,
                cfg.loss_weights,
            )?;
            let finite = obj.total.is_finite()
                && obj
                    .grads
                    .iter()
                    .all(|(a, l)| a.is_finite() && l.is_finite());
            if !finite {
                return Err(ZslError::numeric(
                    format!("epoch {epoch} batch {b}"),
                    "non-finite loss or gradient",
                ));
            }

            for (s, ((model, vel), (g_att, g_lat))) in models
                .iter_mut()
                .zip(&mut velocity)
                .zip(obj.grads)
                .enumerate()
            {
                if cfg.momentum > 0.0 {
                    vel.0.scale(mu);
                    vel.0.add_scaled(T::one(), &g_att);
                    vel.1.scale(mu);
                    vel.1.add_scaled(T::one(), &g_lat);
                    model.w_att.add_scaled(-lr, &vel.0);
                    model.w_lat.add_scaled(-lr, &vel.1);
                } else {
                    model.w_att.add_scaled(-lr, &g_att);
                    model.w_lat.add_scaled(-lr, &g_lat);
                }
                sums[s].0 += obj.terms[s].l_att.to_f64_lossy();
                sums[s].1 += obj.terms[s].l_lat.to_f64_lossy();
            }
            batches += 1;
        }

        for (model, (att, lat)) in models.iter().zip(sums) {
            let l_att = att / batches as f64;
            let l_lat = lat / batches as f64;
            report.records.push(EpochRecord {
                epoch,
                scale: model.scale_id,
                l_att,
                l_lat,
                total: cfg.loss_weights.att * l_att + cfg.loss_weights.lat * l_lat,
            });
        }
        log::debug!(
            "epoch {epoch}: total {:.6}",
            report.epoch_totals().last().copied().unwrap_or(0.0)
        );
    }
    Ok((models, report))
}
