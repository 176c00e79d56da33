//! End-to-end stages over an in-memory dataset: train, transfer, evaluate.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_dataset, AttributeMatrix, AttributeNormalization, ClassId, EmbeddingModel, FeatureSet,
    Split,
};
use crate::embedding::{
    combine_la, init_models, train, train_combiner, MultiScaleCombiner, TrainConfig, TrainReport,
};
use crate::error::{Result, ZslError};
use crate::eval::{
    gzsl_eval, mca, predict_batch, seen_holdout, BatchPrediction, GzslReport, McaReport, Partition,
    Space,
};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;
use crate::transfer::{
    class_means, unseen_prototypes, PrototypeSet, TransferConfig, TransferWeights,
};

/// Per-scale features over the same samples, class attributes and a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub scales: Vec<FeatureSet<T>>,
    pub attrs: AttributeMatrix<T>,
    pub split: Split,
}

impl<T: Scalar> Dataset<T> {
    /// Fails with the full violation list when the parts are inconsistent.
    pub fn new(
        scales: Vec<FeatureSet<T>>,
        attrs: AttributeMatrix<T>,
        split: Split,
    ) -> Result<Self> {
        let report = validate_dataset(&scales, &attrs, &split);
        if !report.is_valid() {
            let list: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            return Err(ZslError::invalid(format!(
                "dataset is inconsistent: {}",
                list.join("; ")
            )));
        }
        Ok(Self {
            scales,
            attrs,
            split,
        })
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.scales[0].labels
    }

    pub fn seen_attrs(&self, norm: AttributeNormalization) -> Result<AttributeMatrix<T>> {
        self.attrs.normalized(norm).subset(&self.split.seen_classes)
    }

    pub fn unseen_attrs(&self, norm: AttributeNormalization) -> Result<AttributeMatrix<T>> {
        self.attrs
            .normalized(norm)
            .subset(&self.split.unseen_classes)
    }

    pub fn unseen_indices(&self) -> Vec<usize> {
        self.scales[0].indices_of(&self.split.unseen_classes)
    }

    pub fn seen_indices(&self) -> Vec<usize> {
        self.scales[0].indices_of(&self.split.seen_classes)
    }
}

fn default_holdout() -> f64 {
    0.2
}

/// Settings shared by every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    #[serde(default)]
    pub transfer: TransferConfig,
    /// Fraction of each seen class held out of training for generalized
    /// evaluation.
    #[serde(default = "default_holdout")]
    pub holdout_frac: f64,
    #[serde(default)]
    pub attr_normalization: AttributeNormalization,
    /// Z-score each term of the combined score over the test batch.
    #[serde(default)]
    pub zscore_terms: bool,
    /// Learn `W_com` when there is more than one scale; otherwise the scales
    /// are averaged.
    #[serde(default = "default_true")]
    pub train_combiner: bool,
}

fn default_true() -> bool {
    true
}

impl PipelineConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            train: TrainConfig::with_seed(seed),
            transfer: TransferConfig::default(),
            holdout_frac: default_holdout(),
            attr_normalization: AttributeNormalization::default(),
            zscore_terms: false,
            train_combiner: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train
            .validate()
            .map_err(|e| ZslError::Config(e.to_string()))?;
        self.transfer.validate()?;
        if !(0.0..1.0).contains(&self.holdout_frac) {
            return Err(ZslError::Config(format!(
                "holdout_frac must lie in [0, 1), got {}",
                self.holdout_frac
            )));
        }
        Ok(())
    }
}

/// Per-scale models, the optional combiner, and which seen samples were used
/// for training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels<T> {
    pub models: Vec<EmbeddingModel<T>>,
    pub combiner: Option<MultiScaleCombiner<T>>,
    pub report: TrainReport,
    pub combiner_history: Vec<f64>,
    /// Seen-class sample indices used for training, ascending.
    pub train_indices: Vec<usize>,
    /// Seen-class sample indices held out for generalized evaluation.
    pub holdout_indices: Vec<usize>,
}

fn split_seen<T: Scalar>(
    ds: &Dataset<T>,
    cfg: &PipelineConfig,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let seen = ds.seen_indices();
    if seen.is_empty() {
        return Err(ZslError::invalid("no samples of seen classes"));
    }
    let seen_labels: Vec<ClassId> = seen.iter().map(|&i| ds.labels()[i]).collect();
    let (tr, ho) = seen_holdout(&seen_labels, cfg.holdout_frac, cfg.train.seed)?;
    Ok((
        tr.iter().map(|&i| seen[i]).collect(),
        ho.iter().map(|&i| seen[i]).collect(),
    ))
}

/// Trains one model per scale on the seen-class training samples, then the
/// combiner when there are several scales.
pub fn fit<T: Scalar>(ds: &Dataset<T>, cfg: &PipelineConfig) -> Result<TrainedModels<T>> {
    cfg.validate()?;
    let (train_indices, holdout_indices) = split_seen(ds, cfg)?;
    let attrs = ds.seen_attrs(cfg.attr_normalization)?;
    let scales: Vec<FeatureSet<T>> = ds.scales.iter().map(|s| s.select(&train_indices)).collect();
    info!(
        "training {} scale(s) on {} samples of {} seen classes ({} held out)",
        scales.len(),
        train_indices.len(),
        attrs.len(),
        holdout_indices.len()
    );
    let (models, report) = train(&scales, &attrs, &cfg.train)?;
    if let Some(last) = report.epoch_totals().last() {
        info!("final epoch objective {last:.6}");
    }

    let (combiner, combiner_history) = if models.len() > 1 {
        if cfg.train_combiner {
            let ua = models
                .iter()
                .zip(&scales)
                .map(|(m, s)| m.project_all(&s.features).map(|(a, _)| a))
                .collect::<Result<Vec<_>>>()?;
            let (c, hist) = train_combiner(&ua, &scales[0].labels, &attrs, &cfg.train)?;
            debug!("combiner loss {:?} -> {:?}", hist.first(), hist.last());
            (Some(c), hist)
        } else {
            (
                Some(MultiScaleCombiner::averaging(models.len(), attrs.dim())),
                Vec::new(),
            )
        }
    } else {
        (None, Vec::new())
    };

    Ok(TrainedModels {
        models,
        combiner,
        report,
        combiner_history,
        train_indices,
        holdout_indices,
    })
}

/// Randomly initialized models, the untrained baseline.
pub fn untrained<T: Scalar>(ds: &Dataset<T>, cfg: &PipelineConfig) -> Result<TrainedModels<T>> {
    cfg.validate()?;
    let (train_indices, holdout_indices) = split_seen(ds, cfg)?;
    let attrs = ds.seen_attrs(cfg.attr_normalization)?;
    let models = init_models(&ds.scales, &attrs, &cfg.train);
    let combiner =
        (models.len() > 1).then(|| MultiScaleCombiner::averaging(models.len(), attrs.dim()));
    Ok(TrainedModels {
        models,
        combiner,
        report: TrainReport::default(),
        combiner_history: Vec::new(),
        train_indices,
        holdout_indices,
    })
}

/// UA and LA embeddings of the samples at `indices`. With several scales,
/// UA goes through the combiner and LA through [`combine_la`].
pub fn embed<T: Scalar>(
    models: &[EmbeddingModel<T>],
    combiner: Option<&MultiScaleCombiner<T>>,
    scales: &[FeatureSet<T>],
    indices: &[usize],
) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    if models.len() != scales.len() || models.is_empty() {
        return Err(ZslError::invalid(format!(
            "{} models for {} feature scales",
            models.len(),
            scales.len()
        )));
    }
    let per_scale = models
        .iter()
        .zip(scales)
        .map(|(m, s)| m.project_all(&s.features.select_rows(indices)))
        .collect::<Result<Vec<_>>>()?;
    if per_scale.len() == 1 {
        return Ok(per_scale.into_iter().next().expect("one scale"));
    }
    let combiner = combiner.ok_or_else(|| ZslError::invalid("several scales need a combiner"))?;
    let n = indices.len();
    let mut att = DenseMatrix::zeros(n, combiner.att_dim());
    let lat_dim: usize = per_scale.iter().map(|(_, l)| l.cols()).sum();
    let mut lat = DenseMatrix::zeros(n, lat_dim);
    for i in 0..n {
        let a: Vec<&[T]> = per_scale.iter().map(|(a, _)| a.row(i)).collect();
        let l: Vec<&[T]> = per_scale.iter().map(|(_, l)| l.row(i)).collect();
        att.row_mut(i).copy_from_slice(&combiner.combine(&a)?);
        lat.row_mut(i).copy_from_slice(&combine_la(&l));
    }
    Ok((att, lat))
}

/// Ridge weights and the seen and unseen LA prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult<T> {
    pub weights: TransferWeights<T>,
    pub seen: PrototypeSet<T>,
    pub unseen: PrototypeSet<T>,
}

pub fn fit_transfer<T: Scalar>(
    ds: &Dataset<T>,
    trained: &TrainedModels<T>,
    cfg: &PipelineConfig,
) -> Result<TransferResult<T>> {
    cfg.transfer.validate()?;
    let seen_attrs = ds.seen_attrs(cfg.attr_normalization)?;
    let unseen_attrs = ds.unseen_attrs(cfg.attr_normalization)?;
    let weights = TransferWeights::compute(&seen_attrs, &unseen_attrs, cfg.transfer.lambda)?;
    let (_, lat) = embed(
        &trained.models,
        trained.combiner.as_ref(),
        &ds.scales,
        &trained.train_indices,
    )?;
    let labels: Vec<ClassId> = trained
        .train_indices
        .iter()
        .map(|&i| ds.labels()[i])
        .collect();
    let seen = class_means(
        &lat,
        &labels,
        &ds.split.seen_classes,
        cfg.transfer.normalize_first,
    )?;
    let unseen = unseen_prototypes(&weights, &seen)?;
    Ok(TransferResult {
        weights,
        seen,
        unseen,
    })
}

/// Conventional zero-shot prediction of the unseen-class samples over the
/// unseen classes.
pub fn evaluate_zsl<T: Scalar>(
    ds: &Dataset<T>,
    trained: &TrainedModels<T>,
    transfer: &TransferResult<T>,
    space: Space,
    cfg: &PipelineConfig,
) -> Result<(Vec<usize>, BatchPrediction<T>, McaReport)> {
    let idx = ds.unseen_indices();
    if idx.is_empty() {
        return Err(ZslError::invalid("no samples of unseen classes"));
    }
    let attrs = ds.unseen_attrs(cfg.attr_normalization)?;
    let (att, lat) = embed(&trained.models, trained.combiner.as_ref(), &ds.scales, &idx)?;
    let pred = predict_batch(
        Some(&att),
        Some(&lat),
        &attrs,
        Some(&transfer.unseen),
        space,
        cfg.zscore_terms,
    )?;
    let labels: Vec<ClassId> = idx.iter().map(|&i| ds.labels()[i]).collect();
    let report = mca(&pred.predicted, &labels, attrs.class_ids())?;
    Ok((idx, pred, report))
}

/// Generalized evaluation over the joint label space: unseen-class samples
/// and the held-out seen samples, each scored by per-class MCA.
pub fn evaluate_gzsl<T: Scalar>(
    ds: &Dataset<T>,
    trained: &TrainedModels<T>,
    transfer: &TransferResult<T>,
    space: Space,
    cfg: &PipelineConfig,
) -> Result<GzslReport> {
    if trained.holdout_indices.is_empty() {
        return Err(ZslError::invalid(
            "no held-out seen samples; set holdout_frac > 0",
        ));
    }
    let joint_classes = ds.split.all_classes();
    let attrs = ds
        .attrs
        .normalized(cfg.attr_normalization)
        .subset(&joint_classes)?;
    let protos = transfer.seen.concat(&transfer.unseen)?;
    let run = |idx: &[usize]| -> Result<(Vec<ClassId>, Vec<ClassId>)> {
        let (att, lat) = embed(&trained.models, trained.combiner.as_ref(), &ds.scales, idx)?;
        let pred = predict_batch(
            Some(&att),
            Some(&lat),
            &attrs,
            Some(&protos),
            space,
            cfg.zscore_terms,
        )?;
        Ok((
            pred.predicted,
            idx.iter().map(|&i| ds.labels()[i]).collect(),
        ))
    };
    let (pu, lu) = run(&ds.unseen_indices())?;
    let (ps, ls) = run(&trained.holdout_indices)?;
    gzsl_eval(
        Partition {
            predictions: &pu,
            labels: &lu,
        },
        Partition {
            predictions: &ps,
            labels: &ls,
        },
        &joint_classes,
    )
}
