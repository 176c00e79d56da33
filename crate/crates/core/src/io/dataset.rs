//! On-disk layout of datasets, run configs, models and prototypes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::matrix::{load_matrix, load_matrix_tagged, save_matrix, save_matrix_tagged, MatrixTag};
use super::synth::{SynthConfig, SynthDataset};
use crate::domain::{
    AttributeMatrix, AttributeNormalization, ClassId, EmbeddingModel, FeatureSet, Split,
};
use crate::embedding::{MultiScaleCombiner, TrainReport};
use crate::error::{Result, ZslError};
use crate::eval::Space;
use crate::linalg::DenseMatrix;
use crate::pipeline::{Dataset, PipelineConfig, TrainedModels, TransferResult};
use crate::transfer::{PrototypeSet, Provenance, TransferWeights};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| ZslError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| ZslError::io(path, e))
}

/// One non-negative integer per line; blank lines are skipped.
pub fn load_indices(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(t.parse().map_err(|_| ZslError::Format {
            path: path.to_path_buf(),
            offset: start as u64,
            message: format!("expected a non-negative integer, got {t:?}"),
        })?);
    }
    Ok(out)
}

pub fn save_indices(path: &Path, values: &[usize]) -> Result<()> {
    let mut s = String::with_capacity(values.len() * 4);
    for v in values {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    write_text(path, &s)
}

pub fn load_labels(path: &Path) -> Result<Vec<ClassId>> {
    Ok(load_indices(path)?.into_iter().map(ClassId).collect())
}

pub fn save_labels(path: &Path, labels: &[ClassId]) -> Result<()> {
    save_indices(path, &labels.iter().map(|c| c.index()).collect::<Vec<_>>())
}

/// Parses a split without checking it, so validation can report its
/// violations alongside the others.
pub fn load_split_unchecked(path: &Path) -> Result<Split> {
    serde_json::from_str(&read_text(path)?).map_err(|e| ZslError::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_split(path: &Path) -> Result<Split> {
    let raw = load_split_unchecked(path)?;
    Split::new(raw.seen_classes, raw.unseen_classes)
}

pub fn save_split(path: &Path, split: &Split) -> Result<()> {
    write_text(
        path,
        &(serde_json::to_string_pretty(split).expect("split serializes") + "\n"),
    )
}

/// Attribute matrices are stored with row `i` describing class `i`.
pub fn load_attributes(path: &Path) -> Result<AttributeMatrix<f64>> {
    AttributeMatrix::dense(load_matrix(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalePaths {
    pub features: PathBuf,
    pub labels: PathBuf,
}

fn default_space() -> Space {
    Space::UaLa
}

/// Everything a CLI command needs. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scales: Vec<ScalePaths>,
    pub attributes: PathBuf,
    pub split: PathBuf,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    #[serde(default = "default_space")]
    pub space: Space,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Parses and validates a config without touching the referenced files.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| ZslError::Config(format!("run config: {e}")))?;
        if cfg.scales.is_empty() {
            return Err(ZslError::Config("run config lists no scales".into()));
        }
        cfg.pipeline.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, resolves relative paths and checks that every input
    /// file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| ZslError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.check_inputs()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut self.scales {
            fix(&mut s.features);
            fix(&mut s.labels);
        }
        fix(&mut self.attributes);
        fix(&mut self.split);
        fix(&mut self.output_dir);
    }

    pub fn check_inputs(&self) -> Result<()> {
        let inputs = self
            .scales
            .iter()
            .flat_map(|s| [&s.features, &s.labels])
            .chain([&self.attributes, &self.split]);
        for p in inputs {
            if !p.is_file() {
                return Err(ZslError::Config(format!(
                    "input file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

pub fn load_scales(cfg: &RunConfig) -> Result<Vec<FeatureSet<f64>>> {
    cfg.scales
        .iter()
        .enumerate()
        .map(|(i, s)| FeatureSet::new(i as u32, load_matrix(&s.features)?, load_labels(&s.labels)?))
        .collect()
}

/// Loads and validates every input named by `cfg`.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset<f64>> {
    Dataset::new(
        load_scales(cfg)?,
        load_attributes(&cfg.attributes)?,
        load_split(&cfg.split)?,
    )
}

/// Writes a generated dataset and a `run.json` that trains on it, plus
/// `synth.json` recording the generator settings.
pub fn write_synthetic(ds: &SynthDataset, synth: &SynthConfig, dir: &Path) -> Result<RunConfig> {
    fs::create_dir_all(dir).map_err(|e| ZslError::io(dir, e))?;
    let rel = |name: String| PathBuf::from(name);
    let mut scales = Vec::new();
    for (i, fs) in ds.scales.iter().enumerate() {
        let paths = ScalePaths {
            features: rel(format!("features_s{i}.zslm")),
            labels: rel(format!("labels_s{i}.csv")),
        };
        save_matrix(&fs.features, &dir.join(&paths.features))?;
        save_labels(&dir.join(&paths.labels), &fs.labels)?;
        scales.push(paths);
    }
    save_matrix(ds.attrs.values(), &dir.join("attributes.zslm"))?;
    save_split(&dir.join("split.json"), &ds.split)?;
    write_text(
        &dir.join("synth.json"),
        &(serde_json::to_string_pretty(synth).expect("synth config serializes") + "\n"),
    )?;

    let mut pipeline = PipelineConfig::with_seed(synth.seed);
    pipeline.attr_normalization = AttributeNormalization::L2;
    pipeline.transfer.normalize_first = true;
    let run = RunConfig {
        scales,
        attributes: rel("attributes.zslm".into()),
        split: rel("split.json".into()),
        pipeline,
        space: Space::UaLa,
        output_dir: rel("out".into()),
    };
    write_text(&dir.join("run.json"), &run.to_json())?;
    Ok(run)
}

fn weight_paths(dir: &Path, scale: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("w_att_s{scale}.zslm")),
        dir.join(format!("w_lat_s{scale}.zslm")),
    )
}

pub const TRAIN_REPORT: &str = "train_report.csv";
const TRAIN_INDICES: &str = "train_indices.csv";
const HOLDOUT_INDICES: &str = "holdout_indices.csv";
const COMBINER: &str = "w_com.zslm";

/// Writes model weights, the combiner, the training report and the
/// train/holdout sample indices under `dir`.
pub fn save_trained(dir: &Path, t: &TrainedModels<f64>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| ZslError::io(dir, e))?;
    for (i, m) in t.models.iter().enumerate() {
        let (a, l) = weight_paths(dir, i);
        save_matrix(&m.w_att, &a)?;
        save_matrix(&m.w_lat, &l)?;
    }
    match &t.combiner {
        Some(c) => save_matrix(&c.w_com, &dir.join(COMBINER))?,
        None => {
            let stale = dir.join(COMBINER);
            if stale.exists() {
                fs::remove_file(&stale).map_err(|e| ZslError::io(&stale, e))?;
            }
        }
    }
    write_text(&dir.join(TRAIN_REPORT), &t.report.to_csv())?;
    if !t.combiner_history.is_empty() {
        let mut s = String::from("epoch,loss\n");
        for (e, l) in t.combiner_history.iter().enumerate() {
            s.push_str(&format!("{},{l:e}\n", e + 1));
        }
        write_text(&dir.join("combiner_report.csv"), &s)?;
    }
    save_indices(&dir.join(TRAIN_INDICES), &t.train_indices)?;
    save_indices(&dir.join(HOLDOUT_INDICES), &t.holdout_indices)
}

pub fn load_trained(dir: &Path, scales: usize) -> Result<TrainedModels<f64>> {
    let mut models = Vec::with_capacity(scales);
    for i in 0..scales {
        let (a, l) = weight_paths(dir, i);
        if !a.is_file() {
            return Err(ZslError::invalid(format!(
                "no model for scale {i} in {}; run train first",
                dir.display()
            )));
        }
        models.push(EmbeddingModel::new(
            i as u32,
            load_matrix(&a)?,
            load_matrix(&l)?,
        )?);
    }
    let combiner = if scales > 1 {
        Some(MultiScaleCombiner {
            w_com: load_matrix(&dir.join(COMBINER))?,
        })
    } else {
        None
    };
    Ok(TrainedModels {
        models,
        combiner,
        report: TrainReport::default(),
        combiner_history: Vec::new(),
        train_indices: load_indices(&dir.join(TRAIN_INDICES))?,
        holdout_indices: load_indices(&dir.join(HOLDOUT_INDICES))?,
    })
}

fn tag_of(p: &PrototypeSet<f64>) -> MatrixTag {
    match p.uniform_provenance() {
        Some(Provenance::EmpiricalMean) => MatrixTag::EmpiricalMean,
        Some(Provenance::Transferred) => MatrixTag::Transferred,
        None if p.is_empty() => MatrixTag::Plain,
        None => MatrixTag::Mixed,
    }
}

fn ids_path(path: &Path) -> PathBuf {
    path.with_extension("ids.csv")
}

/// Prototype matrix with its provenance tag, and the class ids in a
/// `.ids.csv` sidecar.
pub fn save_prototypes(path: &Path, p: &PrototypeSet<f64>) -> Result<()> {
    save_matrix_tagged(&p.prototypes, tag_of(p), path)?;
    save_labels(&ids_path(path), &p.class_ids)
}

pub fn load_prototypes(path: &Path) -> Result<PrototypeSet<f64>> {
    let (m, tag) = load_matrix_tagged::<f64>(path)?;
    let ids = load_labels(&ids_path(path))?;
    let provenance = match tag {
        MatrixTag::EmpiricalMean => Provenance::EmpiricalMean,
        MatrixTag::Transferred => Provenance::Transferred,
        other => {
            return Err(ZslError::Data {
                path: path.to_path_buf(),
                message: format!("prototype file has tag {other:?}; expected a single provenance"),
            })
        }
    };
    let n = ids.len();
    PrototypeSet::new(ids, m, vec![provenance; n])
}

const BETAS: &str = "betas.zslm";
const SEEN_PROTOTYPES: &str = "prototypes_seen.zslm";
const UNSEEN_PROTOTYPES: &str = "prototypes_unseen.zslm";

/// β rows follow `split.unseen_classes`, columns `split.seen_classes`.
pub fn save_transfer(dir: &Path, t: &TransferResult<f64>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| ZslError::io(dir, e))?;
    save_matrix(&t.weights.betas, &dir.join(BETAS))?;
    save_prototypes(&dir.join(SEEN_PROTOTYPES), &t.seen)?;
    save_prototypes(&dir.join(UNSEEN_PROTOTYPES), &t.unseen)
}

pub fn load_transfer(dir: &Path, split: &Split) -> Result<TransferResult<f64>> {
    let path = dir.join(BETAS);
    if !path.is_file() {
        return Err(ZslError::invalid(format!(
            "no transfer weights in {}; run transfer first",
            dir.display()
        )));
    }
    let betas: DenseMatrix<f64> = load_matrix(&path)?;
    if betas.shape() != (split.unseen_classes.len(), split.seen_classes.len()) {
        return Err(ZslError::Data {
            path,
            message: format!("β matrix is {:?}, split needs unseen × seen", betas.shape()),
        });
    }
    Ok(TransferResult {
        weights: TransferWeights {
            seen: split.seen_classes.clone(),
            unseen: split.unseen_classes.clone(),
            betas,
        },
        seen: load_prototypes(&dir.join(SEEN_PROTOTYPES))?,
        unseen: load_prototypes(&dir.join(UNSEEN_PROTOTYPES))?,
    })
}
