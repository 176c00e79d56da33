//! Seeded synthetic datasets with an attribute signal and a latent trait the
//! attributes do not describe.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{AttributeMatrix, ClassId, FeatureSet, Split};
use crate::error::{Result, ZslError};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub c_s: usize,
    pub c_u: usize,
    pub k: usize,
    pub k_lat_signal: usize,
    pub d: usize,
    pub n_per_class: usize,
    pub noise_sigma: f64,
    pub latent_amplitude: f64,
    pub seed: u64,
    /// Number of feature scales; each scale has its own random maps.
    pub scales: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            c_s: 20,
            c_u: 5,
            k: 20,
            k_lat_signal: 25,
            d: 64,
            n_per_class: 30,
            noise_sigma: 0.1,
            latent_amplitude: 1.0,
            seed: 42,
            scales: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ZslError::Config(m));
        if self.c_s < 2 || self.c_u < 1 {
            return bad(format!(
                "need c_s >= 2 and c_u >= 1, got {} and {}",
                self.c_s, self.c_u
            ));
        }
        for (name, v) in [
            ("k", self.k),
            ("k_lat_signal", self.k_lat_signal),
            ("d", self.d),
            ("n_per_class", self.n_per_class),
            ("scales", self.scales),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("latent_amplitude", self.latent_amplitude),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub scales: Vec<FeatureSet<f64>>,
    pub attrs: AttributeMatrix<f64>,
    pub split: Split,
    /// Latent trait index of each class.
    pub traits: Vec<usize>,
}

fn gaussian_matrix(rows: usize, cols: usize, sd: f64, rng: &mut ChaCha8Rng) -> DenseMatrix<f64> {
    let normal = Normal::new(0.0, sd).expect("finite sd");
    DenseMatrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

/// `x = G a^c + amplitude · H e_c + ε` per sample, with `G` (`d × k`) and `H`
/// (`d × k_lat_signal`) drawn once per scale. Entries of `G` have variance
/// `1/k` and those of `H` variance `1/d`, so each latent offset has norm
/// close to `amplitude`. Classes `0..c_s` are seen, the next `c_u` unseen;
/// samples are grouped by class.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let c = cfg.c_s + cfg.c_u;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let attr_values = DenseMatrix::from_fn(c, cfg.k, |_, _| rng.random_range(0.0..1.0));
    // distinct traits while they last, then reuse
    let mut order: Vec<usize> = (0..c).collect();
    order.shuffle(&mut rng);
    let traits: Vec<usize> = order.iter().map(|&o| o % cfg.k_lat_signal).collect();

    let ids: Vec<ClassId> = (0..c).map(ClassId).collect();
    let labels: Vec<ClassId> = ids
        .iter()
        .flat_map(|&id| std::iter::repeat_n(id, cfg.n_per_class))
        .collect();
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");

    let mut scales = Vec::with_capacity(cfg.scales);
    for s in 0..cfg.scales {
        let g = gaussian_matrix(cfg.d, cfg.k, 1.0 / (cfg.k as f64).sqrt(), &mut rng);
        let h = gaussian_matrix(
            cfg.d,
            cfg.k_lat_signal,
            1.0 / (cfg.d as f64).sqrt(),
            &mut rng,
        );
        let mut x = DenseMatrix::zeros(labels.len(), cfg.d);
        for (i, label) in labels.iter().enumerate() {
            let cls = label.index();
            let mean = g.matvec(attr_values.row(cls))?;
            let row = x.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                let eps = if cfg.noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                *v = mean[j] + cfg.latent_amplitude * h[(j, traits[cls])] + eps;
            }
        }
        scales.push(FeatureSet::new(s as u32, x, labels.clone())?);
    }

    Ok(SynthDataset {
        scales,
        attrs: AttributeMatrix::new(ids.clone(), attr_values)?,
        split: Split::new(ids[..cfg.c_s].to_vec(), ids[cfg.c_s..].to_vec())?,
        traits,
    })
}
