//! Seeded Gaussian-mixture embeddings standing in for backbone features.
//!
//! Backbone embeddings occupy a narrow cone, so every mode center shares
//! one unit axis `g`:
//!
//! ```text
//! mode(c, m) = g + center_scale · (a_c + mode_separation · u_cm)
//! sample     = normalize(mode + spread · z / sqrt(dim)),   z ~ N(0, I)
//! ```
//!
//! with random unit vectors `a_c` (class direction) and `u_cm` (mode
//! offset). Small `center_scale` makes classes nearly parallel. Samples
//! cycle through the modes so every mode is equally populated.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EmbeddingDataset, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::linalg::{cosine, normalize};
use crate::rng::{rng_for, tag, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticParams {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub modes_per_class: usize,
    pub center_scale: f64,
    #[serde(default = "default_mode_separation")]
    pub mode_separation: f64,
    pub spread: f64,
    pub seed: u64,
}

fn default_mode_separation() -> f64 {
    2.0
}

impl SyntheticParams {
    /// The desk-scale drift benchmark: 20 classes, dim 32, 200/100 samples
    /// per class, two modes per class.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            num_classes: 20,
            dim: 32,
            per_class_train: 200,
            per_class_test: 100,
            modes_per_class: 2,
            center_scale: 0.15,
            mode_separation: 2.0,
            spread: 0.2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self;
        if p.num_classes == 0
            || p.dim == 0
            || p.per_class_train == 0
            || p.per_class_test == 0
            || p.modes_per_class == 0
        {
            return Err(Error::Parameter("all counts must be positive".into()));
        }
        if !(p.spread > 0.0 && p.spread.is_finite()) {
            return Err(Error::Parameter(format!("spread must be positive, got {}", p.spread)));
        }
        for (name, v) in [("center_scale", p.center_scale), ("mode_separation", p.mode_separation)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMeta {
    pub params: SyntheticParams,
    /// `mode_centers[class][mode]`, before normalization.
    pub mode_centers: Vec<Vec<Vec<f64>>>,
    /// Per class, the largest cosine between one of its mode centers and
    /// any mode center of another class.
    pub nearest_other_class_cosine: Vec<f64>,
    pub min_inter_class_cosine: f64,
    pub max_inter_class_cosine: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: EmbeddingDataset,
    pub meta: SyntheticMeta,
}

fn gaussian(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(rng: &mut Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian(rng, dim);
        if normalize(&mut v) {
            return v;
        }
    }
}

pub fn gen_synthetic(params: &SyntheticParams) -> Result<SyntheticDataset> {
    params.validate()?;
    let p = params;

    let mut geo = rng_for(p.seed, tag::SYNTHETIC, 0);
    let axis = unit(&mut geo, p.dim);
    let mode_centers: Vec<Vec<Vec<f64>>> = (0..p.num_classes)
        .map(|_| {
            let class_dir = unit(&mut geo, p.dim);
            (0..p.modes_per_class)
                .map(|_| {
                    let u = unit(&mut geo, p.dim);
                    axis.iter()
                        .zip(&class_dir)
                        .zip(&u)
                        .map(|((g, a), b)| g + p.center_scale * (a + p.mode_separation * b))
                        .collect()
                })
                .collect()
        })
        .collect();

    let noise = p.spread / (p.dim as f64).sqrt();
    let sample = |rng: &mut Rng, class: usize, i: usize| -> EmbeddingRecord {
        let center = &mode_centers[class][i % p.modes_per_class];
        loop {
            let z = gaussian(rng, p.dim);
            let mut v: Vec<f64> = center.iter().zip(&z).map(|(c, e)| c + noise * e).collect();
            if normalize(&mut v) {
                return EmbeddingRecord::new(class as u32, v.iter().map(|&x| x as f32).collect());
            }
        }
    };

    let mut train_rng = rng_for(p.seed, tag::SYNTHETIC, 1);
    let mut test_rng = rng_for(p.seed, tag::SYNTHETIC, 2);
    let mut train = Vec::with_capacity(p.num_classes * p.per_class_train);
    let mut test = Vec::with_capacity(p.num_classes * p.per_class_test);
    for c in 0..p.num_classes {
        train.extend((0..p.per_class_train).map(|i| sample(&mut train_rng, c, i)));
        test.extend((0..p.per_class_test).map(|i| sample(&mut test_rng, c, i)));
    }

    let nearest: Vec<f64> = (0..p.num_classes)
        .map(|c| {
            let mut best = f64::NEG_INFINITY;
            for (o, others) in mode_centers.iter().enumerate() {
                if o == c {
                    continue;
                }
                for m in &mode_centers[c] {
                    for n in others {
                        best = best.max(cosine(m, n));
                    }
                }
            }
            best
        })
        .collect();
    let (min_c, max_c) = nearest
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));

    let class_names = (0..p.num_classes).map(|c| format!("class_{c:03}")).collect();
    let dataset = EmbeddingDataset::new(p.dim, class_names, train, test)?;
    Ok(SyntheticDataset {
        dataset,
        meta: SyntheticMeta {
            params: p.clone(),
            mode_centers,
            nearest_other_class_cosine: nearest,
            min_inter_class_cosine: if p.num_classes > 1 { min_c } else { f64::NAN },
            max_inter_class_cosine: if p.num_classes > 1 { max_c } else { f64::NAN },
        },
    })
}
