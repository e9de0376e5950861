//! Embedding datasets: in-memory types, the `IPTE` file format, phase
//! schedules for the PHI/PNI protocols, and a seeded synthetic generator.

mod format;
mod schedule;
mod synthetic;

pub use format::{decode_split, encode_split, load_split, save_split, HEADER_LEN, MAGIC, VERSION};
pub use schedule::{make_schedule, phase_data, seen_data, ClassOrder, PhaseSchedule, Protocol, Split};
pub use synthetic::{gen_synthetic, SyntheticDataset, SyntheticMeta, SyntheticParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labeled embedding. `label` is the dataset's original class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub label: u32,
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn new(label: u32, vector: Vec<f32>) -> Self {
        Self { label, vector }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.vector.iter().map(|&v| v as f64).collect()
    }
}

/// The contents of a single embedding file (one split).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSplit {
    pub dim: usize,
    pub class_names: Vec<String>,
    pub records: Vec<EmbeddingRecord>,
}

impl EmbeddingSplit {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Checks every record against the header: label range, length,
    /// finiteness, and non-zero norm.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("dim must be positive".into()));
        }
        for (i, r) in self.records.iter().enumerate() {
            validate_record(r, self.dim, self.class_names.len(), i)?;
        }
        Ok(())
    }
}

pub(crate) fn validate_record(r: &EmbeddingRecord, dim: usize, num_classes: usize, index: usize) -> Result<()> {
    if r.vector.len() != dim {
        return Err(Error::Validation(format!(
            "record {index}: vector length {} != dim {dim}",
            r.vector.len()
        )));
    }
    if (r.label as usize) >= num_classes {
        return Err(Error::Validation(format!(
            "record {index}: label {} >= class count {num_classes}",
            r.label
        )));
    }
    if r.vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("record {index}: non-finite entry")));
    }
    if r.vector.iter().all(|&v| v == 0.0) {
        return Err(Error::Validation(format!("record {index}: zero vector")));
    }
    Ok(())
}

/// A train/test pair sharing dimension and class names.
///
/// Immutable after construction; every class id appears in both splits.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    dim: usize,
    class_names: Vec<String>,
    train: Vec<EmbeddingRecord>,
    test: Vec<EmbeddingRecord>,
}

impl EmbeddingDataset {
    pub fn new(
        dim: usize,
        class_names: Vec<String>,
        train: Vec<EmbeddingRecord>,
        test: Vec<EmbeddingRecord>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("dim must be positive".into()));
        }
        let c = class_names.len();
        for (split, recs) in [("train", &train), ("test", &test)] {
            let mut present = vec![false; c];
            for (i, r) in recs.iter().enumerate() {
                validate_record(r, dim, c, i)?;
                present[r.label as usize] = true;
            }
            if let Some(missing) = present.iter().position(|p| !p) {
                return Err(Error::Validation(format!(
                    "class {missing} has no records in the {split} split"
                )));
            }
        }
        Ok(Self { dim, class_names, train, test })
    }

    pub fn from_splits(train: EmbeddingSplit, test: EmbeddingSplit) -> Result<Self> {
        if train.dim != test.dim {
            return Err(Error::Validation(format!(
                "train dim {} != test dim {}",
                train.dim, test.dim
            )));
        }
        if train.class_names != test.class_names {
            return Err(Error::Validation("train and test class names differ".into()));
        }
        Self::new(train.dim, train.class_names, train.records, test.records)
    }

    pub fn load(train_path: impl AsRef<std::path::Path>, test_path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_splits(load_split(train_path)?, load_split(test_path)?)
    }

    pub fn save(&self, train_path: impl AsRef<std::path::Path>, test_path: impl AsRef<std::path::Path>) -> Result<()> {
        let (train, test) = self.to_splits();
        save_split(&train, train_path)?;
        save_split(&test, test_path)
    }

    pub fn to_splits(&self) -> (EmbeddingSplit, EmbeddingSplit) {
        let mk = |records: &Vec<EmbeddingRecord>| EmbeddingSplit {
            dim: self.dim,
            class_names: self.class_names.clone(),
            records: records.clone(),
        };
        (mk(&self.train), mk(&self.test))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn train(&self) -> &[EmbeddingRecord] {
        &self.train
    }

    pub fn test(&self) -> &[EmbeddingRecord] {
        &self.test
    }

    pub fn records(&self, split: Split) -> &[EmbeddingRecord] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}
