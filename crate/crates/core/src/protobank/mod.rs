//! Category and example prototypes, cosine classification, k-means
//! initialization and the freezing schedule.

mod checkpoint;
mod kmeans;

pub use checkpoint::{decode_bank, encode_bank, load_bank, save_bank, BANK_MAGIC, BANK_VERSION};
pub use kmeans::{init_example_prototypes, kmeans, KMeansResult};

use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::params::ParamId;

/// Cosine similarity; errors on zero vectors or length mismatch.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!("length mismatch {} vs {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Math("cosine similarity of a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Prototypes of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrototypes {
    pub class_id: u32,
    pub category: Vec<f64>,
    pub examples: Vec<Vec<f64>>,
    pub birth_phase: usize,
    pub examples_frozen: bool,
    pub category_frozen: bool,
}

/// All prototypes known to the model, stored unnormalized.
///
/// Classes occupy slots in the order they were added. Under a phase
/// schedule the slot equals the class's ordered index, so phase class
/// ranges are slot ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    dim: usize,
    n_e: usize,
    classes: Vec<ClassPrototypes>,
    slot_of: HashMap<u32, usize>,
}

fn check_vector(v: &[f64], dim: usize, what: &str) -> Result<()> {
    if v.len() != dim {
        return Err(Error::Validation(format!("{what}: length {} != dim {dim}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("{what}: non-finite entry")));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::Validation(format!("{what}: zero vector")));
    }
    Ok(())
}

impl PrototypeBank {
    pub fn new(dim: usize, n_e: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("dim must be positive".into()));
        }
        Ok(Self { dim, n_e, classes: Vec::new(), slot_of: HashMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_e(&self) -> usize {
        self.n_e
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassPrototypes] {
        &self.classes
    }

    pub fn class(&self, slot: usize) -> &ClassPrototypes {
        &self.classes[slot]
    }

    pub fn slot_of(&self, class_id: u32) -> Option<usize> {
        self.slot_of.get(&class_id).copied()
    }

    /// Registers a new class, born (and trainable) at `phase`.
    pub fn add_class(
        &mut self,
        class_id: u32,
        category_init: Vec<f64>,
        example_inits: Vec<Vec<f64>>,
        phase: usize,
    ) -> Result<usize> {
        if self.slot_of.contains_key(&class_id) {
            return Err(Error::State(format!("class {class_id} already present")));
        }
        check_vector(&category_init, self.dim, "category prototype")?;
        if example_inits.len() != self.n_e {
            return Err(Error::Validation(format!(
                "expected {} example prototypes, got {}",
                self.n_e,
                example_inits.len()
            )));
        }
        for e in &example_inits {
            check_vector(e, self.dim, "example prototype")?;
        }
        let slot = self.classes.len();
        self.classes.push(ClassPrototypes {
            class_id,
            category: category_init,
            examples: example_inits,
            birth_phase: phase,
            examples_frozen: false,
            category_frozen: false,
        });
        self.slot_of.insert(class_id, slot);
        Ok(slot)
    }

    /// Freezes the example prototypes of every class born before `phase`.
    pub fn freeze_examples_before(&mut self, phase: usize) {
        for c in &mut self.classes {
            if c.birth_phase < phase {
                c.examples_frozen = true;
            }
        }
    }

    /// Freezes category prototypes born before `phase` (ablation setting).
    pub fn freeze_categories_before(&mut self, phase: usize) {
        for c in &mut self.classes {
            if c.birth_phase < phase {
                c.category_frozen = true;
            }
        }
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        match id {
            ParamId::Category(s) => self.classes.get(s).is_some_and(|c| !c.category_frozen),
            ParamId::Example(s, j) => self.classes.get(s).is_some_and(|c| !c.examples_frozen && j < self.n_e),
        }
    }

    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        match id {
            ParamId::Category(s) => self.classes.get(s).map(|c| c.category.as_slice()),
            ParamId::Example(s, j) => self.classes.get(s).and_then(|c| c.examples.get(j)).map(Vec::as_slice),
        }
    }

    pub fn param_mut(&mut self, id: ParamId) -> Option<&mut Vec<f64>> {
        match id {
            ParamId::Category(s) => self.classes.get_mut(s).map(|c| &mut c.category),
            ParamId::Example(s, j) => self.classes.get_mut(s).and_then(|c| c.examples.get_mut(j)),
        }
    }

    fn check_range(&self, range: &Range<usize>) -> Result<()> {
        if range.is_empty() {
            return Err(Error::Range("empty class range".into()));
        }
        if range.end > self.classes.len() {
            return Err(Error::Range(format!(
                "range {range:?} exceeds {} known classes",
                self.classes.len()
            )));
        }
        Ok(())
    }

    /// Cosine similarities of `embedding` to the category prototypes in
    /// slot range `range`, in slot order.
    pub fn logits(&self, embedding: &[f64], range: Range<usize>) -> Result<Vec<f64>> {
        self.check_range(&range)?;
        self.classes[range].iter().map(|c| cosine_sim(embedding, &c.category)).collect()
    }

    /// Class id of the most similar category prototype; ties go to the
    /// lowest class id.
    pub fn predict(&self, embedding: &[f64]) -> Result<u32> {
        if self.classes.is_empty() {
            return Err(Error::State("prediction with an empty bank".into()));
        }
        let ne = norm(embedding);
        if embedding.len() != self.dim {
            return Err(Error::Validation(format!("embedding length {} != dim {}", embedding.len(), self.dim)));
        }
        if ne == 0.0 {
            return Err(Error::Math("cosine similarity of a zero vector".into()));
        }
        let mut best: Option<(f64, u32)> = None;
        for c in &self.classes {
            let s = dot(embedding, &c.category) / (ne * norm(&c.category));
            best = match best {
                Some((bs, bid)) if s < bs || (s == bs && bid < c.class_id) => Some((bs, bid)),
                _ => Some((s, c.class_id)),
            };
        }
        Ok(best.unwrap().1)
    }

    pub fn predict_f32(&self, embedding: &[f32]) -> Result<u32> {
        let v: Vec<f64> = embedding.iter().map(|&x| x as f64).collect();
        self.predict(&v)
    }

    pub(crate) fn from_parts(dim: usize, n_e: usize, classes: Vec<ClassPrototypes>) -> Result<Self> {
        let mut bank = Self::new(dim, n_e)?;
        for c in classes {
            let frozen = (c.examples_frozen, c.category_frozen);
            let slot = bank.add_class(c.class_id, c.category, c.examples, c.birth_phase)?;
            bank.classes[slot].examples_frozen = frozen.0;
            bank.classes[slot].category_frozen = frozen.1;
        }
        Ok(bank)
    }
}
