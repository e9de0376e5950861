//! Per-phase training (initialize, tune prototypes, optional extra stage)
//! and the full incremental protocol loop.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedset::{phase_data, seen_data, EmbeddingDataset, EmbeddingRecord, EmbeddingSplit, PhaseSchedule, Split};
use crate::error::{Error, Result};
use crate::linalg::{mean, normalize};
use crate::losses::{total_loss, LossTerms, LossWeights, SimilarityLoss, SoftmaxHead};
use crate::metrics::{accuracy, PhaseResult, RunReport};
use crate::optim::{clip_gradients, lr_at_epoch, sgd_step, OptimizerConfig, SgdState};
use crate::protobank::{init_example_prototypes, PrototypeBank};
use crate::rng::{derive_seed, rng_for, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryInit {
    /// Normalized mean of the class's training embeddings.
    ClassMean,
    /// Externally computed vectors (e.g. class-name text embeddings).
    Provided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleInit {
    Kmeans,
    /// Seeded uniform draws from the unit sphere (ablation).
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Example prototypes per class; 0 is the plain category-prototype baseline.
    pub n_e: usize,
    pub optimizer: OptimizerConfig,
    pub head: SoftmaxHead,
    pub similarity_loss: SimilarityLoss,
    pub enable_cep: bool,
    pub freeze_old_categories: bool,
    pub category_init: CategoryInit,
    pub example_init: ExampleInit,
    pub loss_weights: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_e: 10,
            optimizer: OptimizerConfig::default(),
            head: SoftmaxHead::default(),
            similarity_loss: SimilarityLoss::Msl,
            enable_cep: true,
            freeze_old_categories: false,
            category_init: CategoryInit::ClassMean,
            example_init: ExampleInit::Kmeans,
            loss_weights: LossWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn baseline() -> Self {
        Self { n_e: 0, enable_cep: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        SoftmaxHead::new(self.head.temperature)?;
        Ok(())
    }

    /// Enabled loss terms. Without example prototypes only the sample
    /// classification loss remains.
    pub fn loss_terms(&self) -> LossTerms {
        if self.n_e == 0 {
            return LossTerms { weights: self.loss_weights, ..LossTerms::baseline() };
        }
        LossTerms {
            ces: true,
            cep: self.enable_cep,
            similarity: Some(self.similarity_loss),
            weights: self.loss_weights,
        }
    }
}

/// Extension point for parameter-additional tuning (prompts, adapters).
/// The default implementation does nothing.
pub trait PatHook {
    /// Called for every prototype-stage batch; may report an extra loss
    /// value to fold into the logged loss.
    fn prototype_stage_loss(&mut self, _phase: usize, _batch: &[EmbeddingRecord]) -> Option<f64> {
        None
    }

    /// The additional-parameter tuning stage that closes each phase.
    fn tuning_stage(&mut self, _phase: usize, _records: &[EmbeddingRecord], _bank: &PrototypeBank) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NoPat;

impl PatHook for NoPat {}

/// Supplies phase-sliced data to the protocol loop.
pub trait PhaseSource {
    fn dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    /// Training records of the classes introduced at phase `t`.
    fn train_phase(&self, schedule: &PhaseSchedule, t: usize) -> Result<Vec<EmbeddingRecord>>;
    /// Test records of every class seen through phase `t`.
    fn test_seen(&self, schedule: &PhaseSchedule, t: usize) -> Result<Vec<EmbeddingRecord>>;
}

impl PhaseSource for EmbeddingDataset {
    fn dim(&self) -> usize {
        EmbeddingDataset::dim(self)
    }

    fn num_classes(&self) -> usize {
        EmbeddingDataset::num_classes(self)
    }

    fn train_phase(&self, schedule: &PhaseSchedule, t: usize) -> Result<Vec<EmbeddingRecord>> {
        phase_data(self, schedule, t, Split::Train)
    }

    fn test_seen(&self, schedule: &PhaseSchedule, t: usize) -> Result<Vec<EmbeddingRecord>> {
        seen_data(self, schedule, t, Split::Test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseStats {
    pub steps: usize,
    pub final_epoch_loss: f64,
}

#[cfg(not(target_arch = "wasm32"))]
fn elapsed_ms<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

#[cfg(target_arch = "wasm32")]
fn elapsed_ms<T>(f: impl FnOnce() -> T) -> (T, f64) {
    (f(), 0.0)
}

fn random_unit(rng: &mut crate::rng::Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if normalize(&mut v) {
            return v;
        }
    }
}

pub struct Trainer {
    config: TrainConfig,
    provided_categories: Option<Vec<Vec<f64>>>,
    hook: Box<dyn PatHook>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, provided_categories: None, hook: Box::new(NoPat) })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Category initializations indexed by original class id; one record per class.
    pub fn with_provided_categories(mut self, vectors: &EmbeddingSplit) -> Result<Self> {
        vectors.validate()?;
        let mut out: Vec<Option<Vec<f64>>> = vec![None; vectors.num_classes()];
        for r in &vectors.records {
            out[r.label as usize] = Some(r.to_f64());
        }
        let out = out
            .into_iter()
            .enumerate()
            .map(|(c, v)| v.ok_or_else(|| Error::Validation(format!("no provided vector for class {c}"))))
            .collect::<Result<_>>()?;
        self.provided_categories = Some(out);
        Ok(self)
    }

    pub fn with_hook(mut self, hook: Box<dyn PatHook>) -> Self {
        self.hook = hook;
        self
    }

    fn category_init(&self, class: u32, members: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut v = match self.config.category_init {
            CategoryInit::ClassMean => mean(members),
            CategoryInit::Provided => self
                .provided_categories
                .as_ref()
                .and_then(|p| p.get(class as usize))
                .cloned()
                .ok_or_else(|| Error::State(format!("no provided category vector for class {class}")))?,
        };
        if !normalize(&mut v) {
            return Err(Error::Math(format!("class {class}: category initialization has zero norm")));
        }
        Ok(v)
    }

    fn example_init(&self, class: u32, members: &[Vec<f64>], dim: usize) -> Result<Vec<Vec<f64>>> {
        let n_e = self.config.n_e;
        match self.config.example_init {
            ExampleInit::Kmeans => {
                init_example_prototypes(members, n_e, derive_seed(self.config.seed, tag::KMEANS, class as u64))
            }
            ExampleInit::Random => {
                let mut rng = rng_for(self.config.seed, tag::RANDOM_EXAMPLES, class as u64);
                Ok((0..n_e).map(|_| random_unit(&mut rng, dim)).collect())
            }
        }
    }

    /// Trains phase `t`: adds and initializes its classes, freezes older
    /// example prototypes, optimizes the summed loss, then runs the hook's
    /// tuning stage.
    pub fn run_phase(
        &mut self,
        bank: &mut PrototypeBank,
        train_records: &[EmbeddingRecord],
        schedule: &PhaseSchedule,
        t: usize,
    ) -> Result<PhaseStats> {
        let range = schedule.phase_range(t)?;
        let new_classes = schedule.classes_in_phase(t)?;
        if bank.len() != range.start
            || bank.classes().iter().zip(&schedule.class_order).any(|(c, &id)| c.class_id != id)
        {
            return Err(Error::Contract(format!(
                "bank must hold exactly the {} classes of phases before {t}",
                range.start
            )));
        }
        if bank.n_e() != self.config.n_e {
            return Err(Error::Contract(format!("bank n_e {} != config n_e {}", bank.n_e(), self.config.n_e)));
        }
        let mut members: Vec<Vec<Vec<f64>>> = vec![Vec::new(); new_classes.len()];
        for r in train_records {
            let offset = new_classes
                .iter()
                .position(|&c| c == r.label)
                .ok_or_else(|| Error::Contract(format!("record of class {} is not part of phase {t}", r.label)))?;
            members[offset].push(r.to_f64());
        }

        // stage 1: initialization
        for (&class, m) in new_classes.iter().zip(&members) {
            if m.is_empty() {
                return Err(Error::Contract(format!("no training records for class {class} in phase {t}")));
            }
            let cat = self.category_init(class, m)?;
            let examples = self.example_init(class, m, bank.dim())?;
            bank.add_class(class, cat, examples, t)?;
        }
        bank.freeze_examples_before(t);
        if self.config.freeze_old_categories {
            bank.freeze_categories_before(t);
        }

        // stage 2: prototype training
        let opt = &self.config.optimizer;
        let terms = self.config.loss_terms();
        let mut rng = rng_for(self.config.seed, tag::EPOCH_SHUFFLE, t as u64);
        let mut state = SgdState::default();
        let mut order: Vec<usize> = (0..train_records.len()).collect();
        let mut stats = PhaseStats { steps: 0, final_epoch_loss: 0.0 };
        for epoch in 0..opt.epochs_prototype_stage {
            let lr = lr_at_epoch(opt, epoch);
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(opt.batch_size) {
                let batch: Vec<EmbeddingRecord> = chunk.iter().map(|&i| train_records[i].clone()).collect();
                let out = total_loss(&batch, bank, range.clone(), &self.config.head, &terms)?;
                let extra = self.hook.prototype_stage_loss(t, &batch).unwrap_or(0.0);
                let grads = clip_gradients(out.grads, opt.clip_max_norm);
                sgd_step(bank, &grads, &mut state, lr, opt)?;
                epoch_loss += out.value + extra;
                batches += 1;
                stats.steps += 1;
            }
            stats.final_epoch_loss = epoch_loss / batches.max(1) as f64;
        }

        // stage 3: additional parameters
        self.hook.tuning_stage(t, train_records, bank)?;
        Ok(stats)
    }

    /// Evaluates `bank` on `records`, returning predictions and labels.
    pub fn evaluate(bank: &PrototypeBank, records: &[EmbeddingRecord]) -> Result<(Vec<u32>, Vec<u32>)> {
        let preds = records.iter().map(|r| bank.predict_f32(&r.vector)).collect::<Result<Vec<_>>>()?;
        Ok((preds, records.iter().map(|r| r.label).collect()))
    }

    pub fn run_protocol<S: PhaseSource + ?Sized>(&mut self, source: &S, schedule: &PhaseSchedule) -> Result<RunReport> {
        self.run_protocol_with(source, schedule, |_, _| Ok(()))
    }

    /// Runs every phase in order; `on_phase_end` sees the bank after each
    /// phase (used for checkpointing).
    pub fn run_protocol_with<S, F>(
        &mut self,
        source: &S,
        schedule: &PhaseSchedule,
        mut on_phase_end: F,
    ) -> Result<RunReport>
    where
        S: PhaseSource + ?Sized,
        F: FnMut(usize, &PrototypeBank) -> Result<()>,
    {
        if schedule.num_classes() != source.num_classes() {
            return Err(Error::Schedule(format!(
                "schedule covers {} classes, data has {}",
                schedule.num_classes(),
                source.num_classes()
            )));
        }
        let mut bank = PrototypeBank::new(source.dim(), self.config.n_e)?;
        let initial = &schedule.class_order[schedule.phase_range(0)?];
        let mut phases = Vec::with_capacity(schedule.num_phases());
        for t in 0..schedule.num_phases() {
            let (result, ms) = elapsed_ms(|| -> Result<PhaseResult> {
                let records = source.train_phase(schedule, t)?;
                self.run_phase(&mut bank, &records, schedule, t)?;
                let test = source.test_seen(schedule, t)?;
                let (predictions, labels) = Self::evaluate(&bank, &test)?;
                let (p0, l0): (Vec<u32>, Vec<u32>) =
                    predictions.iter().zip(&labels).filter(|(_, l)| initial.contains(l)).unzip();
                Ok(PhaseResult {
                    phase: t,
                    seen_classes: bank.len(),
                    accuracy: accuracy(&predictions, &labels)?,
                    phase0_accuracy: accuracy(&p0, &l0)?,
                    predictions,
                    labels,
                    wall_time_ms: 0.0,
                })
            });
            let mut result = result?;
            result.wall_time_ms = ms;
            on_phase_end(t, &bank)?;
            phases.push(result);
        }
        RunReport::assemble(self.config.clone(), schedule.clone(), source.num_classes(), phases)
    }
}

pub fn run_phase(
    bank: &mut PrototypeBank,
    train_records: &[EmbeddingRecord],
    schedule: &PhaseSchedule,
    t: usize,
    config: &TrainConfig,
) -> Result<PhaseStats> {
    Trainer::new(config.clone())?.run_phase(bank, train_records, schedule, t)
}

pub fn run_protocol(dataset: &EmbeddingDataset, schedule: &PhaseSchedule, config: &TrainConfig) -> Result<RunReport> {
    Trainer::new(config.clone())?.run_protocol(dataset, schedule)
}

/// Joint-training reference: every class initialized and trained in a
/// single pass over the full training split (in `class_order`), then
/// evaluated on the full test split. Built directly from the bank, loss
/// and optimizer primitives rather than the protocol loop.
pub fn train_joint(
    dataset: &EmbeddingDataset,
    class_order: &[u32],
    config: &TrainConfig,
) -> Result<(PrototypeBank, f64)> {
    let trainer = Trainer::new(config.clone())?;
    let mut bank = PrototypeBank::new(dataset.dim(), config.n_e)?;
    let records: Vec<EmbeddingRecord> = dataset
        .train()
        .iter()
        .filter(|r| class_order.contains(&r.label))
        .cloned()
        .collect();
    for &class in class_order {
        let m: Vec<Vec<f64>> = records.iter().filter(|r| r.label == class).map(EmbeddingRecord::to_f64).collect();
        if m.is_empty() {
            return Err(Error::Contract(format!("no training records for class {class}")));
        }
        let cat = trainer.category_init(class, &m)?;
        let ex = trainer.example_init(class, &m, dataset.dim())?;
        bank.add_class(class, cat, ex, 0)?;
    }
    let opt = &config.optimizer;
    let terms = config.loss_terms();
    let all = 0..bank.len();
    let mut rng = rng_for(config.seed, tag::EPOCH_SHUFFLE, 0);
    let mut state = SgdState::default();
    let mut order: Vec<usize> = (0..records.len()).collect();
    for epoch in 0..opt.epochs_prototype_stage {
        let lr = lr_at_epoch(opt, epoch);
        order.shuffle(&mut rng);
        for chunk in order.chunks(opt.batch_size) {
            let batch: Vec<EmbeddingRecord> = chunk.iter().map(|&i| records[i].clone()).collect();
            let out = total_loss(&batch, &bank, all.clone(), &config.head, &terms)?;
            sgd_step(&mut bank, &clip_gradients(out.grads, opt.clip_max_norm), &mut state, lr, opt)?;
        }
    }
    let test: Vec<EmbeddingRecord> =
        dataset.test().iter().filter(|r| class_order.contains(&r.label)).cloned().collect();
    let (p, l) = Trainer::evaluate(&bank, &test)?;
    let acc = accuracy(&p, &l)?;
    Ok((bank, acc))
}
