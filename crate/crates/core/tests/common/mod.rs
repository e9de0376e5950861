#![allow(dead_code)]

use std::ops::Range;

use ipt_core::embedset::{gen_synthetic, make_schedule, ClassOrder, EmbeddingRecord, Protocol, SyntheticParams};
use ipt_core::losses::LossOutput;
use ipt_core::metrics::RunReport;
use ipt_core::params::ParamId;
use ipt_core::protobank::PrototypeBank;
use ipt_core::trainer::{run_protocol, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// A small random instance: bank, a batch labeled with current-phase
/// classes, and the current phase's slot range.
pub struct Instance {
    pub bank: PrototypeBank,
    pub batch: Vec<EmbeddingRecord>,
    pub range: Range<usize>,
}

/// Random bank with `dim` 8, up to 6 classes and up to 3 example
/// prototypes. Classes before the current range are born in phase 0 and
/// frozen the way the trainer freezes them.
pub fn random_instance(rng: &mut ChaCha8Rng, min_examples: usize) -> Instance {
    let dim = 8;
    let classes = rng.random_range(1..=6usize);
    let n_e = rng.random_range(min_examples..=3usize);
    let start = rng.random_range(0..classes);
    let mut bank = PrototypeBank::new(dim, n_e).unwrap();
    for slot in 0..classes {
        let phase = usize::from(slot >= start);
        let scale = rng.random_range(0.5..2.0);
        let cat: Vec<f64> = gaussian_vec(rng, dim).iter().map(|x| x * scale).collect();
        let ex = (0..n_e).map(|_| gaussian_vec(rng, dim)).collect();
        // class ids deliberately differ from slots
        bank.add_class(100 + 7 * slot as u32, cat, ex, phase).unwrap();
    }
    bank.freeze_examples_before(1);
    if rng.random_bool(0.3) {
        bank.freeze_categories_before(1);
    }
    let range = start..classes;
    let batch = (0..rng.random_range(1..=5usize))
        .map(|_| {
            let slot = rng.random_range(range.clone());
            let v = gaussian_vec(rng, dim).iter().map(|&x| x as f32).collect();
            EmbeddingRecord::new(bank.class(slot).class_id, v)
        })
        .collect();
    Instance { bank, batch, range }
}

pub fn all_param_ids(bank: &PrototypeBank) -> Vec<ParamId> {
    let mut ids = Vec::new();
    for s in 0..bank.len() {
        ids.push(ParamId::Category(s));
        for j in 0..bank.n_e() {
            ids.push(ParamId::Example(s, j));
        }
    }
    ids
}

/// Compares the analytic gradient of `f` against central differences for
/// every trainable coordinate, returning the worst relative error. Frozen
/// parameters must be absent from the analytic gradient.
pub fn max_gradient_error<F>(bank: &PrototypeBank, step: f64, f: F) -> f64
where
    F: Fn(&PrototypeBank) -> LossOutput,
{
    let analytic = f(bank);
    let mut worst: f64 = 0.0;
    for id in all_param_ids(bank) {
        if !bank.is_trainable(id) {
            assert!(!analytic.grads.contains_key(&id), "frozen {id:?} received a gradient");
            continue;
        }
        let dim = bank.param(id).unwrap().len();
        for i in 0..dim {
            let mut plus = bank.clone();
            plus.param_mut(id).unwrap()[i] += step;
            let mut minus = bank.clone();
            minus.param_mut(id).unwrap()[i] -= step;
            let numeric = (f(&plus).value - f(&minus).value) / (2.0 * step);
            let a = analytic.grads.get(&id).map_or(0.0, |g| g[i]);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

/// Per-class precision scan straight from the definition.
pub fn cdr_bruteforce(predictions: &[u32], labels: &[u32], num_classes: usize) -> f64 {
    let mut drifted = 0;
    for c in 0..num_classes as u32 {
        let predicted: Vec<usize> = (0..predictions.len()).filter(|&i| predictions[i] == c).collect();
        let correct = predicted.iter().filter(|&&i| labels[i] == c).count();
        let precision = if predicted.is_empty() { 0.0 } else { correct as f64 / predicted.len() as f64 };
        if predicted.is_empty() || precision < 0.5 {
            drifted += 1;
        }
    }
    drifted as f64 / num_classes as f64
}

pub const BENCHMARK_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// One PNI-10 run on the 20-class synthetic benchmark for `seed`.
pub fn benchmark_run(seed: u64, config: TrainConfig) -> RunReport {
    let syn = gen_synthetic(&SyntheticParams::benchmark(seed)).unwrap();
    let schedule = make_schedule(20, Protocol::Pni, 10, &ClassOrder::Shuffled { seed }).unwrap();
    run_protocol(&syn.dataset, &schedule, &TrainConfig { seed, ..config }).unwrap()
}
