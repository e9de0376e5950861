mod common;

use std::cell::RefCell;
use std::collections::BTreeSet;

use common::*;
use ipt_core::embedset::{
    gen_synthetic, make_schedule, phase_data, ClassOrder, EmbeddingDataset, EmbeddingRecord, EmbeddingSplit,
    PhaseSchedule, Protocol, Split, SyntheticDataset, SyntheticParams,
};
use ipt_core::linalg::{normalize, sq_dist};
use ipt_core::losses::{l_as, l_cep, l_ces, l_ms, total_loss, LossTerms, SoftmaxHead};
use ipt_core::metrics::{forgetting_rate, RunReport};
use ipt_core::protobank::{init_example_prototypes, kmeans};
use ipt_core::trainer::{PhaseSource, Trainer, TrainConfig};
use proptest::prelude::*;

fn small(seed: u64) -> SyntheticDataset {
    gen_synthetic(&SyntheticParams {
        num_classes: 8,
        dim: 16,
        per_class_train: 40,
        per_class_test: 20,
        ..SyntheticParams::benchmark(seed)
    })
    .unwrap()
}

fn small_schedule(seed: u64) -> PhaseSchedule {
    make_schedule(8, Protocol::Pni, 4, &ClassOrder::Shuffled { seed }).unwrap()
}

fn quick(config: TrainConfig) -> TrainConfig {
    let mut c = config;
    c.optimizer.epochs_prototype_stage = 6;
    c
}

#[test]
fn bimodal_class_init_lands_on_both_modes() {
    let syn = small(5);
    let spread = syn.meta.params.spread;
    for class in 0..8u32 {
        let members: Vec<Vec<f64>> =
            syn.dataset.train().iter().filter(|r| r.label == class).map(EmbeddingRecord::to_f64).collect();
        let centers = init_example_prototypes(&members, 2, class as u64).unwrap();
        for mode in &syn.meta.mode_centers[class as usize] {
            let mut m = mode.clone();
            normalize(&mut m);
            let nearest = centers.iter().map(|c| sq_dist(c, &m).sqrt()).fold(f64::INFINITY, f64::min);
            assert!(nearest < spread, "class {class}: nearest center {nearest} from a true mode");
        }
    }
}

#[test]
fn two_clusters_fit_bimodal_classes_better_than_one() {
    let syn = small(6);
    for class in 0..8u32 {
        let members: Vec<Vec<f64>> =
            syn.dataset.train().iter().filter(|r| r.label == class).map(EmbeddingRecord::to_f64).collect();
        let one = kmeans(&members, 1, 0, 100).unwrap().sse;
        let two = kmeans(&members, 2, 0, 100).unwrap().sse;
        assert!(two < one, "class {class}: k=2 SSE {two} not below k=1 SSE {one}");
    }
}

#[test]
fn phase_slices_partition_the_train_split() {
    let syn = small(1);
    for schedule in [small_schedule(1), make_schedule(8, Protocol::Phi, 2, &ClassOrder::Identity).unwrap()] {
        let mut seen = 0;
        let mut classes = BTreeSet::new();
        for t in 0..schedule.num_phases() {
            let part = phase_data(&syn.dataset, &schedule, t, Split::Train).unwrap();
            let labels: BTreeSet<u32> = part.iter().map(|r| r.label).collect();
            assert!(labels.is_disjoint(&classes));
            classes.extend(labels);
            seen += part.len();
        }
        assert_eq!(seen, syn.dataset.train().len());
        assert_eq!(classes.len(), 8);
    }
}

/// Serves phase data while logging every class it hands out.
struct Recording<'a> {
    inner: &'a EmbeddingDataset,
    train_reads: RefCell<Vec<(usize, BTreeSet<u32>)>>,
}

impl PhaseSource for Recording<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn train_phase(&self, schedule: &PhaseSchedule, t: usize) -> ipt_core::Result<Vec<EmbeddingRecord>> {
        let records = self.inner.train_phase(schedule, t)?;
        self.train_reads.borrow_mut().push((t, records.iter().map(|r| r.label).collect()));
        Ok(records)
    }

    fn test_seen(&self, schedule: &PhaseSchedule, t: usize) -> ipt_core::Result<Vec<EmbeddingRecord>> {
        self.inner.test_seen(schedule, t)
    }
}

#[test]
fn training_reads_only_current_phase_classes() {
    let syn = small(2);
    let schedule = small_schedule(2);
    let source = Recording { inner: &syn.dataset, train_reads: RefCell::new(Vec::new()) };
    Trainer::new(quick(TrainConfig::default())).unwrap().run_protocol(&source, &schedule).unwrap();
    let reads = source.train_reads.into_inner();
    assert_eq!(reads.len(), schedule.num_phases());
    for (t, labels) in reads {
        let expected: BTreeSet<u32> = schedule.classes_in_phase(t).unwrap().iter().copied().collect();
        assert_eq!(labels, expected, "phase {t}");
    }
}

#[test]
fn records_from_other_phases_are_rejected() {
    let syn = small(2);
    let schedule = small_schedule(2);
    let mut trainer = Trainer::new(quick(TrainConfig::default())).unwrap();
    let mut bank = ipt_core::protobank::PrototypeBank::new(16, 10).unwrap();
    let wrong = phase_data(&syn.dataset, &schedule, 1, Split::Train).unwrap();
    assert!(matches!(trainer.run_phase(&mut bank, &wrong, &schedule, 0), Err(ipt_core::Error::Contract(_))));
}

fn category_snapshots(config: TrainConfig, seed: u64) -> (Vec<Vec<Vec<u64>>>, RunReport) {
    let syn = small(seed);
    let mut snaps = Vec::new();
    let report = Trainer::new(config)
        .unwrap()
        .run_protocol_with(&syn.dataset, &small_schedule(seed), |_, bank| {
            snaps.push(bank.classes().iter().map(|c| c.category.iter().map(|x| x.to_bits()).collect()).collect());
            Ok(())
        })
        .unwrap();
    (snaps, report)
}

#[test]
fn baseline_never_touches_old_categories() {
    let (snaps, _) = category_snapshots(quick(TrainConfig::baseline()), 3);
    for pair in snaps.windows(2) {
        let (before, after) = (&pair[0], &pair[1]);
        assert_eq!(before[..], after[..before.len()]);
    }
}

#[test]
fn old_categories_drift_with_example_prototypes() {
    let (snaps, report) = category_snapshots(quick(TrainConfig::default()), 3);
    let changed = snaps.windows(2).any(|p| p[0][..] != p[1][..p[0].len()]);
    assert!(changed, "CEP should move old category prototypes");
    assert!(forgetting_rate(&report).is_some());
}

#[test]
fn nothing_old_changes_means_no_forgetting_when_classes_are_far_apart() {
    // Widely separated classes: new prototypes cannot capture old samples.
    let syn = gen_synthetic(&SyntheticParams {
        num_classes: 4,
        dim: 16,
        per_class_train: 30,
        per_class_test: 20,
        center_scale: 10.0,
        spread: 0.1,
        ..SyntheticParams::benchmark(4)
    })
    .unwrap();
    let schedule = make_schedule(4, Protocol::Phi, 1, &ClassOrder::Identity).unwrap();
    let config = TrainConfig { enable_cep: false, freeze_old_categories: true, ..quick(TrainConfig::default()) };
    let report = Trainer::new(config).unwrap().run_protocol(&syn.dataset, &schedule).unwrap();
    assert_eq!(report.phases.len(), 2);
    assert_eq!(forgetting_rate(&report), Some(0.0));
}

#[test]
fn predictions_stay_within_seen_classes() {
    let syn = small(7);
    let schedule = small_schedule(7);
    let report = Trainer::new(quick(TrainConfig::default())).unwrap().run_protocol(&syn.dataset, &schedule).unwrap();
    for p in &report.phases {
        let seen: BTreeSet<u32> = schedule.class_order[schedule.seen_range(p.phase).unwrap()].iter().copied().collect();
        assert!(p.predictions.iter().all(|c| seen.contains(c)));
        assert_eq!(p.labels.iter().copied().collect::<BTreeSet<_>>(), seen);
    }
    report.verify().unwrap();
    let back = RunReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back.to_json().unwrap(), report.to_json().unwrap());
}

#[test]
fn provided_category_vectors_seed_the_bank() {
    let syn = small(8);
    let schedule = make_schedule(8, Protocol::Pni, 1, &ClassOrder::Identity).unwrap();
    let provided = EmbeddingSplit {
        dim: 16,
        class_names: syn.dataset.class_names().to_vec(),
        records: (0..8u32)
            .map(|c| EmbeddingRecord::new(c, (0..16).map(|i| if i == c as usize { 3.0 } else { 0.0 }).collect()))
            .collect(),
    };
    let config = TrainConfig {
        category_init: ipt_core::trainer::CategoryInit::Provided,
        ..quick(TrainConfig::default())
    };
    let mut config = config;
    config.optimizer.epochs_prototype_stage = 0;
    let mut first = None;
    Trainer::new(config)
        .unwrap()
        .with_provided_categories(&provided)
        .unwrap()
        .run_protocol_with(&syn.dataset, &schedule, |_, bank| {
            first = Some(bank.class(bank.slot_of(3).unwrap()).category.clone());
            Ok(())
        })
        .unwrap();
    let mut expected = vec![0.0; 16];
    expected[3] = 1.0;
    assert_eq!(first.unwrap(), expected);
}

#[test]
fn same_seed_same_report() {
    let syn = small(9);
    let schedule = small_schedule(9);
    let run = || {
        Trainer::new(quick(TrainConfig::default())).unwrap().run_protocol(&syn.dataset, &schedule).unwrap().to_json().unwrap()
    };
    assert_eq!(run(), run());
}

fn scaled(inst: &Instance, factor: f64) -> Instance {
    let mut bank = inst.bank.clone();
    for id in all_param_ids(&bank) {
        for x in bank.param_mut(id).unwrap() {
            *x *= factor;
        }
    }
    let batch = inst
        .batch
        .iter()
        .map(|r| EmbeddingRecord::new(r.label, r.vector.iter().map(|x| x * factor as f32).collect()))
        .collect();
    Instance { bank, batch, range: inst.range.clone() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ces_and_ms_ignore_positive_scale(seed in any::<u64>(), factor in prop::sample::select(vec![0.25, 0.5, 2.0, 8.0])) {
        let inst = random_instance(&mut rng(seed), 1);
        let big = scaled(&inst, factor);
        let head = SoftmaxHead::default();
        let a = l_ces(&inst.batch, &inst.bank, inst.range.clone(), &head).unwrap().value;
        let b = l_ces(&big.batch, &big.bank, big.range.clone(), &head).unwrap().value;
        prop_assert!((a - b).abs() < 1e-9);
        let a = l_ms(&inst.batch, &inst.bank).unwrap().value;
        let b = l_ms(&big.batch, &big.bank).unwrap().value;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn max_similarity_loss_never_exceeds_average(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 1);
        let ms = l_ms(&inst.batch, &inst.bank).unwrap().value;
        let avg = l_as(&inst.batch, &inst.bank).unwrap().value;
        prop_assert!(ms <= avg + 1e-12);
        prop_assert!((0.0..=2.0).contains(&ms) && (0.0..=2.0).contains(&avg));
        if inst.bank.n_e() == 1 {
            prop_assert!((ms - avg).abs() < 1e-12);
        }
    }

    #[test]
    fn total_loss_is_the_sum_of_its_terms(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 1);
        let head = SoftmaxHead::default();
        let total = total_loss(&inst.batch, &inst.bank, inst.range.clone(), &head, &LossTerms::default()).unwrap();
        let parts = [
            l_ces(&inst.batch, &inst.bank, inst.range.clone(), &head).unwrap(),
            l_cep(&inst.bank, inst.range.clone(), &head).unwrap(),
            l_ms(&inst.batch, &inst.bank).unwrap(),
        ];
        let sum: f64 = parts.iter().map(|p| p.value).sum();
        prop_assert!((total.value - sum).abs() < 1e-12);
        prop_assert!(parts[0].value >= 0.0 && parts[1].value >= 0.0);
        for (id, g) in &total.grads {
            for (i, gi) in g.iter().enumerate() {
                let expected: f64 = parts.iter().filter_map(|p| p.grads.get(id)).map(|pg| pg[i]).sum();
                prop_assert!((gi - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn example_loss_ignores_duplicated_samples(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 0);
        let head = SoftmaxHead::default();
        let terms = LossTerms { ces: false, cep: true, similarity: None, ..Default::default() };
        let mut doubled = inst.batch.clone();
        doubled.extend(inst.batch.iter().filter(|r| r.label == inst.batch[0].label).cloned());
        let a = total_loss(&inst.batch, &inst.bank, inst.range.clone(), &head, &terms).unwrap().value;
        let b = total_loss(&doubled, &inst.bank, inst.range.clone(), &head, &terms).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn reports_survive_a_json_round_trip_exactly() {
    for seed in 0..6 {
        let syn = small(seed);
        let schedule = make_schedule(8, Protocol::Phi, 2, &ClassOrder::Shuffled { seed }).unwrap();
        for config in [TrainConfig::baseline(), TrainConfig { n_e: 2, ..Default::default() }] {
            let report = Trainer::new(quick(TrainConfig { seed, ..config })).unwrap().run_protocol(&syn.dataset, &schedule).unwrap();
            let back = RunReport::from_json(&report.to_json().unwrap()).unwrap();
            back.verify().unwrap();
            assert_eq!(back.phases.iter().map(|p| p.phase0_accuracy.to_bits()).collect::<Vec<_>>(),
                       report.phases.iter().map(|p| p.phase0_accuracy.to_bits()).collect::<Vec<_>>());
        }
    }
}
