//! Runs the synthetic drift benchmark (PNI, 10 phases) for five seeds and
//! prints final accuracy / CDR per variant.
//!
//! cargo run --release -p ipt-core --example drift_benchmark

use ipt_core::embedset::{gen_synthetic, make_schedule, ClassOrder, Protocol, SyntheticParams};
use ipt_core::losses::SimilarityLoss;
use ipt_core::trainer::{run_protocol, TrainConfig};

type Variant = (&'static str, fn(u64) -> TrainConfig);

fn main() -> ipt_core::Result<()> {
    let variants: [Variant; 5] = [
        ("n_e=0", |seed| TrainConfig { seed, ..TrainConfig::baseline() }),
        ("n_e=1", |seed| TrainConfig { seed, n_e: 1, ..Default::default() }),
        ("n_e=5", |seed| TrainConfig { seed, n_e: 5, ..Default::default() }),
        ("n_e=10", |seed| TrainConfig { seed, ..Default::default() }),
        ("n_e=10 asl", |seed| TrainConfig { seed, similarity_loss: SimilarityLoss::Asl, ..Default::default() }),
    ];
    let seeds = 0..5u64;
    let mut mean = [(0.0, 0.0); 5];
    for seed in seeds.clone() {
        let syn = gen_synthetic(&SyntheticParams::benchmark(seed))?;
        let schedule = make_schedule(20, Protocol::Pni, 10, &ClassOrder::Shuffled { seed })?;
        print!("seed {seed}:");
        for (i, (name, make)) in variants.iter().enumerate() {
            let report = run_protocol(&syn.dataset, &schedule, &make(seed))?;
            mean[i].0 += report.final_accuracy / seeds.end as f64;
            mean[i].1 += report.cdr / seeds.end as f64;
            print!("  {name} {:.3}/{:.2}", report.final_accuracy, report.cdr);
        }
        println!();
    }
    print!("mean:  ");
    for ((name, _), (acc, cdr)) in variants.iter().zip(mean) {
        print!("  {name} {acc:.4}/{cdr:.3}");
    }
    println!();
    Ok(())
}
