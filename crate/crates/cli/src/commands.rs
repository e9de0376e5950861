use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use ipt_core::embedset::{self, load_split, save_split, EmbeddingRecord, EmbeddingSplit, SyntheticParams};
use ipt_core::linalg::normalize;
use ipt_core::metrics::{accuracy, cdr, confusion_matrix, pca_project, RunReport};
use ipt_core::protobank::{encode_bank, load_bank, PrototypeBank};
use ipt_core::trainer::Trainer;
use serde::Serialize;

use crate::config::{DataSource, ReportFormat, ResolvedRun, RunConfigFile, SyntheticBlock};
use crate::summary::{render, summarize, RunRow};
use crate::{Common, EvalArgs, GenSyntheticArgs, ProjectArgs, ReportMergeArgs, RunArgs};

/// Writes through a sibling temp file and renames, so a file either
/// appears complete or not at all.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn output_dir(common: &Common, config: Option<&RunConfigFile>) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| config.and_then(|c| c.output.dir.clone()))
        .ok_or_else(|| anyhow!("no output directory: pass --out or set output.dir"))?;
    fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn load_config(common: &Common) -> Result<Option<RunConfigFile>> {
    common.config.as_deref().map(RunConfigFile::from_path).transpose().map(|c| c.map(|c| c.with_seed(common.seed)))
}

pub fn gen_synthetic(common: &Common, args: &GenSyntheticArgs) -> Result<()> {
    let config = load_config(common)?;
    let (block, base_seed) = match &config {
        Some(c) => (
            c.synthetic.clone().ok_or_else(|| anyhow!("config has no \"synthetic\" block"))?,
            c.seed,
        ),
        None => (SyntheticBlock::default(), 0),
    };
    let mut block = block;
    if common.seed.is_some() {
        block.seed = common.seed;
    }
    let base: SyntheticParams = block.resolve(base_seed);
    let params = SyntheticParams {
        num_classes: args.classes.unwrap_or(base.num_classes),
        dim: args.dim.unwrap_or(base.dim),
        per_class_train: args.per_class_train.unwrap_or(base.per_class_train),
        per_class_test: args.per_class_test.unwrap_or(base.per_class_test),
        modes_per_class: args.modes.unwrap_or(base.modes_per_class),
        center_scale: args.center_scale.unwrap_or(base.center_scale),
        mode_separation: args.mode_separation.unwrap_or(base.mode_separation),
        spread: args.spread.unwrap_or(base.spread),
        seed: base.seed,
    };
    params.validate()?;
    let out = output_dir(common, config.as_ref())?;
    let syn = embedset::gen_synthetic(&params)?;
    let (train, test) = syn.dataset.to_splits();
    write_split(&out.join("train.ipte"), &train)?;
    write_split(&out.join("test.ipte"), &test)?;
    write_json(&out.join("synthetic_meta.json"), &syn.meta)?;
    println!(
        "wrote {} train / {} test records ({} classes, dim {}) to {}; min inter-class cosine {:.4}",
        train.records.len(),
        test.records.len(),
        params.num_classes,
        params.dim,
        out.display(),
        syn.meta.min_inter_class_cosine
    );
    Ok(())
}

fn write_split(path: &Path, split: &EmbeddingSplit) -> Result<()> {
    let tmp = path.with_extension("partial");
    save_split(split, &tmp)?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))
}

#[derive(Serialize)]
struct Timing {
    phases_ms: Vec<f64>,
    total_ms: f64,
}

/// Trains one resolved config and writes its artifacts into `out`.
fn run_one(run: &ResolvedRun, out: &Path, checkpoints: bool) -> Result<RunReport> {
    fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    let mut trainer = Trainer::new(run.config.train.clone())?;
    if let Some(v) = &run.category_vectors {
        trainer = trainer.with_provided_categories(v)?;
    }
    let mut final_bank: Option<PrototypeBank> = None;
    let last = run.schedule.num_phases() - 1;
    let mut report = trainer.run_protocol_with(&run.dataset, &run.schedule, |t, bank| {
        if checkpoints {
            write_atomic(&out.join(format!("bank_phase_{t}.iptb")), &encode_bank(bank))
                .map_err(|e| ipt_core::Error::Io(std::io::Error::other(e.to_string())))?;
        }
        if t == last {
            final_bank = Some(bank.clone());
        }
        Ok(())
    })?;
    report.run_config = Some(run.echo());
    report.verify()?;

    let formats = &run.config.output.formats;
    if formats.contains(&ReportFormat::Json) {
        write_atomic(&out.join("report.json"), report.to_json()?.as_bytes())?;
    }
    if formats.contains(&ReportFormat::Csv) {
        write_atomic(&out.join("accuracies.csv"), report.accuracies_csv().as_bytes())?;
    }
    let bank = final_bank.ok_or_else(|| anyhow!("protocol produced no phases"))?;
    write_atomic(&out.join("bank.iptb"), &encode_bank(&bank))?;
    let phases_ms: Vec<f64> = report.phases.iter().map(|p| p.wall_time_ms).collect();
    write_json(&out.join("timing.json"), &Timing { total_ms: phases_ms.iter().sum(), phases_ms })?;
    Ok(report)
}

pub fn run(common: &Common, args: &RunArgs) -> Result<()> {
    let path = common.config.as_deref().ok_or_else(|| anyhow!("run needs --config"))?;
    let config = RunConfigFile::from_path(path)?.with_seed(common.seed);
    let out = output_dir(common, Some(&config))?;
    let checkpoints = args.checkpoints || config.output.checkpoints;

    if args.seeds.is_empty() {
        let resolved = config.resolve()?;
        let report = run_one(&resolved, &out, checkpoints)?;
        print!("{}", render(&summarize(&[RunRow::new(out.display().to_string(), &report)])));
        println!("artifacts written to {}", out.display());
        return Ok(());
    }

    // Resolve every seed up front so configuration errors surface before any training.
    let runs: Vec<(u64, ResolvedRun)> = args
        .seeds
        .iter()
        .map(|&s| Ok((s, config.clone().with_seed(Some(s)).resolve()?)))
        .collect::<Result<_>>()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunReport>>>> = Mutex::new((0..runs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..args.jobs.clamp(1, runs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((seed, run)) = runs.get(i) else { break };
                let r = run_one(run, &out.join(format!("seed_{seed}")), checkpoints);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    let mut rows = Vec::new();
    for ((seed, _), r) in runs.iter().zip(results.into_inner().expect("no worker panicked")) {
        let report = r.expect("every run finished").with_context(|| format!("seed {seed}"))?;
        rows.push(RunRow::new(format!("seed_{seed}"), &report));
    }
    write_merged(&out, &rows)?;
    print!("{}", render(&summarize(&rows)));
    println!("{} runs written to {}", rows.len(), out.display());
    Ok(())
}

/// Test records from `--<flag>` or, failing that, the config's test data.
fn split_from(common: &Common, explicit: Option<&Path>, flag: &str) -> Result<(EmbeddingSplit, Option<RunConfigFile>)> {
    let config = load_config(common)?;
    if let Some(p) = explicit {
        return Ok((load_split(p).with_context(|| format!("loading {}", p.display()))?, config));
    }
    let c = config.ok_or_else(|| anyhow!("pass --{flag} or --config"))?;
    let split = match c.data_source()? {
        DataSource::Files { test, .. } => load_split(&test).with_context(|| format!("loading {}", test.display()))?,
        DataSource::Synthetic(p) => embedset::gen_synthetic(&p)?.dataset.to_splits().1,
    };
    Ok((split, Some(c)))
}

#[derive(Serialize)]
struct EvalReport {
    bank_classes: usize,
    evaluated_records: usize,
    accuracy: f64,
    cdr: f64,
    /// Class ids in bank slot order; indexes the confusion matrix.
    class_ids: Vec<u32>,
    /// `confusion[predicted][true]` over `class_ids`.
    confusion: Vec<Vec<u64>>,
}

pub fn eval(common: &Common, args: &EvalArgs) -> Result<()> {
    let bank = load_bank(&args.bank).with_context(|| format!("loading {}", args.bank.display()))?;
    let (split, config) = split_from(common, args.test.as_deref(), "test")?;
    if split.dim != bank.dim() {
        bail!("dimension mismatch: bank has {}, embeddings have {}", bank.dim(), split.dim);
    }
    // Only classes the bank knows are scored, with ids mapped to slots.
    let records: Vec<&EmbeddingRecord> = split.records.iter().filter(|r| bank.slot_of(r.label).is_some()).collect();
    if records.is_empty() {
        bail!("no test records belong to the bank's classes");
    }
    let mut preds = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for r in &records {
        let p = bank.predict_f32(&r.vector)?;
        preds.push(bank.slot_of(p).expect("predicted class is in the bank") as u32);
        labels.push(bank.slot_of(r.label).expect("filtered above") as u32);
    }
    let report = EvalReport {
        bank_classes: bank.len(),
        evaluated_records: records.len(),
        accuracy: accuracy(&preds, &labels)?,
        cdr: cdr(&preds, &labels, bank.len())?,
        class_ids: bank.classes().iter().map(|c| c.class_id).collect(),
        confusion: confusion_matrix(&preds, &labels, bank.len())?,
    };
    println!(
        "{} classes, {} records: accuracy {:.2}%, CDR {:.2}%",
        report.bank_classes,
        report.evaluated_records,
        report.accuracy * 100.0,
        report.cdr * 100.0
    );
    if common.out.is_some() || config.as_ref().is_some_and(|c| c.output.dir.is_some()) {
        let out = output_dir(common, config.as_ref())?;
        write_json(&out.join("eval.json"), &report)?;
    }
    Ok(())
}

/// Rows of `projection.csv`.
#[derive(Debug, Serialize)]
pub struct ProjectionRow {
    pub id: usize,
    pub class: u32,
    pub x: f64,
    pub y: f64,
    pub kind: &'static str,
}

/// Unit-normalized samples, then category prototypes, then example
/// prototypes, projected together onto two principal components.
pub fn projection_rows(bank: &PrototypeBank, split: &EmbeddingSplit) -> Result<Vec<ProjectionRow>> {
    if split.dim != bank.dim() {
        return Err(ipt_core::Error::Validation(format!(
            "dimension mismatch: bank has {}, embeddings have {}",
            bank.dim(),
            split.dim
        ))
        .into());
    }
    let mut tagged: Vec<(u32, &'static str, Vec<f64>)> =
        split.records.iter().map(|r| (r.label, "sample", r.to_f64())).collect();
    for c in bank.classes() {
        tagged.push((c.class_id, "category_proto", c.category.clone()));
    }
    for c in bank.classes() {
        for e in &c.examples {
            tagged.push((c.class_id, "example_proto", e.clone()));
        }
    }
    for (_, _, v) in &mut tagged {
        normalize(v);
    }
    let vectors: Vec<Vec<f64>> = tagged.iter().map(|t| t.2.clone()).collect();
    let coords = pca_project(&vectors, 2)?;
    Ok(tagged
        .into_iter()
        .zip(coords)
        .enumerate()
        .map(|(id, ((class, kind, _), xy))| ProjectionRow { id, class, x: xy[0], y: xy[1], kind })
        .collect())
}

pub fn project(common: &Common, args: &ProjectArgs) -> Result<()> {
    let bank = load_bank(&args.bank).with_context(|| format!("loading {}", args.bank.display()))?;
    let (split, config) = split_from(common, args.data.as_deref(), "data")?;
    let rows = projection_rows(&bank, &split)?;
    let out = output_dir(common, config.as_ref())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let path = out.join("projection.csv");
    write_atomic(&path, &w.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct Merged<'a> {
    runs: &'a [RunRow],
    methods: Vec<crate::summary::MethodSummary>,
}

fn write_merged(out: &Path, rows: &[RunRow]) -> Result<()> {
    write_json(&out.join("merged.json"), &Merged { runs: rows, methods: summarize(rows) })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    write_atomic(&out.join("merged.csv"), &w.into_inner().map_err(|e| anyhow!("{e}"))?)
}

pub fn report_merge(common: &Common, args: &ReportMergeArgs) -> Result<()> {
    if common.config.is_some() || common.seed.is_some() {
        bail!("report-merge reads finished reports; --config and --seed do not apply");
    }
    let mut rows = Vec::new();
    for p in &args.reports {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let report = RunReport::from_json(&text).with_context(|| format!("parsing {}", p.display()))?;
        report.verify().with_context(|| format!("verifying {}", p.display()))?;
        rows.push(RunRow::new(p.display().to_string(), &report));
    }
    print!("{}", render(&summarize(&rows)));
    if common.out.is_some() {
        write_merged(&output_dir(common, None)?, &rows)?;
    }
    Ok(())
}
