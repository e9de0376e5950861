//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes and returns JSON strings. The plain-Rust functions
//! behind them are public so they can be tested natively.

use ipt_core::embedset::{gen_synthetic, make_schedule, ClassOrder, Protocol, SyntheticParams};
use ipt_core::linalg::normalize;
use ipt_core::losses::SimilarityLoss;
use ipt_core::metrics::{drifted_classes, extra_memory_proportion, Pca, RunReport};
use ipt_core::protobank::{kmeans, PrototypeBank};
use ipt_core::trainer::{TrainConfig, Trainer};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftRequest {
    pub seed: u64,
    pub num_classes: usize,
    pub phases: usize,
    pub n_e: usize,
    pub epochs: usize,
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub similarity_loss: SimilarityLoss,
}

impl Default for DriftRequest {
    fn default() -> Self {
        Self {
            seed: 0,
            num_classes: 20,
            phases: 10,
            n_e: 5,
            epochs: 10,
            per_class_train: 100,
            per_class_test: 50,
            similarity_loss: SimilarityLoss::Msl,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Point {
    pub class: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodResult {
    pub method: String,
    pub phase_accuracies: Vec<f64>,
    pub aia: f64,
    pub final_accuracy: f64,
    pub fr: Option<f64>,
    pub cdr: f64,
    /// Classes that more than half of their predictions got wrong (or none at all).
    pub drifted_classes: Vec<u32>,
    pub categories: Vec<Point>,
    pub examples: Vec<Point>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftResponse {
    /// Test samples, all classes.
    pub samples: Vec<Point>,
    pub class_order: Vec<u32>,
    pub baseline: MethodResult,
    pub ipt: MethodResult,
}

fn unit(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    normalize(&mut u);
    u
}

fn drifted(report: &RunReport) -> Vec<u32> {
    let last = report.phases.last().expect("reports have phases");
    drifted_classes(&last.predictions, &last.labels, report.num_classes).expect("ids in range")
}

fn method_result(method: &str, report: &RunReport, bank: &PrototypeBank, pca: &Pca) -> MethodResult {
    let point = |class: u32, v: &[f64]| {
        let xy = pca.project(&unit(v));
        Point { class, x: xy[0], y: xy[1] }
    };
    MethodResult {
        method: method.into(),
        phase_accuracies: report.phases.iter().map(|p| p.accuracy).collect(),
        aia: report.aia,
        final_accuracy: report.final_accuracy,
        fr: report.fr,
        cdr: report.cdr,
        drifted_classes: drifted(report),
        categories: bank.classes().iter().map(|c| point(c.class_id, &c.category)).collect(),
        examples: bank.classes().iter().flat_map(|c| c.examples.iter().map(|e| point(c.class_id, e))).collect(),
    }
}

/// Trains the baseline and the example-prototype model on the same
/// synthetic stream and projects both final banks onto the test samples'
/// principal plane.
pub fn drift_demo(req: &DriftRequest) -> ipt_core::Result<DriftResponse> {
    let params = SyntheticParams {
        num_classes: req.num_classes,
        per_class_train: req.per_class_train,
        per_class_test: req.per_class_test,
        ..SyntheticParams::benchmark(req.seed)
    };
    let syn = gen_synthetic(&params)?;
    let schedule = make_schedule(req.num_classes, Protocol::Pni, req.phases, &ClassOrder::Shuffled { seed: req.seed })?;

    let run = |n_e: usize| -> ipt_core::Result<(RunReport, PrototypeBank)> {
        let mut config = if n_e == 0 { TrainConfig::baseline() } else { TrainConfig { n_e, ..Default::default() } };
        config.seed = req.seed;
        config.similarity_loss = req.similarity_loss;
        config.optimizer.epochs_prototype_stage = req.epochs;
        let mut bank = None;
        let last = schedule.num_phases() - 1;
        let report = Trainer::new(config)?.run_protocol_with(&syn.dataset, &schedule, |t, b| {
            if t == last {
                bank = Some(b.clone());
            }
            Ok(())
        })?;
        Ok((report, bank.expect("last phase reached")))
    };
    let (base_report, base_bank) = run(0)?;
    let (ipt_report, ipt_bank) = run(req.n_e.max(1))?;

    let samples: Vec<Vec<f64>> = syn.dataset.test().iter().map(|r| r.to_f64()).collect();
    let pca = Pca::fit(&samples, 2)?;
    let sample_points = syn
        .dataset
        .test()
        .iter()
        .zip(&samples)
        .map(|(r, v)| {
            let xy = pca.project(v);
            Point { class: r.label, x: xy[0], y: xy[1] }
        })
        .collect();
    Ok(DriftResponse {
        samples: sample_points,
        class_order: schedule.class_order.clone(),
        baseline: method_result("baseline (n_e=0)", &base_report, &base_bank, &pca),
        ipt: method_result(&format!("ipt (n_e={})", req.n_e.max(1)), &ipt_report, &ipt_bank, &pca),
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterRequest {
    pub points: Vec<[f64; 2]>,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterResponse {
    pub centers: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub sse_history: Vec<f64>,
}

/// k-means on clicked 2-D points, as used to seed example prototypes.
pub fn cluster(req: &ClusterRequest) -> ipt_core::Result<ClusterResponse> {
    let points: Vec<Vec<f64>> = req.points.iter().map(|p| p.to_vec()).collect();
    let r = kmeans(&points, req.k, req.seed, 100)?;
    Ok(ClusterResponse { centers: r.centers, assignment: r.assignment, sse_history: r.sse_history })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryRequest {
    pub num_classes: usize,
    pub n_e: usize,
    pub dim: usize,
    pub bytes_per_scalar: usize,
    pub backbone_bytes: u64,
}

/// Share of model memory spent on prototypes.
pub fn memory(req: &MemoryRequest) -> ipt_core::Result<f64> {
    extra_memory_proportion(req.num_classes, req.n_e, req.dim, req.bytes_per_scalar, req.backbone_bytes)
}

fn call<Req, Resp>(json: &str, f: impl FnOnce(&Req) -> ipt_core::Result<Resp>) -> Result<String, String>
where
    Req: for<'de> Deserialize<'de>,
    Resp: Serialize,
{
    let req: Req = serde_json::from_str(json).map_err(|e| format!("bad request: {e}"))?;
    let resp = f(&req).map_err(|e| e.to_string())?;
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

pub fn drift_demo_json(request: &str) -> Result<String, String> {
    call(request, drift_demo)
}

pub fn cluster_json(request: &str) -> Result<String, String> {
    call(request, cluster)
}

pub fn memory_json(request: &str) -> Result<String, String> {
    call(request, memory)
}

#[wasm_bindgen(js_name = driftDemo)]
pub fn drift_demo_js(request: &str) -> Result<String, JsError> {
    drift_demo_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = cluster)]
pub fn cluster_js(request: &str) -> Result<String, JsError> {
    cluster_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = memoryProportion)]
pub fn memory_js(request: &str) -> Result<String, JsError> {
    memory_json(request).map_err(|e| JsError::new(&e))
}
