use ipt_wasm::{cluster_json, drift_demo, drift_demo_json, memory_json, DriftRequest};

fn small() -> DriftRequest {
    DriftRequest { num_classes: 6, phases: 3, n_e: 2, epochs: 3, per_class_train: 20, per_class_test: 10, ..Default::default() }
}

#[test]
fn drift_demo_returns_both_models() {
    let r = drift_demo(&small()).unwrap();
    assert_eq!(r.samples.len(), 60);
    assert_eq!(r.class_order.len(), 6);
    for m in [&r.baseline, &r.ipt] {
        assert_eq!(m.phase_accuracies.len(), 3);
        assert_eq!(m.categories.len(), 6);
        assert!((0.0..=1.0).contains(&m.cdr));
        assert_eq!(m.drifted_classes.len() as f64 / 6.0, m.cdr);
    }
    assert!(r.baseline.examples.is_empty());
    assert_eq!(r.ipt.examples.len(), 12);
    assert_eq!(r.ipt.method, "ipt (n_e=2)");
}

#[test]
fn drift_demo_json_round_trip_and_errors() {
    let out = drift_demo_json(r#"{"num_classes": 4, "phases": 2, "epochs": 2, "per_class_train": 10, "per_class_test": 5}"#).unwrap();
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["ipt"]["categories"].as_array().unwrap().len(), 4);
    assert!(drift_demo_json(r#"{"num_classes": 5, "phases": 2}"#).unwrap_err().contains("divisible"));
    assert!(drift_demo_json(r#"{"classes": 5}"#).unwrap_err().starts_with("bad request"));
}

#[test]
fn cluster_finds_separated_pairs() {
    let out = cluster_json(r#"{"points": [[0,0],[0,1],[10,0],[10,1]], "k": 2}"#).unwrap();
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let mut centers: Vec<(f64, f64)> =
        v["centers"].as_array().unwrap().iter().map(|c| (c[0].as_f64().unwrap(), c[1].as_f64().unwrap())).collect();
    centers.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(centers, [(0.0, 0.5), (10.0, 0.5)]);
    assert!(cluster_json(r#"{"points": [[1,1]], "k": 2}"#).is_err());
}

#[test]
fn memory_share_matches_direct_arithmetic() {
    let out = memory_json(r#"{"num_classes": 100, "n_e": 10, "dim": 512, "bytes_per_scalar": 4, "backbone_bytes": 614200000}"#)
        .unwrap();
    let share: f64 = out.parse().unwrap();
    let extra = 100.0 * 11.0 * 512.0 * 4.0;
    assert_eq!(share, extra / (extra + 614_200_000.0));
}
