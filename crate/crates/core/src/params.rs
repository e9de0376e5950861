use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Identifies one trainable vector in a [`PrototypeBank`](crate::protobank::PrototypeBank).
///
/// Indices are bank slots (the order classes were added), not class labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamId {
    Category(usize),
    Example(usize, usize),
}

/// Gradients keyed by parameter; ordered so reductions are deterministic.
pub type GradMap = BTreeMap<ParamId, Vec<f64>>;

/// Adds `scale * src` into `dst`, creating zero entries as needed.
pub fn accumulate(dst: &mut GradMap, src: &GradMap, scale: f64) {
    for (id, g) in src {
        let e = dst.entry(*id).or_insert_with(|| vec![0.0; g.len()]);
        crate::linalg::axpy(scale, g, e);
    }
}

pub fn global_norm(grads: &GradMap) -> f64 {
    grads.values().flatten().map(|x| x * x).sum::<f64>().sqrt()
}
