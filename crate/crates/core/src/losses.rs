//! Loss terms over the prototype bank with analytic gradients.
//!
//! Embeddings are constants (the backbone is frozen), so every gradient is
//! with respect to category or example prototypes. Each term averages over
//! its batch (or over its example-prototype pairs for the example
//! classification loss). Gradients are reported only for trainable
//! parameters.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::embedset::EmbeddingRecord;
use crate::error::{Error, Result};
use crate::linalg::{axpy, cosine_grad};
use crate::params::{accumulate, GradMap, ParamId};
use crate::protobank::PrototypeBank;

/// Scales cosine similarities before the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxHead {
    pub temperature: f64,
}

impl SoftmaxHead {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Parameter(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self { temperature })
    }
}

impl Default for SoftmaxHead {
    fn default() -> Self {
        Self { temperature: 16.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grads: GradMap,
}

impl LossOutput {
    fn add_grad(&mut self, id: ParamId, scale: f64, g: &[f64]) {
        let e = self.grads.entry(id).or_insert_with(|| vec![0.0; g.len()]);
        axpy(scale, g, e);
    }

    fn touch(&mut self, id: ParamId, dim: usize) {
        self.grads.entry(id).or_insert_with(|| vec![0.0; dim]);
    }
}

/// Cross-entropy of `softmax(z)` against a one-hot target; returns the
/// loss and `∂loss/∂z = p − onehot`.
fn softmax_xent(z: &[f64], target: usize) -> (f64, Vec<f64>) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + m - z[target];
    let mut dz: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    dz[target] -= 1.0;
    (loss.max(0.0), dz)
}

fn batch_vectors(batch: &[EmbeddingRecord]) -> Result<Vec<Vec<f64>>> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    Ok(batch.iter().map(EmbeddingRecord::to_f64).collect())
}

/// Sample classification loss: softmax over the current phase's category
/// prototypes only.
pub fn l_ces(
    batch: &[EmbeddingRecord],
    bank: &PrototypeBank,
    phase_range: Range<usize>,
    head: &SoftmaxHead,
) -> Result<LossOutput> {
    let xs = batch_vectors(batch)?;
    if phase_range.is_empty() || phase_range.end > bank.len() {
        return Err(Error::Range(format!("phase range {phase_range:?} invalid for {} classes", bank.len())));
    }
    let tau = head.temperature;
    let inv_b = 1.0 / batch.len() as f64;
    let mut out = LossOutput::default();
    for k in phase_range.clone() {
        if bank.is_trainable(ParamId::Category(k)) {
            out.touch(ParamId::Category(k), bank.dim());
        }
    }
    for (rec, x) in batch.iter().zip(&xs) {
        let slot = bank
            .slot_of(rec.label)
            .filter(|s| phase_range.contains(s))
            .ok_or_else(|| Error::Contract(format!("label {} outside the current phase", rec.label)))?;
        let grads: Vec<(f64, Vec<f64>)> =
            phase_range.clone().map(|k| cosine_grad(&bank.class(k).category, x)).collect();
        let z: Vec<f64> = grads.iter().map(|(c, _)| tau * c).collect();
        let (loss, dz) = softmax_xent(&z, slot - phase_range.start);
        out.value += loss * inv_b;
        for (i, k) in phase_range.clone().enumerate() {
            let id = ParamId::Category(k);
            if bank.is_trainable(id) {
                out.add_grad(id, tau * dz[i] * inv_b, &grads[i].1);
            }
        }
    }
    Ok(out)
}

/// Example classification loss: every example prototype of every seen
/// class is classified against all seen category prototypes. It reads no
/// samples, so it weighs each class equally.
pub fn l_cep(bank: &PrototypeBank, current_phase_range: Range<usize>, head: &SoftmaxHead) -> Result<LossOutput> {
    let n = bank.len();
    let n_e = bank.n_e();
    let mut out = LossOutput::default();
    if n == 0 || n_e == 0 {
        return Ok(out);
    }
    let tau = head.temperature;
    let inv_pairs = 1.0 / (n * n_e) as f64;
    let example_trainable =
        |i: usize, j: usize| current_phase_range.contains(&i) && bank.is_trainable(ParamId::Example(i, j));

    for k in 0..n {
        if bank.is_trainable(ParamId::Category(k)) {
            out.touch(ParamId::Category(k), bank.dim());
        }
    }
    for i in 0..n {
        for j in 0..n_e {
            let e = &bank.class(i).examples[j];
            let mut z = Vec::with_capacity(n);
            let mut dc = Vec::with_capacity(n);
            let mut de = Vec::with_capacity(n);
            for k in 0..n {
                let c = &bank.class(k).category;
                let (cos, g_c) = cosine_grad(c, e);
                z.push(tau * cos);
                dc.push(g_c);
                if example_trainable(i, j) {
                    de.push(cosine_grad(e, c).1);
                }
            }
            let (loss, dz) = softmax_xent(&z, i);
            out.value += loss * inv_pairs;
            for k in 0..n {
                let scale = tau * dz[k] * inv_pairs;
                if bank.is_trainable(ParamId::Category(k)) {
                    out.add_grad(ParamId::Category(k), scale, &dc[k]);
                }
                if example_trainable(i, j) {
                    out.add_grad(ParamId::Example(i, j), scale, &de[k]);
                }
            }
        }
    }
    Ok(out)
}

fn example_slot(bank: &PrototypeBank, rec: &EmbeddingRecord) -> Result<usize> {
    if bank.n_e() == 0 {
        return Err(Error::State("bank has no example prototypes".into()));
    }
    bank.slot_of(rec.label)
        .ok_or_else(|| Error::State(format!("class {} has no example prototypes", rec.label)))
}

/// Maximum similarity loss: `1 − max_j cos(x, e_j)` over the sample's own
/// class. Only the best-matching example prototype (lowest index on ties)
/// receives gradient.
pub fn l_ms(batch: &[EmbeddingRecord], bank: &PrototypeBank) -> Result<LossOutput> {
    let xs = batch_vectors(batch)?;
    let inv_b = 1.0 / batch.len() as f64;
    let mut out = LossOutput::default();
    for (rec, x) in batch.iter().zip(&xs) {
        let slot = example_slot(bank, rec)?;
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for (j, e) in bank.class(slot).examples.iter().enumerate() {
            let (cos, g) = cosine_grad(e, x);
            if best.as_ref().is_none_or(|(_, b, _)| cos > *b) {
                best = Some((j, cos, g));
            }
        }
        let (j, cos, g) = best.expect("n_e > 0");
        out.value += (1.0 - cos) * inv_b;
        let id = ParamId::Example(slot, j);
        if bank.is_trainable(id) {
            out.add_grad(id, -inv_b, &g);
        }
    }
    Ok(out)
}

/// Average similarity loss: `1 − mean_j cos(x, e_j)`; every example
/// prototype of the sample's class receives gradient.
pub fn l_as(batch: &[EmbeddingRecord], bank: &PrototypeBank) -> Result<LossOutput> {
    let xs = batch_vectors(batch)?;
    let inv_b = 1.0 / batch.len() as f64;
    let inv_ne = 1.0 / bank.n_e().max(1) as f64;
    let mut out = LossOutput::default();
    for (rec, x) in batch.iter().zip(&xs) {
        let slot = example_slot(bank, rec)?;
        let mut sum = 0.0;
        for (j, e) in bank.class(slot).examples.iter().enumerate() {
            let (cos, g) = cosine_grad(e, x);
            sum += cos;
            let id = ParamId::Example(slot, j);
            if bank.is_trainable(id) {
                out.add_grad(id, -inv_b * inv_ne, &g);
            }
        }
        out.value += (1.0 - sum * inv_ne) * inv_b;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityLoss {
    /// Maximum similarity (the default).
    Msl,
    /// Average similarity (ablation).
    Asl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub ces: f64,
    pub cep: f64,
    pub similarity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { ces: 1.0, cep: 1.0, similarity: 1.0 }
    }
}

/// Which terms enter the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub ces: bool,
    pub cep: bool,
    pub similarity: Option<SimilarityLoss>,
    #[serde(default)]
    pub weights: LossWeights,
}

impl Default for LossTerms {
    fn default() -> Self {
        Self { ces: true, cep: true, similarity: Some(SimilarityLoss::Msl), weights: LossWeights::default() }
    }
}

impl LossTerms {
    /// Sample classification only; used when there are no example prototypes.
    pub fn baseline() -> Self {
        Self { ces: true, cep: false, similarity: None, weights: LossWeights::default() }
    }
}

/// Weighted sum of the enabled terms (all weights 1 by default).
pub fn total_loss(
    batch: &[EmbeddingRecord],
    bank: &PrototypeBank,
    phase_range: Range<usize>,
    head: &SoftmaxHead,
    terms: &LossTerms,
) -> Result<LossOutput> {
    let mut out = LossOutput::default();
    let mut add = |part: LossOutput, w: f64| {
        out.value += w * part.value;
        accumulate(&mut out.grads, &part.grads, w);
    };
    if terms.ces {
        add(l_ces(batch, bank, phase_range.clone(), head)?, terms.weights.ces);
    }
    if terms.cep {
        add(l_cep(bank, phase_range.clone(), head)?, terms.weights.cep);
    }
    match terms.similarity {
        Some(SimilarityLoss::Msl) => add(l_ms(batch, bank)?, terms.weights.similarity),
        Some(SimilarityLoss::Asl) => add(l_as(batch, bank)?, terms.weights.similarity),
        None => {}
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(label: u32, v: &[f64]) -> EmbeddingRecord {
        EmbeddingRecord::new(label, v.iter().map(|&x| x as f32).collect())
    }

    #[test]
    fn ces_uniform_is_ln_k() {
        let mut bank = PrototypeBank::new(4, 0).unwrap();
        // all orthogonal to x, so every similarity is 0
        for c in 0..4u32 {
            let mut v = vec![0.0; 4];
            v[(c as usize % 3) + 1] = 1.0 + c as f64;
            bank.add_class(c, v, vec![], 0).unwrap();
        }
        let batch = vec![rec(2, &[1.0, 0.0, 0.0, 0.0])];
        for tau in [1.0, 16.0, 0.3] {
            let out = l_ces(&batch, &bank, 0..4, &SoftmaxHead::new(tau).unwrap()).unwrap();
            assert!((out.value - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn ces_single_class_is_zero() {
        let mut bank = PrototypeBank::new(2, 0).unwrap();
        bank.add_class(0, vec![1.0, 0.0], vec![], 0).unwrap();
        bank.add_class(1, vec![0.3, 1.0], vec![], 1).unwrap();
        let out = l_ces(&[rec(1, &[1.0, 2.0])], &bank, 1..2, &SoftmaxHead::default()).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grads.values().flatten().all(|&g| g == 0.0));
        assert!(!out.grads.contains_key(&ParamId::Category(0)));
    }

    #[test]
    fn ces_label_outside_phase_is_contract_error() {
        let mut bank = PrototypeBank::new(2, 0).unwrap();
        bank.add_class(0, vec![1.0, 0.0], vec![], 0).unwrap();
        bank.add_class(1, vec![0.0, 1.0], vec![], 1).unwrap();
        let r = l_ces(&[rec(0, &[1.0, 2.0])], &bank, 1..2, &SoftmaxHead::default());
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn cep_two_orthogonal_classes() {
        let mut bank = PrototypeBank::new(2, 1).unwrap();
        bank.add_class(0, vec![1.0, 0.0], vec![vec![1.0, 0.0]], 0).unwrap();
        bank.add_class(1, vec![0.0, 1.0], vec![vec![0.0, 1.0]], 0).unwrap();
        let out = l_cep(&bank, 0..2, &SoftmaxHead::new(1.0).unwrap()).unwrap();
        let expected = (1.0 + (-1f64).exp()).ln();
        assert!((out.value - expected).abs() < 1e-12);
        assert!((expected - 0.3133).abs() < 5e-5);
    }

    #[test]
    fn cep_single_class_is_zero() {
        let mut bank = PrototypeBank::new(2, 2).unwrap();
        bank.add_class(0, vec![1.0, 0.0], vec![vec![1.0, 1.0], vec![0.0, 1.0]], 0).unwrap();
        assert_eq!(l_cep(&bank, 0..1, &SoftmaxHead::default()).unwrap().value, 0.0);
    }

    fn ms_bank() -> PrototypeBank {
        // x = (1, 0, 0); e_1 has cos 0.3, e_2 has cos 0.8
        let e1 = vec![0.3, (1.0f64 - 0.09).sqrt(), 0.0];
        let e2 = vec![0.8, 0.0, 0.6];
        let mut bank = PrototypeBank::new(3, 2).unwrap();
        bank.add_class(0, vec![1.0, 0.0, 0.0], vec![e1, e2], 0).unwrap();
        bank
    }

    #[test]
    fn ms_selects_max() {
        let out = l_ms(&[rec(0, &[1.0, 0.0, 0.0])], &ms_bank()).unwrap();
        assert!((out.value - 0.2).abs() < 1e-12);
        assert!(!out.grads.contains_key(&ParamId::Example(0, 0)));
        assert!(out.grads[&ParamId::Example(0, 1)].iter().any(|&g| g != 0.0));
        assert!(out.grads.keys().all(|k| matches!(k, ParamId::Example(..))));
    }

    #[test]
    fn as_averages() {
        let out = l_as(&[rec(0, &[1.0, 0.0, 0.0])], &ms_bank()).unwrap();
        assert!((out.value - 0.45).abs() < 1e-12);
        assert_eq!(out.grads.len(), 2);
    }

    #[test]
    fn ms_parallel_and_orthogonal() {
        let mut bank = PrototypeBank::new(2, 2).unwrap();
        bank.add_class(0, vec![1.0, 0.0], vec![vec![0.0, 1.0], vec![0.0, -3.0]], 0).unwrap();
        assert!((l_ms(&[rec(0, &[1.0, 0.0])], &bank).unwrap().value - 1.0).abs() < 1e-15);
        assert!(l_ms(&[rec(0, &[0.0, 2.0])], &bank).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn ms_without_examples_is_state_error() {
        let mut bank = PrototypeBank::new(2, 0).unwrap();
        bank.add_class(0, vec![1.0, 0.0], vec![], 0).unwrap();
        assert!(matches!(l_ms(&[rec(0, &[1.0, 0.0])], &bank), Err(Error::State(_))));
        let bank1 = ms_bank();
        assert!(matches!(l_as(&[rec(9, &[1.0, 0.0, 0.0])], &bank1), Err(Error::State(_))));
    }

    #[test]
    fn frozen_examples_get_no_gradient() {
        let mut bank = ms_bank();
        bank.add_class(1, vec![0.0, 1.0, 0.0], vec![vec![0.0, 1.0, 0.1], vec![0.1, 1.0, 0.0]], 1).unwrap();
        bank.freeze_examples_before(1);
        let out = l_cep(&bank, 1..2, &SoftmaxHead::default()).unwrap();
        assert!(!out.grads.contains_key(&ParamId::Example(0, 0)));
        assert!(!out.grads.contains_key(&ParamId::Example(0, 1)));
        assert!(out.grads.contains_key(&ParamId::Example(1, 0)));
        assert!(out.grads.contains_key(&ParamId::Category(0)));
    }

    #[test]
    fn baseline_terms_equal_ces() {
        let mut bank = PrototypeBank::new(2, 0).unwrap();
        bank.add_class(0, vec![1.0, 0.2], vec![], 0).unwrap();
        bank.add_class(1, vec![0.1, 1.0], vec![], 0).unwrap();
        let batch = [rec(0, &[1.0, 0.5]), rec(1, &[0.2, 0.9])];
        let head = SoftmaxHead::default();
        let total = total_loss(&batch, &bank, 0..2, &head, &LossTerms::baseline()).unwrap();
        assert_eq!(total, l_ces(&batch, &bank, 0..2, &head).unwrap());
    }
}
