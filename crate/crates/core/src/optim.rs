//! SGD with classical momentum, L2 weight decay, step learning-rate decay
//! and global-norm gradient clipping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{global_norm, GradMap, ParamId};
use crate::protobank::PrototypeBank;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// 0-based epochs at whose start the rate is multiplied by `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub clip_max_norm: f64,
    pub epochs_prototype_stage: usize,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            decay_epochs: vec![5, 10, 15],
            decay_factor: 0.1,
            clip_max_norm: 5.0,
            epochs_prototype_stage: 20,
            batch_size: 32,
        }
    }
}

pub const CLIP_RANGE: (f64, f64) = (5.0, 100.0);

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return bad(format!("decay_factor must be positive, got {}", self.decay_factor));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("decay_epochs must be strictly increasing: {:?}", self.decay_epochs));
        }
        if !(CLIP_RANGE.0..=CLIP_RANGE.1).contains(&self.clip_max_norm) {
            return bad(format!("clip_max_norm must lie in [5, 100], got {}", self.clip_max_norm));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        Ok(())
    }
}

pub fn lr_at_epoch(config: &OptimizerConfig, epoch: usize) -> f64 {
    let decays = config.decay_epochs.iter().filter(|&&e| e <= epoch).count();
    config.base_lr * config.decay_factor.powi(decays as i32)
}

/// Rescales all gradients together when their global L2 norm exceeds
/// `max_norm`.
pub fn clip_gradients(mut grads: GradMap, max_norm: f64) -> GradMap {
    let g = global_norm(&grads);
    if g > max_norm {
        let s = max_norm / g;
        grads.values_mut().flatten().for_each(|x| *x *= s);
    }
    grads
}

/// Anything `sgd_step` can update.
pub trait ParamStore {
    fn param_mut(&mut self, id: ParamId) -> Option<&mut Vec<f64>>;

    fn is_trainable(&self, _id: ParamId) -> bool {
        true
    }
}

impl ParamStore for PrototypeBank {
    fn param_mut(&mut self, id: ParamId) -> Option<&mut Vec<f64>> {
        PrototypeBank::param_mut(self, id)
    }

    fn is_trainable(&self, id: ParamId) -> bool {
        PrototypeBank::is_trainable(self, id)
    }
}

impl ParamStore for BTreeMap<ParamId, Vec<f64>> {
    fn param_mut(&mut self, id: ParamId) -> Option<&mut Vec<f64>> {
        self.get_mut(&id)
    }
}

/// Momentum buffers, created zeroed on first use of each parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SgdState {
    pub buffers: BTreeMap<ParamId, Vec<f64>>,
    pub steps: u64,
}

/// `buf ← momentum·buf + (g + wd·p);  p ← p − lr·buf`, for every parameter
/// present in `grads`. Parameters absent from `grads` are untouched.
pub fn sgd_step<P: ParamStore>(
    params: &mut P,
    grads: &GradMap,
    state: &mut SgdState,
    lr: f64,
    config: &OptimizerConfig,
) -> Result<()> {
    for (&id, g) in grads {
        if !params.is_trainable(id) {
            return Err(Error::Contract(format!("gradient for frozen parameter {id:?}")));
        }
        let p = params
            .param_mut(id)
            .ok_or_else(|| Error::Validation(format!("gradient for unknown parameter {id:?}")))?;
        if p.len() != g.len() {
            return Err(Error::Validation(format!(
                "{id:?}: gradient length {} != parameter length {}",
                g.len(),
                p.len()
            )));
        }
        let buf = state.buffers.entry(id).or_insert_with(|| vec![0.0; p.len()]);
        for ((pi, gi), bi) in p.iter_mut().zip(g).zip(buf.iter_mut()) {
            *bi = config.momentum * *bi + (gi + config.weight_decay * *pi);
            *pi -= lr * *bi;
        }
    }
    state.steps += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-15 * a.abs().max(b.abs())
    }

    #[test]
    fn schedule_points() {
        let c = OptimizerConfig::default();
        assert_eq!(lr_at_epoch(&c, 0), 0.01);
        assert_eq!(lr_at_epoch(&c, 4), 0.01);
        assert!(close(lr_at_epoch(&c, 5), 0.001));
        assert!(close(lr_at_epoch(&c, 9), 0.001));
        assert!(close(lr_at_epoch(&c, 10), 0.0001));
        assert!(close(lr_at_epoch(&c, 19), 0.00001));
    }

    fn map(entries: &[(ParamId, Vec<f64>)]) -> GradMap {
        entries.iter().cloned().collect()
    }

    #[test]
    fn clipping_rules() {
        let z = map(&[(ParamId::Category(0), vec![0.0, 0.0])]);
        assert_eq!(clip_gradients(z.clone(), 5.0), z);

        let g = map(&[(ParamId::Category(0), vec![6.0, 0.0]), (ParamId::Category(1), vec![0.0, 8.0])]);
        let c = clip_gradients(g, 5.0);
        assert_eq!(c[&ParamId::Category(0)], vec![3.0, 0.0]);
        assert_eq!(c[&ParamId::Category(1)], vec![0.0, 4.0]);

        let small = map(&[(ParamId::Category(0), vec![3.0, 0.0])]);
        assert_eq!(clip_gradients(small.clone(), 5.0), small);
    }

    #[test]
    fn sgd_definitions() {
        let id = ParamId::Category(0);
        let mut cfg = OptimizerConfig { weight_decay: 0.0, ..Default::default() };

        let mut p = map(&[(id, vec![1.0, -2.0])]);
        let before = p.clone();
        sgd_step(&mut p, &map(&[(id, vec![0.0, 0.0])]), &mut SgdState::default(), 0.1, &cfg).unwrap();
        assert_eq!(p, before);

        cfg.momentum = 0.0;
        cfg.weight_decay = 0.01;
        let mut p = map(&[(id, vec![1.0, -2.0])]);
        sgd_step(&mut p, &map(&[(id, vec![0.5, 0.25])]), &mut SgdState::default(), 0.1, &cfg).unwrap();
        assert_eq!(p[&id], vec![1.0 - 0.1 * (0.5 + 0.01), -2.0 - 0.1 * (0.25 - 0.02)]);

        cfg.momentum = 0.9;
        cfg.weight_decay = 0.0;
        let mut p = map(&[(id, vec![0.0])]);
        let g = map(&[(id, vec![2.0])]);
        let mut st = SgdState::default();
        sgd_step(&mut p, &g, &mut st, 0.1, &cfg).unwrap();
        sgd_step(&mut p, &g, &mut st, 0.1, &cfg).unwrap();
        assert!((p[&id][0] + 0.1 * 2.0 * 2.9).abs() < 1e-15);
        assert_eq!(st.steps, 2);
    }

    #[test]
    fn absent_parameters_untouched_and_mismatch_rejected() {
        let (a, b) = (ParamId::Category(0), ParamId::Category(1));
        let mut p = map(&[(a, vec![1.0]), (b, vec![2.0])]);
        let cfg = OptimizerConfig::default();
        sgd_step(&mut p, &map(&[(a, vec![1.0])]), &mut SgdState::default(), 0.1, &cfg).unwrap();
        assert_eq!(p[&b], vec![2.0]);
        let r = sgd_step(&mut p, &map(&[(a, vec![1.0, 2.0])]), &mut SgdState::default(), 0.1, &cfg);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn frozen_parameter_gradient_is_contract_error() {
        let mut bank = PrototypeBank::new(1, 1).unwrap();
        bank.add_class(0, vec![1.0], vec![vec![1.0]], 0).unwrap();
        bank.freeze_examples_before(1);
        let g = map(&[(ParamId::Example(0, 0), vec![1.0])]);
        let r = sgd_step(&mut bank, &g, &mut SgdState::default(), 0.1, &OptimizerConfig::default());
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = [
            OptimizerConfig { clip_max_norm: 4.0, ..Default::default() },
            OptimizerConfig { clip_max_norm: 101.0, ..Default::default() },
            OptimizerConfig { decay_epochs: vec![5, 5], ..Default::default() },
            OptimizerConfig { base_lr: 0.0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    proptest! {
        #[test]
        fn lr_non_increasing(epoch in 0usize..100) {
            let c = OptimizerConfig::default();
            prop_assert!(lr_at_epoch(&c, epoch + 1) <= lr_at_epoch(&c, epoch));
        }

        #[test]
        fn clipping_preserves_direction(v in proptest::collection::vec(-50.0f64..50.0, 1..12), max in 0.1f64..20.0) {
            let g: GradMap = v.chunks(3).enumerate().map(|(i, c)| (ParamId::Category(i), c.to_vec())).collect();
            let before = global_norm(&g);
            let c = clip_gradients(g.clone(), max);
            let after = global_norm(&c);
            prop_assert!(after <= before + 1e-12);
            if before > max {
                prop_assert!((after - max).abs() < 1e-9);
                let a: Vec<f64> = g.values().flatten().cloned().collect();
                let b: Vec<f64> = c.values().flatten().cloned().collect();
                let cos = crate::linalg::cosine(&a, &b);
                prop_assert!((cos - 1.0).abs() < 1e-12);
            }
        }
    }
}
