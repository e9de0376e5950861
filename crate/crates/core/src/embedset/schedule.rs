use std::ops::Range;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EmbeddingDataset, EmbeddingRecord};
use crate::error::{Error, Result};
use crate::rng::{rng_for, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    /// Half the classes in an initial phase, the rest split into `n` increments.
    #[serde(rename = "PHI")]
    Phi,
    /// All classes split into `n` equal increments.
    #[serde(rename = "PNI")]
    Pni,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PHI" => Ok(Protocol::Phi),
            "PNI" => Ok(Protocol::Pni),
            other => Err(Error::Parameter(format!("unknown protocol {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassOrder {
    Identity,
    Shuffled { seed: u64 },
    Explicit(Vec<u32>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Class order plus cumulative class counts `s_0 = 0 < s_1 < … < s_T = C`.
///
/// Position `p` in `class_order` is the class's ordered index; phase `t`
/// introduces the classes at positions `boundaries[t]..boundaries[t + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr")]
pub struct PhaseSchedule {
    pub protocol: Protocol,
    pub num_incremental_phases: usize,
    pub class_order: Vec<u32>,
    pub boundaries: Vec<usize>,
    #[serde(skip)]
    position: Vec<usize>,
}

#[derive(Deserialize)]
struct ScheduleRepr {
    protocol: Protocol,
    num_incremental_phases: usize,
    class_order: Vec<u32>,
    boundaries: Vec<usize>,
}

impl TryFrom<ScheduleRepr> for PhaseSchedule {
    type Error = Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        PhaseSchedule {
            protocol: r.protocol,
            num_incremental_phases: r.num_incremental_phases,
            class_order: r.class_order,
            boundaries: r.boundaries,
            position: vec![],
        }
        .validated()
    }
}

impl PhaseSchedule {
    pub fn num_phases(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn num_classes(&self) -> usize {
        self.class_order.len()
    }

    /// Ordered-index range of the classes introduced at phase `t`.
    pub fn phase_range(&self, t: usize) -> Result<Range<usize>> {
        self.check_phase(t)?;
        Ok(self.boundaries[t]..self.boundaries[t + 1])
    }

    /// Ordered-index range of every class seen up to and including phase `t`.
    pub fn seen_range(&self, t: usize) -> Result<Range<usize>> {
        self.check_phase(t)?;
        Ok(0..self.boundaries[t + 1])
    }

    pub fn classes_in_phase(&self, t: usize) -> Result<&[u32]> {
        Ok(&self.class_order[self.phase_range(t)?])
    }

    /// Ordered index of an original class id.
    pub fn position_of(&self, class: u32) -> Option<usize> {
        self.position.get(class as usize).copied().filter(|&p| p != usize::MAX)
    }

    fn check_phase(&self, t: usize) -> Result<()> {
        if t >= self.num_phases() {
            return Err(Error::Index { index: t, len: self.num_phases() });
        }
        Ok(())
    }

    fn build_position(class_order: &[u32]) -> Vec<usize> {
        let mut position = vec![usize::MAX; class_order.len()];
        for (p, &c) in class_order.iter().enumerate() {
            if let Some(slot) = position.get_mut(c as usize) {
                *slot = p;
            }
        }
        position
    }

    fn validated(mut self) -> Result<Self> {
        let c = self.class_order.len();
        let mut seen = vec![false; c];
        for &cls in &self.class_order {
            let i = cls as usize;
            if i >= c || seen[i] {
                return Err(Error::Schedule("class_order is not a permutation".into()));
            }
            seen[i] = true;
        }
        if self.boundaries.first() != Some(&0)
            || self.boundaries.last() != Some(&c)
            || self.boundaries.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Schedule(format!("bad boundaries {:?}", self.boundaries)));
        }
        let expected = match self.protocol {
            Protocol::Phi => self.num_incremental_phases + 1,
            Protocol::Pni => self.num_incremental_phases,
        };
        if self.num_phases() != expected {
            return Err(Error::Schedule(format!(
                "{:?} with n={} must have {expected} phases",
                self.protocol, self.num_incremental_phases
            )));
        }
        self.position = Self::build_position(&self.class_order);
        Ok(self)
    }
}

/// Builds the phase boundaries for PHI or PNI. Divisibility is required;
/// uneven splits are rejected rather than distributed.
pub fn make_schedule(
    num_classes: usize,
    protocol: Protocol,
    num_incremental_phases: usize,
    order: &ClassOrder,
) -> Result<PhaseSchedule> {
    let n = num_incremental_phases;
    if num_classes == 0 || n == 0 {
        return Err(Error::Schedule("class count and phase count must be positive".into()));
    }
    let mut boundaries = vec![0];
    match protocol {
        Protocol::Phi => {
            if !num_classes.is_multiple_of(2) {
                return Err(Error::Schedule(format!("PHI needs an even class count, got {num_classes}")));
            }
            let half = num_classes / 2;
            if !half.is_multiple_of(n) {
                return Err(Error::Schedule(format!(
                    "PHI: {half} remaining classes not divisible into {n} phases"
                )));
            }
            let step = half / n;
            boundaries.extend((0..=n).map(|i| half + i * step));
        }
        Protocol::Pni => {
            if !num_classes.is_multiple_of(n) {
                return Err(Error::Schedule(format!(
                    "PNI: {num_classes} classes not divisible into {n} phases"
                )));
            }
            let step = num_classes / n;
            boundaries.extend((1..=n).map(|i| i * step));
        }
    }

    let class_order: Vec<u32> = match order {
        ClassOrder::Identity => (0..num_classes as u32).collect(),
        ClassOrder::Shuffled { seed } => {
            let mut v: Vec<u32> = (0..num_classes as u32).collect();
            v.shuffle(&mut rng_for(*seed, tag::CLASS_ORDER, 0));
            v
        }
        ClassOrder::Explicit(v) => {
            if v.len() != num_classes {
                return Err(Error::Schedule(format!(
                    "explicit order has {} entries for {num_classes} classes",
                    v.len()
                )));
            }
            v.clone()
        }
    };

    PhaseSchedule { protocol, num_incremental_phases: n, class_order, boundaries, position: vec![] }.validated()
}

fn select(
    dataset: &EmbeddingDataset,
    schedule: &PhaseSchedule,
    split: Split,
    range: Range<usize>,
) -> Result<Vec<EmbeddingRecord>> {
    if schedule.num_classes() != dataset.num_classes() {
        return Err(Error::Schedule(format!(
            "schedule covers {} classes, dataset has {}",
            schedule.num_classes(),
            dataset.num_classes()
        )));
    }
    Ok(dataset
        .records(split)
        .iter()
        .filter(|r| schedule.position_of(r.label).is_some_and(|p| range.contains(&p)))
        .cloned()
        .collect())
}

/// Records of the classes introduced at phase `t` (the only data a phase
/// may train on), in dataset order, with original labels.
pub fn phase_data(
    dataset: &EmbeddingDataset,
    schedule: &PhaseSchedule,
    t: usize,
    split: Split,
) -> Result<Vec<EmbeddingRecord>> {
    let range = schedule.phase_range(t)?;
    select(dataset, schedule, split, range)
}

/// Records of every class seen up to and including phase `t`.
pub fn seen_data(
    dataset: &EmbeddingDataset,
    schedule: &PhaseSchedule,
    t: usize,
    split: Split,
) -> Result<Vec<EmbeddingRecord>> {
    let range = schedule.seen_range(t)?;
    select(dataset, schedule, split, range)
}
