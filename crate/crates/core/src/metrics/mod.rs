//! Evaluation metrics for incremental runs.

mod pca;
mod report;

pub use pca::{pca_project, Pca};
pub use report::{PhaseResult, RunReport, REPORT_SCHEMA_VERSION};

use crate::error::{Error, Result};

fn check_pair(predictions: &[u32], labels: &[u32]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::Parameter(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    Ok(())
}

pub fn accuracy(predictions: &[u32], labels: &[u32]) -> Result<f64> {
    check_pair(predictions, labels)?;
    if labels.is_empty() {
        return Err(Error::Parameter("accuracy of an empty set".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Average incremental accuracy: the mean of the per-phase accuracies.
pub fn aia(per_phase_accuracies: &[f64]) -> Result<f64> {
    if per_phase_accuracies.is_empty() {
        return Err(Error::Parameter("no phases".into()));
    }
    Ok(per_phase_accuracies.iter().sum::<f64>() / per_phase_accuracies.len() as f64)
}

/// Forgetting in percentage points: initial-class accuracy right after the
/// first phase minus the same accuracy after the last. Negative values mean
/// the old classes got better. `None` for single-phase runs.
pub fn forgetting_rate(report: &RunReport) -> Option<f64> {
    let first = report.phases.first()?;
    let last = report.phases.last()?;
    if report.phases.len() < 2 {
        return None;
    }
    Some(forgetting_points(first.phase0_accuracy, last.phase0_accuracy))
}

pub fn forgetting_points(after_first: f64, after_last: f64) -> f64 {
    (after_first - after_last) * 100.0
}

/// `confusion[predicted][true]` counts.
pub fn confusion_matrix(predictions: &[u32], labels: &[u32], num_classes: usize) -> Result<Vec<Vec<u64>>> {
    check_pair(predictions, labels)?;
    let mut m = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        let (p, l) = (p as usize, l as usize);
        if p >= num_classes || l >= num_classes {
            return Err(Error::Parameter(format!("class id out of range {num_classes}")));
        }
        m[p][l] += 1;
    }
    Ok(m)
}

/// Classes for which strictly more than half of the samples predicted as
/// that class belong elsewhere. A class that attracts no predictions at
/// all counts as drifted.
pub fn drifted_classes(predictions: &[u32], labels: &[u32], num_classes: usize) -> Result<Vec<u32>> {
    let m = confusion_matrix(predictions, labels, num_classes)?;
    Ok(m.iter()
        .enumerate()
        .filter(|(c, row)| {
            let total: u64 = row.iter().sum();
            let wrong = total - row[*c];
            total == 0 || 2 * wrong > total
        })
        .map(|(c, _)| c as u32)
        .collect())
}

/// Category drift rate: the fraction of classes in [`drifted_classes`].
pub fn cdr(predictions: &[u32], labels: &[u32], num_classes: usize) -> Result<f64> {
    if num_classes == 0 {
        return Err(Error::Parameter("no classes".into()));
    }
    Ok(drifted_classes(predictions, labels, num_classes)?.len() as f64 / num_classes as f64)
}

/// Share of total model memory taken by prototypes:
/// `extra / (extra + backbone)` with `extra = classes · (1 + n_e) · dim · bytes`.
pub fn extra_memory_proportion(
    num_classes: usize,
    n_e: usize,
    dim: usize,
    bytes_per_scalar: usize,
    backbone_bytes: u64,
) -> Result<f64> {
    if backbone_bytes == 0 {
        return Err(Error::Parameter("backbone size must be positive".into()));
    }
    let extra = num_classes as f64 * (1 + n_e) as f64 * dim as f64 * bytes_per_scalar as f64;
    Ok(extra / (extra + backbone_bytes as f64))
}
