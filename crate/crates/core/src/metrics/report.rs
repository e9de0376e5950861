use serde::{Deserialize, Serialize};

use super::{accuracy, aia, cdr, confusion_matrix, forgetting_points};
use crate::embedset::PhaseSchedule;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Evaluation after one phase, over the test records of all seen classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub phase: usize,
    pub seen_classes: usize,
    pub accuracy: f64,
    /// Accuracy restricted to the classes introduced at phase 0.
    pub phase0_accuracy: f64,
    /// Raw predictions and labels (original class ids), in test-set order.
    pub predictions: Vec<u32>,
    pub labels: Vec<u32>,
    /// Wall-clock time; kept out of the JSON so reports are reproducible.
    #[serde(skip)]
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub config: TrainConfig,
    pub schedule: PhaseSchedule,
    pub num_classes: usize,
    pub phases: Vec<PhaseResult>,
    pub aia: f64,
    pub final_accuracy: f64,
    /// Percentage points; absent for single-phase runs.
    pub fr: Option<f64>,
    pub cdr: f64,
    /// `final_confusion[predicted][true]` after the last phase.
    pub final_confusion: Vec<Vec<u64>>,
    pub notes: Vec<String>,
    /// Caller-supplied context echoed verbatim (e.g. the resolved CLI config).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

const NOTES: [&str; 3] = [
    "aia averages every phase, including the initial phase",
    "cdr counts a class that receives no predictions as drifted",
    "fr is measured on the classes of phase 0, in percentage points",
];

impl RunReport {
    pub fn assemble(
        config: TrainConfig,
        schedule: PhaseSchedule,
        num_classes: usize,
        phases: Vec<PhaseResult>,
    ) -> Result<Self> {
        let last = phases.last().ok_or_else(|| Error::Parameter("report without phases".into()))?;
        let accs: Vec<f64> = phases.iter().map(|p| p.accuracy).collect();
        let fr = (phases.len() >= 2).then(|| forgetting_points(phases[0].phase0_accuracy, last.phase0_accuracy));
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            seed: config.seed,
            aia: aia(&accs)?,
            final_accuracy: last.accuracy,
            fr,
            cdr: cdr(&last.predictions, &last.labels, num_classes)?,
            final_confusion: confusion_matrix(&last.predictions, &last.labels, num_classes)?,
            notes: NOTES.iter().map(|s| s.to_string()).collect(),
            config,
            schedule,
            num_classes,
            phases,
            run_config: None,
        })
    }

    /// Recomputes every metric from the stored raw predictions and checks
    /// that the stored values agree.
    pub fn verify(&self) -> Result<()> {
        for p in &self.phases {
            let acc = accuracy(&p.predictions, &p.labels)?;
            if acc != p.accuracy {
                return Err(Error::State(format!("phase {} accuracy {} != recomputed {acc}", p.phase, p.accuracy)));
            }
        }
        let rebuilt = Self::assemble(self.config.clone(), self.schedule.clone(), self.num_classes, self.phases.clone())?;
        let same = rebuilt.aia == self.aia
            && rebuilt.fr == self.fr
            && rebuilt.cdr == self.cdr
            && rebuilt.final_accuracy == self.final_accuracy
            && rebuilt.final_confusion == self.final_confusion;
        if !same {
            return Err(Error::State("stored metrics disagree with raw predictions".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported report schema {}", r.schema_version)));
        }
        Ok(r)
    }

    /// `phase,seen_classes,accuracy,phase0_accuracy` rows.
    pub fn accuracies_csv(&self) -> String {
        let mut s = String::from("phase,seen_classes,accuracy,phase0_accuracy\n");
        for p in &self.phases {
            s.push_str(&format!("{},{},{},{}\n", p.phase, p.seen_classes, p.accuracy, p.phase0_accuracy));
        }
        s
    }
}
