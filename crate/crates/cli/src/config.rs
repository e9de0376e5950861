//! The JSON run configuration and its validation.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "seed": 0,
//!   "synthetic": { "num_classes": 20 },
//!   "protocol": { "protocol": "PNI", "phases": 10, "class_order": "shuffled" },
//!   "train": { "n_e": 10 },
//!   "output": { "dir": "out", "checkpoints": false, "formats": ["json", "csv"] }
//! }
//! ```
//!
//! Exactly one of `dataset` (paths to train/test embedding files) and
//! `synthetic` (generator overrides on top of the benchmark defaults) must
//! be present. Relative paths resolve against the config file's directory.

use std::fmt;
use std::path::{Path, PathBuf};

use ipt_core::embedset::{
    gen_synthetic, load_split, make_schedule, ClassOrder, EmbeddingDataset, EmbeddingSplit, PhaseSchedule, Protocol,
    SyntheticMeta, SyntheticParams,
};
use ipt_core::trainer::{CategoryInit, TrainConfig};
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub schema_version: u32,
    /// Base seed; also the default for the generator and class-order seeds.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetPaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticBlock>,
    /// Category initializations (one record per class), required when
    /// `train.category_init` is `provided`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_vectors: Option<PathBuf>,
    pub protocol: ProtocolBlock,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub train: PathBuf,
    pub test: PathBuf,
}

/// Generator overrides; unset fields take the benchmark defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticBlock {
    pub num_classes: Option<usize>,
    pub dim: Option<usize>,
    pub per_class_train: Option<usize>,
    pub per_class_test: Option<usize>,
    pub modes_per_class: Option<usize>,
    pub center_scale: Option<f64>,
    pub mode_separation: Option<f64>,
    pub spread: Option<f64>,
    pub seed: Option<u64>,
}

impl SyntheticBlock {
    pub fn resolve(&self, default_seed: u64) -> SyntheticParams {
        let d = SyntheticParams::benchmark(self.seed.unwrap_or(default_seed));
        SyntheticParams {
            num_classes: self.num_classes.unwrap_or(d.num_classes),
            dim: self.dim.unwrap_or(d.dim),
            per_class_train: self.per_class_train.unwrap_or(d.per_class_train),
            per_class_test: self.per_class_test.unwrap_or(d.per_class_test),
            modes_per_class: self.modes_per_class.unwrap_or(d.modes_per_class),
            center_scale: self.center_scale.unwrap_or(d.center_scale),
            mode_separation: self.mode_separation.unwrap_or(d.mode_separation),
            spread: self.spread.unwrap_or(d.spread),
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolBlock {
    pub protocol: Protocol,
    /// Number of incremental phases `n`.
    pub phases: usize,
    #[serde(default)]
    pub class_order: OrderSpec,
    /// Seed for the shuffled order; defaults to the base seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderSpec {
    /// `"identity"` or `"shuffled"`.
    Named(String),
    Explicit(Vec<u32>),
}

impl Default for OrderSpec {
    fn default() -> Self {
        OrderSpec::Named("shuffled".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    /// Also write `bank_phase_<t>.iptb` after every phase.
    pub checkpoints: bool,
    pub formats: Vec<ReportFormat>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: None, checkpoints: false, formats: vec![ReportFormat::Json, ReportFormat::Csv] }
    }
}

/// One validation failure, located by its JSON path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid config ({} problem{}):", self.0.len(), if self.0.len() == 1 { "" } else { "s" })?;
        for issue in &self.0 {
            writeln!(f, "  {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Where the embeddings come from, after validation.
pub enum DataSource {
    Files { train: PathBuf, test: PathBuf },
    Synthetic(SyntheticParams),
}

/// A validated config with every default filled in and the data loaded.
pub struct ResolvedRun {
    pub config: RunConfigFile,
    pub dataset: EmbeddingDataset,
    pub synthetic_meta: Option<SyntheticMeta>,
    pub schedule: PhaseSchedule,
    pub category_vectors: Option<EmbeddingSplit>,
}

impl ResolvedRun {
    /// The config as echoed into reports: resolved, without output settings.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(&self.config).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output");
        }
        v
    }
}

impl RunConfigFile {
    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let mut config: RunConfigFile = serde_json::from_str(&text)
            .map_err(|e| ConfigErrors(vec![ConfigIssue { path: "$".into(), message: e.to_string() }]))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.rebase_paths(base);
        Ok(config)
    }

    fn rebase_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = &mut self.dataset {
            fix(&mut d.train);
            fix(&mut d.test);
        }
        if let Some(p) = &mut self.category_vectors {
            fix(p);
        }
        if let Some(p) = &mut self.output.dir {
            fix(p);
        }
    }

    /// Applies a `--seed` override to the base seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self
    }

    fn class_order(&self, issues: &mut Vec<ConfigIssue>) -> Option<ClassOrder> {
        match &self.protocol.class_order {
            OrderSpec::Named(n) if n == "identity" => Some(ClassOrder::Identity),
            OrderSpec::Named(n) if n == "shuffled" => {
                Some(ClassOrder::Shuffled { seed: self.protocol.order_seed.unwrap_or(self.seed) })
            }
            OrderSpec::Named(n) => {
                issues.push(issue("protocol.class_order", format!("expected \"identity\", \"shuffled\" or a list, got {n:?}")));
                None
            }
            OrderSpec::Explicit(v) => Some(ClassOrder::Explicit(v.clone())),
        }
    }

    pub fn data_source(&self) -> Result<DataSource, ConfigErrors> {
        match (&self.dataset, &self.synthetic) {
            (Some(d), None) => Ok(DataSource::Files { train: d.train.clone(), test: d.test.clone() }),
            (None, Some(s)) => Ok(DataSource::Synthetic(s.resolve(self.seed))),
            (Some(_), Some(_)) => Err(ConfigErrors(vec![issue("$", "give either \"dataset\" or \"synthetic\", not both")])),
            (None, None) => Err(ConfigErrors(vec![issue("$", "one of \"dataset\" or \"synthetic\" is required")])),
        }
    }

    /// Checks everything that can be checked before training, loads the
    /// data and builds the schedule. All problems are reported together.
    pub fn resolve(mut self) -> Result<ResolvedRun, ConfigErrors> {
        let mut issues = Vec::new();
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            issues.push(issue(
                "schema_version",
                format!("unsupported version {}, expected {CONFIG_SCHEMA_VERSION}", self.schema_version),
            ));
        }
        self.train.seed = self.seed;
        if let Err(e) = self.train.validate() {
            issues.push(issue("train", e.to_string()));
        }
        let order = self.class_order(&mut issues);

        let mut synthetic_meta = None;
        let dataset = match self.data_source() {
            Err(mut e) => {
                issues.append(&mut e.0);
                None
            }
            Ok(DataSource::Files { train, test }) => {
                for (p, f) in [("dataset.train", &train), ("dataset.test", &test)] {
                    if !f.is_file() {
                        issues.push(issue(p, format!("file not found: {}", f.display())));
                    }
                }
                if issues.iter().any(|i| i.path.starts_with("dataset")) {
                    None
                } else {
                    EmbeddingDataset::load(&train, &test).map_err(|e| issues.push(issue("dataset", e.to_string()))).ok()
                }
            }
            Ok(DataSource::Synthetic(params)) => match params.validate().and_then(|_| gen_synthetic(&params)) {
                Ok(syn) => {
                    self.synthetic = Some(SyntheticBlock {
                        num_classes: Some(params.num_classes),
                        dim: Some(params.dim),
                        per_class_train: Some(params.per_class_train),
                        per_class_test: Some(params.per_class_test),
                        modes_per_class: Some(params.modes_per_class),
                        center_scale: Some(params.center_scale),
                        mode_separation: Some(params.mode_separation),
                        spread: Some(params.spread),
                        seed: Some(params.seed),
                    });
                    synthetic_meta = Some(syn.meta);
                    Some(syn.dataset)
                }
                Err(e) => {
                    issues.push(issue("synthetic", e.to_string()));
                    None
                }
            },
        };

        let category_vectors = match (&self.category_vectors, self.train.category_init) {
            (Some(p), CategoryInit::Provided) => match load_split(p) {
                Ok(s) => Some(s),
                Err(e) => {
                    issues.push(issue("category_vectors", format!("{}: {e}", p.display())));
                    None
                }
            },
            (None, CategoryInit::Provided) => {
                issues.push(issue("category_vectors", "required when train.category_init is \"provided\""));
                None
            }
            (Some(_), CategoryInit::ClassMean) => {
                issues.push(issue("category_vectors", "only used with train.category_init \"provided\""));
                None
            }
            (None, CategoryInit::ClassMean) => None,
        };

        let schedule = match (&dataset, order) {
            (Some(d), Some(order)) => {
                match make_schedule(d.num_classes(), self.protocol.protocol, self.protocol.phases, &order) {
                    Ok(s) => Some(s),
                    Err(e) => {
                        issues.push(issue("protocol", e.to_string()));
                        None
                    }
                }
            }
            _ => None,
        };
        if let (Some(d), Some(v)) = (&dataset, &category_vectors) {
            if v.dim != d.dim() || v.num_classes() != d.num_classes() {
                issues.push(issue(
                    "category_vectors",
                    format!(
                        "expected {} classes of dim {}, file has {} of dim {}",
                        d.num_classes(),
                        d.dim(),
                        v.num_classes(),
                        v.dim
                    ),
                ));
            }
        }

        match (dataset, schedule) {
            (Some(dataset), Some(schedule)) if issues.is_empty() => {
                Ok(ResolvedRun { config: self, dataset, synthetic_meta, schedule, category_vectors })
            }
            _ => Err(ConfigErrors(issues)),
        }
    }
}

fn issue(path: &str, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue { path: path.into(), message: message.into() }
}
