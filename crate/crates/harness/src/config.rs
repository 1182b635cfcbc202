//! Experiment configuration in JSON.
//!
//! ```json
//! {
//!   "name": "pair-cyclic",
//!   "dataset": "pair-contradicting",
//!   "loss": "logistic",
//!   "train": {
//!     "algorithm": "seqgd",
//!     "k": 10,
//!     "eta": "auto:0.9",
//!     "guard": "cyclic",
//!     "horizon": {"cycles": 100},
//!     "schedule": {"kind": "cyclic"}
//!   },
//!   "metrics": ["loss_joint", "loss_task", "forget_cycle", "bound_loss"],
//!   "checks": ["loss", "forgetting"],
//!   "output_dir": "out"
//! }
//! ```
//!
//! Keys of `train` mirror `TrainConfig`. Only `name`, `dataset` and
//! `train` are required. Unknown keys are rejected with their path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use seqmargin_core::loss::LossKind;
use seqmargin_core::metrics::{Metric, DEFAULT_DISTANCE_CONSTANT};
use seqmargin_core::Config;

use crate::error::{HarnessError, Result};

/// Bound checks a run can be evaluated against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundCheck {
    /// Joint loss at every cycle start against the cyclic loss bound.
    Loss,
    /// Cycle-averaged forgetting inside the alignment sandwich.
    Forgetting,
    /// Squared distance to w★ against the non-separable bound.
    Distance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Builtin name, generator spec (`planar:seed=7`) or dataset file path.
    pub dataset: String,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    pub train: Config,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    #[serde(default)]
    pub checks: Vec<BoundCheck>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Leading constant of the non-separable distance bound.
    #[serde(default = "default_distance_constant")]
    pub distance_constant: f64,
    /// Fraction of stages excluded from fitted slopes.
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
}

fn default_loss() -> LossKind {
    LossKind::Logistic
}

fn default_metrics() -> Vec<String> {
    ["loss_joint", "loss_task", "norm_w", "angle_sine"].map(String::from).to_vec()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_distance_constant() -> f64 {
    DEFAULT_DISTANCE_CONSTANT
}

fn default_burn_in() -> f64 {
    0.2
}

/// Metric selection after expanding `loss_task` to every task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricSel {
    One(Metric),
    AllTaskLosses,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Config {
            path: origin.to_path_buf(),
            message: format!("at `{}`: {}", e.path(), e.inner()),
        })?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn metric_selection(&self) -> Result<Vec<MetricSel>> {
        self.metrics
            .iter()
            .enumerate()
            .map(|(i, name)| {
                if name == "loss_task" {
                    Ok(MetricSel::AllTaskLosses)
                } else {
                    Metric::parse(name).map(MetricSel::One).ok_or_else(|| HarnessError::Config {
                        path: PathBuf::new(),
                        message: format!("at `metrics[{i}]`: unknown metric {name:?}"),
                    })
                }
            })
            .collect()
    }

    fn validate(&self, origin: &Path) -> Result<()> {
        let bad = |message: String| HarnessError::Config {
            path: origin.to_path_buf(),
            message,
        };
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(bad(format!("at `name`: {:?} is not a valid run name", self.name)));
        }
        if self.train.k == 0 {
            return Err(bad("at `train.k`: must be at least 1".into()));
        }
        if !(self.distance_constant > 0.0) {
            return Err(bad("at `distance_constant`: must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(bad("at `burn_in`: must lie in [0, 1)".into()));
        }
        self.metric_selection().map_err(|e| match e {
            HarnessError::Config { message, .. } => bad(message),
            other => other,
        })?;
        Ok(())
    }

    /// Directory holding this run's trace and summary.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }
}
