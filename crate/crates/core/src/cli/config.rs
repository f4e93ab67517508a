use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ml::{DatasetConfig, TrainConfig};
use crate::sim::{CostModel, HardwareBudget, PolicyConfig, SimOptions};
use crate::trace::{SyntheticWorkloadConfig, TraceHeader};
use crate::Error;

pub const DEFAULT_OUT_DIR: &str = "expertsim-out";

/// Shape of the synthetic model used when no trace file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub model_name: String,
    pub num_layers: usize,
    pub num_experts: usize,
    pub top_k: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { model_name: "synthetic".into(), num_layers: 4, num_experts: 64, top_k: 8 }
    }
}

impl ModelSection {
    pub fn header(&self) -> TraceHeader {
        TraceHeader::new(self.model_name.clone(), self.num_layers, self.num_experts, self.top_k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub include_prefill_in_hit_rate: bool,
    pub refetch_window: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        let o = SimOptions::default();
        Self { include_prefill_in_hit_rate: o.include_prefill_in_hit_rate, refetch_window: o.refetch_window }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlSection {
    /// Cache capacity of the Belady replay that labels the training data.
    /// Defaults to half the experts per layer.
    pub train_capacity: Option<usize>,
    /// Train one network on all layers instead of one per layer.
    pub shared: bool,
    /// Checkpoint directory; defaults to `<out_dir>/checkpoints`.
    pub checkpoints: Option<PathBuf>,
}

/// Everything a run needs, read from one TOML file. Command-line flags
/// override individual fields.
///
/// `rng_seed` seeds training and the randomized policies;
/// `workload.rng_seed` seeds trace generation. `--seed` sets both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub rng_seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Trace file. Without one, a trace is synthesized from `model` and `workload`.
    pub trace: Option<PathBuf>,
    pub model: ModelSection,
    pub workload: SyntheticWorkloadConfig,
    pub policies: Vec<PolicyConfig>,
    pub capacities: Vec<usize>,
    pub cost: CostModel,
    pub sim: SimSection,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub ml: MlSection,
    pub budget: Option<HardwareBudget>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rng_seed: 0,
            out_dir: None,
            trace: None,
            model: ModelSection::default(),
            workload: SyntheticWorkloadConfig::default(),
            policies: ["lru", "lfu", "fifo", "arc", "lecar", "belady"]
                .iter()
                .map(|p| p.parse().expect("known policy"))
                .collect(),
            capacities: vec![16, 32, 48],
            cost: CostModel::default(),
            sim: SimSection::default(),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            ml: MlSection::default(),
            budget: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.ml.checkpoints.clone().unwrap_or_else(|| self.out_dir().join("checkpoints"))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.rng_seed = seed;
        self.workload.rng_seed = seed;
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            include_prefill_in_hit_rate: self.sim.include_prefill_in_hit_rate,
            refetch_window: self.sim.refetch_window,
            include_prefill_features: self.dataset.include_prefill_features,
            seed: self.rng_seed,
        }
    }

    /// Field-level checks that do not need the trace.
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if let Some(t) = &self.trace {
            if !t.is_file() {
                return Err(Error::Config(format!("trace: file {} does not exist", t.display())));
            }
        }
        if self.capacities.is_empty() {
            return bad("capacities: list must not be empty");
        }
        if self.capacities.contains(&0) {
            return bad("capacities: every capacity must be >= 1");
        }
        if self.policies.is_empty() {
            return bad("policies: list must not be empty");
        }
        for p in &self.policies {
            p.validate()?;
        }
        self.cost.validate()?;
        if self.sim.refetch_window == 0 {
            return bad("sim.refetch_window: must be >= 1");
        }
        if self.dataset.d_max == 0 {
            return bad("dataset.d_max: must be >= 1");
        }
        let t = &self.train;
        if !(t.learning_rate.is_finite() && t.learning_rate > 0.0) {
            return bad("train.learning_rate: must be positive");
        }
        if !(t.weight_decay.is_finite() && t.weight_decay >= 0.0) {
            return bad("train.weight_decay: must be non-negative");
        }
        if !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) {
            return bad("train.beta1/beta2: must lie in [0, 1)");
        }
        if t.batch_size == 0 || t.hidden == 0 {
            return bad("train.batch_size/hidden: must be >= 1");
        }
        if !(0.0..1.0).contains(&t.val_fraction) {
            return bad("train.val_fraction: must lie in [0, 1)");
        }
        if self.ml.train_capacity == Some(0) {
            return bad("ml.train_capacity: must be >= 1");
        }
        Ok(())
    }
}
