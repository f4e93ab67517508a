use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize};

use super::SimError;
use crate::cache::{
    ArcPolicy, BeladyPolicy, EvictionPolicy, FifoPolicy, LayerOracle, LecarParams, LecarPolicy, LfuPolicy, LruPolicy,
};
use crate::ml::{MlPolicy, NetSet};

/// A replacement policy plus its parameters.
///
/// In config files a policy is either its name (`"lru"`) or, for LeCaR with
/// non-default parameters, a table: `{ lecar = { learning_rate = 0.3 } }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyConfig {
    Lru,
    Lfu,
    Fifo,
    Arc,
    Lecar(LecarParams),
    Belady,
    Ml,
}

pub const POLICY_NAMES: [&str; 7] = ["lru", "lfu", "fifo", "arc", "lecar", "belady", "ml"];

impl PolicyConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Lru => "lru",
            Self::Lfu => "lfu",
            Self::Fifo => "fifo",
            Self::Arc => "arc",
            Self::Lecar(_) => "lecar",
            Self::Belady => "belady",
            Self::Ml => "ml",
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if let Self::Lecar(p) = self {
            if !(p.learning_rate.is_finite() && p.learning_rate > 0.0) {
                return Err(SimError::InvalidPolicy(format!(
                    "lecar learning_rate must be positive, got {}",
                    p.learning_rate
                )));
            }
            if !(p.discount_base > 0.0 && p.discount_base < 1.0) {
                return Err(SimError::InvalidPolicy(format!(
                    "lecar discount_base must be in (0, 1), got {}",
                    p.discount_base
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for PolicyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyConfig {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "lru" => Self::Lru,
            "lfu" => Self::Lfu,
            "fifo" => Self::Fifo,
            "arc" => Self::Arc,
            "lecar" => Self::Lecar(LecarParams::default()),
            "belady" | "min" | "opt" => Self::Belady,
            "ml" => Self::Ml,
            other => {
                return Err(SimError::InvalidPolicy(format!(
                    "unknown policy {other:?} (expected one of {})",
                    POLICY_NAMES.join(", ")
                )))
            }
        })
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PolicyRepr {
    Name(String),
    Lecar { lecar: LecarParams },
}

impl<'de> Deserialize<'de> for PolicyConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match PolicyRepr::deserialize(d)? {
            PolicyRepr::Name(n) => n.parse().map_err(serde::de::Error::custom),
            PolicyRepr::Lecar { lecar } => Ok(Self::Lecar(lecar)),
        }
    }
}

/// Per-layer state a policy may need besides its own bookkeeping.
pub(crate) struct PolicyInputs<'a> {
    pub layer: usize,
    pub num_experts: usize,
    pub capacity: usize,
    pub oracle: &'a Arc<LayerOracle>,
    pub nets: Option<&'a NetSet>,
    pub seed: u64,
    pub include_prefill_features: bool,
}

pub(crate) fn build_policy(cfg: &PolicyConfig, inp: &PolicyInputs<'_>) -> Result<Box<dyn EvictionPolicy>, SimError> {
    Ok(match cfg {
        PolicyConfig::Lru => Box::new(LruPolicy::new(inp.num_experts)),
        PolicyConfig::Lfu => Box::new(LfuPolicy::new(inp.num_experts)),
        PolicyConfig::Fifo => Box::new(FifoPolicy::new(inp.num_experts)),
        PolicyConfig::Arc => Box::new(ArcPolicy::new(inp.capacity)),
        PolicyConfig::Lecar(p) => {
            Box::new(LecarPolicy::new(inp.num_experts, inp.capacity, *p, inp.seed, inp.layer as u64))
        }
        PolicyConfig::Belady => Box::new(BeladyPolicy::new(Arc::clone(inp.oracle))),
        PolicyConfig::Ml => {
            let nets = inp.nets.ok_or(SimError::MissingNetworks)?;
            Box::new(MlPolicy::new(Arc::clone(nets.layer(inp.layer)), inp.include_prefill_features))
        }
    })
}
