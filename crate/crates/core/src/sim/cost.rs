use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::SimError;

/// Durations in config files are written as (fractional) microseconds.
mod micros {
    use super::*;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_nanos() as f64 / 1000.0)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let us = f64::deserialize(d)?;
        if !us.is_finite() || us < 0.0 {
            return Err(serde::de::Error::custom(format!(
                "duration must be a non-negative number of microseconds, got {us}"
            )));
        }
        Ok(Duration::from_nanos((us * 1000.0).round() as u64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    /// Loading one expert from storage.
    #[serde(rename = "t_load_us", with = "micros")]
    pub t_load: Duration,
    /// One expert FFN evaluation.
    #[serde(rename = "t_compute_us", with = "micros")]
    pub t_compute: Duration,
    /// Misses of one event load one after another. When false they are
    /// fetched concurrently and a step with misses costs a single `t_load`.
    pub loads_serial: bool,
    /// Extra cost per (decode step, layer) charged to the learned policy.
    /// Zero treats scoring as hidden behind expert loading.
    #[serde(rename = "ml_scoring_us", with = "micros")]
    pub ml_scoring: Duration,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            t_load: Duration::from_millis(3),
            t_compute: Duration::from_micros(158),
            loads_serial: true,
            ml_scoring: Duration::ZERO,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.t_load.is_zero() {
            return Err(SimError::InvalidCost("t_load_us must be positive".into()));
        }
        if self.t_compute.is_zero() {
            return Err(SimError::InvalidCost("t_compute_us must be positive".into()));
        }
        Ok(())
    }

    /// Latency of one (step, layer) that routed `routed` experts of which
    /// `misses` had to be loaded. Computation overlaps loading, so a step
    /// with misses is bound by the loads alone.
    pub fn step_latency(&self, routed: usize, misses: usize) -> Duration {
        if misses == 0 {
            self.t_compute * routed as u32
        } else if self.loads_serial {
            self.t_load * misses as u32
        } else {
            self.t_load
        }
    }
}
