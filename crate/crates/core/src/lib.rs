//! Benchmarking toolkit for physiological time-series models.
//!
//! The crate is organised around the evaluation pipeline:
//!
//! * [`signal`]: waveform types and preprocessing (normalize, resample,
//!   segment, repeat-pad).
//! * [`synth`]: deterministic synthetic PPG with known heart rate,
//!   respiration rate and beat times.
//! * [`dataset`]: JSONL/CSV ingestion, vitals and lab label alignment,
//!   participant-level split protocols.
//! * [`baselines`]: beat detection, IBI heart rate, baseline-wander
//!   respiration rate, pulse morphology, ridge regression and LOCF.
//! * [`model`]: toy patch transformers (causal next-patch and masked
//!   reconstruction) with hand-written gradients.
//! * [`eval`]: task metrics and the seven-dimension model comparison.

use serde::{Deserialize, Serialize};

pub mod baselines;
pub mod dataset;
pub mod eval;
pub mod model;
pub mod signal;
pub mod synth;

/// Whether larger or smaller values of a metric are better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[serde(alias = "higher-better")]
    Higher,
    #[serde(alias = "lower-better")]
    Lower,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Higher => "higher",
            Direction::Lower => "lower",
        }
    }

    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Higher => a > b,
            Direction::Lower => a < b,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "higher" | "higher-better" | "up" => Ok(Direction::Higher),
            "lower" | "lower-better" | "down" => Ok(Direction::Lower),
            other => Err(format!("unknown direction '{other}'")),
        }
    }
}
