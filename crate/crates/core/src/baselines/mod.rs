//! Statistical and traditional baselines: derivative-envelope beat detection,
//! IBI heart rate, baseline-wander respiration rate from a Welch spectrum,
//! pulse morphology features, ridge regression and last-observation-carried-
//! forward for labs.

mod beats;
mod locf;
mod morphology;
mod ridge;
mod spectral;

use thiserror::Error;

pub use beats::{detect_beats, detect_beats_with, hr_ibi, BeatConfig, BeatSet};
pub use locf::{histories_by_subject, locf_predict, LabHistory};
pub use morphology::{beat_features, Aggregate, BeatMorphology, MorphFeatures, FEATURE_NAMES};
pub use ridge::{ridge_fit, RidgeModel, DEFAULT_LAMBDA};
pub use spectral::{
    moving_average, rr_baseline_wander, rr_baseline_wander_with, welch_psd, RrConfig, RrEstimate,
    Spectrum, WelchConfig,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("need at least {needed} beats, detected {found}")]
    NoBeats { needed: usize, found: usize },
    #[error("signal has {got} samples, need at least {needed}")]
    SignalTooShort { needed: usize, got: usize },
    #[error("normal equations are singular (lambda = {lambda})")]
    SingularSystem { lambda: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no observation strictly before t = {t}")]
    NoHistory { t: f64 },
    #[error("history times must be strictly increasing (index {index})")]
    UnsortedHistory { index: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Median of a non-empty slice; NaN for empty input.
pub(crate) fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile (the common "type 7" definition).
pub(crate) fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
