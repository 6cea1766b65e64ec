use serde::{Deserialize, Serialize};

use super::{median, spectral::moving_average, BaselineError};
use crate::signal::Segment;

/// Envelope detector constants. The defaults admit roughly 40 to 200 bpm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatConfig {
    pub envelope_window_s: f64,
    pub threshold_frac: f64,
    pub refractory_s: f64,
    /// Half-width of the search used to move an envelope peak onto the
    /// signal maximum.
    pub refine_s: f64,
}

impl Default for BeatConfig {
    fn default() -> Self {
        Self {
            envelope_window_s: 0.25,
            threshold_frac: 0.3,
            refractory_s: 0.3,
            refine_s: 0.15,
        }
    }
}

/// Systolic peaks plus the troughs between consecutive peaks, so
/// `peaks[i] < feet[i] < peaks[i + 1]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BeatSet {
    pub peak_indices: Vec<usize>,
    pub foot_indices: Vec<usize>,
}

impl BeatSet {
    pub fn len(&self) -> usize {
        self.peak_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peak_indices.is_empty()
    }
}

pub fn detect_beats(segment: &Segment) -> BeatSet {
    detect_beats_with(segment.samples(), segment.fs(), &BeatConfig::default())
}

/// Peaks of a smoothed derivative-squared envelope, refined to the signal
/// maximum nearby. Feet are signal minima between consecutive peaks.
pub fn detect_beats_with(x: &[f64], fs: f64, cfg: &BeatConfig) -> BeatSet {
    if x.len() < 3 {
        return BeatSet::default();
    }
    let sq: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]).powi(2)).collect();
    let win = ((cfg.envelope_window_s * fs).round() as usize).max(1);
    let env = moving_average(&sq, win);
    let max = env.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return BeatSet::default();
    }
    let thr = cfg.threshold_frac * max;
    // At least two samples so every pair of peaks has an interior foot.
    let refractory = ((cfg.refractory_s * fs).round() as usize).max(2);

    // Envelope maxima above threshold; within the refractory period the
    // larger one wins.
    let mut cand: Vec<usize> = Vec::new();
    for i in 0..env.len() {
        let left = if i == 0 { f64::NEG_INFINITY } else { env[i - 1] };
        let right = env.get(i + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if env[i] < thr || env[i] < left || env[i] <= right {
            continue;
        }
        match cand.last() {
            Some(&last) if i - last < refractory => {
                if env[i] > env[last] {
                    *cand.last_mut().unwrap() = i;
                }
            }
            _ => cand.push(i),
        }
    }

    let reach = ((cfg.refine_s.min(cfg.refractory_s / 2.0) * fs).round() as usize).max(1);
    let mut peaks: Vec<usize> = cand
        .into_iter()
        .map(|c| {
            let lo = c.saturating_sub(reach);
            let hi = (c + reach + 1).min(x.len());
            argmax(&x[lo..hi]) + lo
        })
        .collect();
    peaks.dedup();
    // Refinement can pull neighbours together; enforce strict ordering and
    // the refractory gap again.
    let mut kept: Vec<usize> = Vec::with_capacity(peaks.len());
    for p in peaks {
        match kept.last() {
            Some(&last) if p <= last || p - last < refractory => {
                if x[p] > x[last] && p > last {
                    *kept.last_mut().unwrap() = p;
                }
            }
            _ => kept.push(p),
        }
    }
    let feet = kept
        .windows(2)
        .map(|w| argmin(&x[w[0] + 1..w[1]]) + w[0] + 1)
        .collect();
    BeatSet {
        peak_indices: kept,
        foot_indices: feet,
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Heart rate as 60 / median inter-peak interval.
pub fn hr_ibi(segment: &Segment) -> Result<f64, BaselineError> {
    let beats = detect_beats(segment);
    hr_from_peaks(&beats.peak_indices, segment.fs())
}

pub(crate) fn hr_from_peaks(peaks: &[usize], fs: f64) -> Result<f64, BaselineError> {
    if peaks.len() < 2 {
        return Err(BaselineError::NoBeats {
            needed: 2,
            found: peaks.len(),
        });
    }
    let ibi: Vec<f64> = peaks
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / fs)
        .collect();
    Ok(60.0 / median(&ibi))
}
