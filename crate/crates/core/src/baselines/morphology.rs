use serde::{Deserialize, Serialize};

use super::{beats::detect_beats_with, quantile, BeatConfig, BaselineError};
use crate::signal::Segment;

/// Feature order used by [`MorphFeatures::vector`].
pub const FEATURE_NAMES: [&str; 8] = [
    "amplitude",
    "rise_time_s",
    "fall_time_s",
    "max_upslope",
    "max_downslope",
    "area",
    "perfusion_index",
    "notch_ratio",
];

/// Raw features for one foot-to-foot beat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatMorphology {
    pub amplitude: f64,
    pub rise_time_s: f64,
    pub fall_time_s: f64,
    pub max_upslope: f64,
    /// Magnitude of the steepest descent, units/s.
    pub max_downslope: f64,
    pub area: f64,
    pub perfusion_index: Option<f64>,
    pub notch_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub median: f64,
    pub iqr: f64,
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    /// `None` when no value is present.
    pub fn of(values: &[f64]) -> Option<Aggregate> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Aggregate {
            median: quantile(values, 0.5),
            iqr: quantile(values, 0.75) - quantile(values, 0.25),
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphFeatures {
    pub beats: Vec<BeatMorphology>,
    /// One entry per name in [`FEATURE_NAMES`].
    pub aggregates: Vec<Option<Aggregate>>,
}

impl MorphFeatures {
    /// Flat `median, iqr, mean, std` per feature, followed by the fraction of
    /// beats with a detected notch. Absent aggregates contribute zeros.
    pub fn vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * FEATURE_NAMES.len() + 1);
        for a in &self.aggregates {
            match a {
                Some(a) => out.extend([a.median, a.iqr, a.mean, a.std]),
                None => out.extend([0.0; 4]),
            }
        }
        let notched = self.beats.iter().filter(|b| b.notch_ratio.is_some()).count();
        out.push(notched as f64 / self.beats.len().max(1) as f64);
        out
    }

    pub fn vector_names() -> Vec<String> {
        let mut names: Vec<String> = FEATURE_NAMES
            .iter()
            .flat_map(|f| ["median", "iqr", "mean", "std"].map(|s| format!("{f}_{s}")))
            .collect();
        names.push("notch_present_frac".to_string());
        names
    }
}

/// Per-beat morphology over foot, peak, next-foot triples, plus window
/// aggregates that skip missing values.
pub fn beat_features(segment: &Segment) -> Result<MorphFeatures, BaselineError> {
    let x = segment.samples();
    let fs = segment.fs();
    let set = detect_beats_with(x, fs, &BeatConfig::default());
    // A complete beat needs a foot on each side of its peak.
    if set.foot_indices.len() < 2 {
        return Err(BaselineError::NoBeats {
            needed: 3,
            found: set.len(),
        });
    }
    let dc = x.iter().sum::<f64>() / x.len() as f64;
    let d: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]) * fs).collect();

    let beats: Vec<BeatMorphology> = set
        .foot_indices
        .windows(2)
        .enumerate()
        .map(|(j, f)| {
            let (f0, f1) = (f[0], f[1]);
            let p = set.peak_indices[j + 1];
            let foot = x[f0];
            let amplitude = x[p] - foot;
            let area = x[f0..=f1]
                .windows(2)
                .map(|w| 0.5 * ((w[0] - foot).max(0.0) + (w[1] - foot).max(0.0)) / fs)
                .sum();
            BeatMorphology {
                amplitude,
                rise_time_s: (p - f0) as f64 / fs,
                fall_time_s: (f1 - p) as f64 / fs,
                max_upslope: d[f0..p].iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                max_downslope: -d[p..f1].iter().cloned().fold(f64::INFINITY, f64::min),
                area,
                perfusion_index: (dc > 0.0).then(|| amplitude / dc),
                notch_ratio: find_notch(&d, p, f1).map(|n| (n - f0) as f64 / (f1 - f0) as f64),
            }
        })
        .collect();

    let pick = |f: fn(&BeatMorphology) -> Option<f64>| -> Option<Aggregate> {
        let v: Vec<f64> = beats.iter().filter_map(f).collect();
        Aggregate::of(&v)
    };
    let aggregates = vec![
        pick(|b| Some(b.amplitude)),
        pick(|b| Some(b.rise_time_s)),
        pick(|b| Some(b.fall_time_s)),
        pick(|b| Some(b.max_upslope)),
        pick(|b| Some(b.max_downslope)),
        pick(|b| Some(b.area)),
        pick(|b| b.perfusion_index),
        pick(|b| b.notch_ratio),
    ];
    Ok(MorphFeatures { beats, aggregates })
}

/// Notch sample between a peak and the following foot, from the slope
/// sequence `d` (`d[i]` spans samples i and i+1).
///
/// After the systolic downstroke the slope rises back toward zero. A
/// dicrotic wave interrupts that recovery: the slope either turns
/// non-negative (a true local minimum of the signal) or peaks while still
/// negative and falls again (a shoulder). The first such turning point is
/// the notch. A shoulder must dip by `SHOULDER_PROMINENCE` of the steepest
/// slope afterwards so that slow baseline drift does not register. A pulse
/// without a reflected wave has neither and yields `None`.
fn find_notch(d: &[f64], peak: usize, next_foot: usize) -> Option<usize> {
    const SHOULDER_PROMINENCE: f64 = 0.05;
    let steepest = (peak..next_foot).min_by(|&a, &b| d[a].total_cmp(&d[b]))?;
    let min_dip = SHOULDER_PROMINENCE * -d[steepest];
    for i in steepest + 1..next_foot.saturating_sub(1) {
        if d[i - 1] < 0.0 && d[i] >= 0.0 {
            return Some(i);
        }
        if d[i] < 0.0 && d[i] > d[i - 1] && d[i] > d[i + 1] {
            let dip = d[i + 1..next_foot]
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if d[i] - dip >= min_dip {
                return Some(i + 1);
            }
        }
    }
    None
}
