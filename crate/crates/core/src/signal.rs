//! Waveform containers and the preprocessing chain applied before any model
//! or baseline sees the data: min-max normalization, resampling onto a common
//! rate, fixed-window segmentation and repeat-padding of short records.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Direction;

/// Sampling rate every evaluation dataset is brought to.
pub const TARGET_FS: f64 = 40.0;

/// Segment length short records are repeat-padded to.
pub const TARGET_SEGMENT_S: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("signal has no samples")]
    EmptySignal,
    #[error("sampling rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("{len} samples cannot be split into {channels} equal channels")]
    ChannelLayout { len: usize, channels: usize },
    #[error("channel {index} requested but signal has {count} channel(s)")]
    ChannelOutOfRange { index: usize, count: usize },
    #[error("window must be positive and finite, got {0} s")]
    InvalidWindow(f64),
    #[error("target length {target} samples is shorter than input length {input}")]
    TargetShorterThanInput { target: usize, input: usize },
    #[error("segment holds {actual} samples but duration {duration_s} s at {fs} Hz implies {expected}")]
    LengthMismatch {
        actual: usize,
        expected: usize,
        duration_s: f64,
        fs: f64,
    },
}

fn check_rate(fs: f64) -> Result<(), SignalError> {
    if fs.is_finite() && fs > 0.0 {
        Ok(())
    } else {
        Err(SignalError::InvalidRate(fs))
    }
}

/// A sampled recording. Multi-channel data is stored channel-major: all of
/// channel 0, then all of channel 1, and so on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    samples: Vec<f64>,
    fs: f64,
    channel_count: usize,
    pub subject_id: String,
    pub start_time: f64,
}

impl Signal {
    pub fn new(
        samples: Vec<f64>,
        fs: f64,
        subject_id: impl Into<String>,
        start_time: f64,
    ) -> Result<Self, SignalError> {
        Self::with_channels(samples, fs, 1, subject_id, start_time)
    }

    pub fn with_channels(
        samples: Vec<f64>,
        fs: f64,
        channel_count: usize,
        subject_id: impl Into<String>,
        start_time: f64,
    ) -> Result<Self, SignalError> {
        check_rate(fs)?;
        if samples.is_empty() {
            return Err(SignalError::EmptySignal);
        }
        if channel_count == 0 || samples.len() % channel_count != 0 {
            return Err(SignalError::ChannelLayout {
                len: samples.len(),
                channels: channel_count,
            });
        }
        Ok(Self {
            samples,
            fs,
            channel_count,
            subject_id: subject_id.into(),
            start_time,
        })
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.samples.len() / self.channel_count
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration_s()
    }

    /// Samples of channel `index` (zero-based).
    pub fn channel_samples(&self, index: usize) -> Result<&[f64], SignalError> {
        if index >= self.channel_count {
            return Err(SignalError::ChannelOutOfRange {
                index,
                count: self.channel_count,
            });
        }
        let n = self.len();
        Ok(&self.samples[index * n..(index + 1) * n])
    }

    /// All samples, channel-major.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Single-channel copy of channel `index` (zero-based).
    pub fn channel(&self, index: usize) -> Result<Signal, SignalError> {
        let samples = self.channel_samples(index)?.to_vec();
        Ok(Signal {
            samples,
            fs: self.fs,
            channel_count: 1,
            subject_id: self.subject_id.clone(),
            start_time: self.start_time,
        })
    }
}

/// A fixed-length window cut from a [`Signal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    samples: Vec<f64>,
    fs: f64,
    duration_s: f64,
    pub subject_id: String,
    pub start_time: f64,
}

impl Segment {
    pub fn new(
        samples: Vec<f64>,
        fs: f64,
        duration_s: f64,
        subject_id: impl Into<String>,
        start_time: f64,
    ) -> Result<Self, SignalError> {
        check_rate(fs)?;
        if samples.is_empty() {
            return Err(SignalError::EmptySignal);
        }
        let expected = (duration_s * fs).round();
        if !expected.is_finite() || expected < 0.0 || expected as usize != samples.len() {
            return Err(SignalError::LengthMismatch {
                actual: samples.len(),
                expected: expected.max(0.0) as usize,
                duration_s,
                fs,
            });
        }
        Ok(Self {
            samples,
            fs,
            duration_s,
            subject_id: subject_id.into(),
            start_time,
        })
    }

    /// Builds a segment whose duration is implied by the sample count.
    pub fn from_samples(
        samples: Vec<f64>,
        fs: f64,
        subject_id: impl Into<String>,
        start_time: f64,
    ) -> Result<Self, SignalError> {
        let duration_s = samples.len() as f64 / fs;
        Self::new(samples, fs, duration_s, subject_id, start_time)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration_s
    }
}

/// Physical unit attached to a real-valued label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum Unit {
    Bpm,
    Brpm,
    MeqPerL,
    MgPerDl,
    MmolPerL,
    NgPerMl,
    Percent,
    MmHg,
    Ms,
    Grams,
    Celsius,
    Other(String),
}

impl Unit {
    pub fn as_str(&self) -> &str {
        match self {
            Unit::Bpm => "bpm",
            Unit::Brpm => "brpm",
            Unit::MeqPerL => "mEq/L",
            Unit::MgPerDl => "mg/dL",
            Unit::MmolPerL => "mmol/L",
            Unit::NgPerMl => "ng/mL",
            Unit::Percent => "%",
            Unit::MmHg => "mmHg",
            Unit::Ms => "ms",
            Unit::Grams => "g",
            Unit::Celsius => "°C",
            Unit::Other(s) => s,
        }
    }
}

impl From<String> for Unit {
    fn from(s: String) -> Self {
        match s.as_str() {
            "bpm" => Unit::Bpm,
            "brpm" => Unit::Brpm,
            "mEq/L" | "meq/l" => Unit::MeqPerL,
            "mg/dL" | "mg/dl" => Unit::MgPerDl,
            "mmol/L" | "mmol/l" => Unit::MmolPerL,
            "ng/mL" | "ng/ml" => Unit::NgPerMl,
            "%" => Unit::Percent,
            "mmHg" | "mmhg" => Unit::MmHg,
            "ms" => Unit::Ms,
            "g" => Unit::Grams,
            "°C" | "C" | "degC" => Unit::Celsius,
            _ => Unit::Other(s),
        }
    }
}

impl From<Unit> for String {
    fn from(u: Unit) -> Self {
        u.as_str().to_string()
    }
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Class(usize),
    Real { value: f64, unit: Unit },
}

impl Label {
    pub fn as_f64(&self) -> f64 {
        match self {
            Label::Class(c) => *c as f64,
            Label::Real { value, .. } => *value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSegment {
    pub segment: Segment,
    pub label: Label,
    pub task_id: String,
    pub direction: Direction,
}

/// Scales a segment into `[0, 1]`. A constant segment maps to all zeros.
pub fn minmax_normalize(segment: &Segment) -> Segment {
    let (lo, hi) = segment
        .samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let range = hi - lo;
    let samples = if range > 0.0 {
        segment.samples.iter().map(|&x| (x - lo) / range).collect()
    } else {
        vec![0.0; segment.samples.len()]
    };
    Segment {
        samples,
        ..segment.clone()
    }
}

/// Linear-interpolation resampler. Output sample `i` sits at time
/// `i / target_fs` on the input time grid; positions past the last input
/// sample hold the final value.
pub fn resample(signal: &Signal, target_fs: f64) -> Result<Signal, SignalError> {
    check_rate(target_fs)?;
    if signal.is_empty() {
        return Err(SignalError::EmptySignal);
    }
    if target_fs == signal.fs {
        return Ok(signal.clone());
    }
    let n_in = signal.len();
    let n_out = ((n_in as f64) * target_fs / signal.fs).round() as usize;
    if n_out == 0 {
        return Err(SignalError::EmptySignal);
    }
    let step = signal.fs / target_fs;
    let mut out = Vec::with_capacity(n_out * signal.channel_count);
    for ch in 0..signal.channel_count {
        let x = signal.channel_samples(ch)?;
        out.extend((0..n_out).map(|i| interp(x, i as f64 * step)));
    }
    Ok(Signal {
        samples: out,
        fs: target_fs,
        channel_count: signal.channel_count,
        subject_id: signal.subject_id.clone(),
        start_time: signal.start_time,
    })
}

fn interp(x: &[f64], pos: f64) -> f64 {
    let last = x.len() - 1;
    if pos >= last as f64 {
        return x[last];
    }
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if frac == 0.0 {
        x[i]
    } else {
        x[i] + (x[i + 1] - x[i]) * frac
    }
}

/// Cuts consecutive non-overlapping windows from the first channel. A
/// trailing remainder shorter than the window is dropped.
pub fn segment(signal: &Signal, window_s: f64) -> Result<Vec<Segment>, SignalError> {
    if !(window_s.is_finite() && window_s > 0.0) {
        return Err(SignalError::InvalidWindow(window_s));
    }
    let width = (window_s * signal.fs).round() as usize;
    if width == 0 {
        return Err(SignalError::InvalidWindow(window_s));
    }
    let x = signal.channel_samples(0)?;
    let duration = width as f64 / signal.fs;
    Ok(x.chunks_exact(width)
        .enumerate()
        .map(|(k, chunk)| Segment {
            samples: chunk.to_vec(),
            fs: signal.fs,
            duration_s: duration,
            subject_id: signal.subject_id.clone(),
            start_time: signal.start_time + (k * width) as f64 / signal.fs,
        })
        .collect())
}

/// Tiles the segment end-to-end until it spans `target_s`, truncating the
/// last copy.
pub fn repeat_pad(segment: &Segment, target_s: f64) -> Result<Segment, SignalError> {
    if segment.is_empty() {
        return Err(SignalError::EmptySignal);
    }
    let target = (target_s * segment.fs).round();
    let input = segment.len();
    if !target.is_finite() || target < input as f64 {
        return Err(SignalError::TargetShorterThanInput {
            target: target.max(0.0) as usize,
            input,
        });
    }
    let target = target as usize;
    let samples: Vec<f64> = segment.samples.iter().copied().cycle().take(target).collect();
    Ok(Segment {
        samples,
        fs: segment.fs,
        duration_s: target_s,
        subject_id: segment.subject_id.clone(),
        start_time: segment.start_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(x: &[f64], fs: f64) -> Segment {
        Segment::from_samples(x.to_vec(), fs, "s1", 0.0).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(minmax_normalize(&seg(&[2.0, 4.0, 6.0], 1.0)).samples(), &[0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&seg(&[5.0, 5.0, 5.0], 1.0)).samples(), &[0.0, 0.0, 0.0]);
        assert_eq!(minmax_normalize(&seg(&[0.0, 0.25, 1.0], 1.0)).samples(), &[0.0, 0.25, 1.0]);
    }

    #[test]
    fn resample_sine_against_closed_form() {
        let fs = 80.0;
        let x: Vec<f64> = (0..160)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / fs).sin())
            .collect();
        let s = Signal::new(x, fs, "s", 0.0).unwrap();
        let r = resample(&s, 40.0).unwrap();
        assert_eq!(r.len(), 80);
        assert_eq!(r.fs(), 40.0);
        let dev = r
            .samples()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - (2.0 * std::f64::consts::PI * i as f64 / 40.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-3, "max deviation {dev}");
    }

    #[test]
    fn resample_off_grid_sine() {
        // 125 Hz -> 40 Hz puts most output samples between input samples.
        let fs = 125.0;
        let x: Vec<f64> = (0..250)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / fs).sin())
            .collect();
        let r = resample(&Signal::new(x, fs, "s", 0.0).unwrap(), 40.0).unwrap();
        assert_eq!(r.len(), 80);
        let dev = r
            .samples()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - (2.0 * std::f64::consts::PI * i as f64 / 40.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-3, "max deviation {dev}");
    }

    #[test]
    fn resample_identity_and_length() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).cos()).collect();
        let s = Signal::new(x.clone(), 40.0, "s", 0.0).unwrap();
        assert_eq!(resample(&s, 40.0).unwrap().samples(), x.as_slice());

        let bp = Signal::new(vec![0.0; 2100], 1000.0, "s", 0.0).unwrap();
        assert_eq!(resample(&bp, 40.0).unwrap().len(), 84);
    }

    #[test]
    fn resample_multichannel_keeps_layout() {
        let mut x = vec![1.0; 50];
        x.extend(vec![2.0; 50]);
        let s = Signal::with_channels(x, 100.0, 2, "s", 0.0).unwrap();
        let r = resample(&s, 40.0).unwrap();
        assert_eq!(r.len(), 20);
        assert!(r.channel_samples(0).unwrap().iter().all(|&v| v == 1.0));
        assert!(r.channel_samples(1).unwrap().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn segmentation_examples() {
        let s = Signal::new(vec![0.0; 2400], 40.0, "s", 10.0).unwrap();
        let segs = segment(&s, 30.0).unwrap();
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|g| g.len() == 1200));
        assert_eq!(segs[1].start_time, 40.0);
        assert_eq!(segs[1].subject_id, "s");

        let s = Signal::new(vec![0.0; 59 * 40], 40.0, "s", 0.0).unwrap();
        assert_eq!(segment(&s, 30.0).unwrap().len(), 1);
        let s = Signal::new(vec![0.0; 29 * 40], 40.0, "s", 0.0).unwrap();
        assert!(segment(&s, 30.0).unwrap().is_empty());
        assert_eq!(segment(&s, 0.0), Err(SignalError::InvalidWindow(0.0)));
    }

    #[test]
    fn repeat_pad_examples() {
        let x: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let p = repeat_pad(&seg(&x, 40.0), 30.0).unwrap();
        assert_eq!(p.len(), 1200);
        for k in 0..3 {
            assert_eq!(&p.samples()[k * 400..(k + 1) * 400], x.as_slice());
        }

        let full: Vec<f64> = (0..1200).map(|i| i as f64).collect();
        assert_eq!(repeat_pad(&seg(&full, 40.0), 30.0).unwrap().samples(), full.as_slice());

        let x: Vec<f64> = (0..480).map(|i| i as f64).collect();
        let p = repeat_pad(&seg(&x, 40.0), 30.0).unwrap();
        assert_eq!(p.len(), 1200);
        assert_eq!(&p.samples()[960..], &x[..240]);

        assert!(matches!(
            repeat_pad(&seg(&full, 40.0), 10.0),
            Err(SignalError::TargetShorterThanInput { .. })
        ));
    }

    #[test]
    fn segment_length_is_validated() {
        assert!(matches!(
            Segment::new(vec![0.0; 10], 40.0, 30.0, "s", 0.0),
            Err(SignalError::LengthMismatch { .. })
        ));
        assert_eq!(
            Signal::with_channels(vec![0.0; 5], 40.0, 2, "s", 0.0),
            Err(SignalError::ChannelLayout { len: 5, channels: 2 })
        );
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(x in prop::collection::vec(-1e3f64..1e3, 2..64)) {
            let once = minmax_normalize(&seg(&x, 40.0));
            let twice = minmax_normalize(&once);
            for (a, b) in once.samples().iter().zip(twice.samples()) {
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(a));
            }
        }

        #[test]
        fn resample_preserves_duration(n in 1usize..500, fs in 1.0f64..1000.0, target in 1.0f64..200.0) {
            let s = Signal::new(vec![0.5; n], fs, "s", 0.0).unwrap();
            if let Ok(r) = resample(&s, target) {
                prop_assert!((r.duration_s() - s.duration_s()).abs() <= 0.5 / target + 1e-12);
            }
        }

        #[test]
        fn segments_concatenate_to_prefix(x in prop::collection::vec(-10f64..10.0, 1..300), w in 1usize..50) {
            let s = Signal::new(x.clone(), 10.0, "s", 0.0).unwrap();
            let joined: Vec<f64> = segment(&s, w as f64 / 10.0).unwrap().into_iter().flat_map(|g| g.into_samples()).collect();
            prop_assert_eq!(&x[..joined.len()], joined.as_slice());
        }

        #[test]
        fn repeat_pad_keeps_input_prefix(x in prop::collection::vec(-10f64..10.0, 1..100), extra in 0usize..300) {
            let g = seg(&x, 10.0);
            let p = repeat_pad(&g, (x.len() + extra) as f64 / 10.0).unwrap();
            prop_assert_eq!(p.len(), x.len() + extra);
            prop_assert_eq!(&p.samples()[..x.len()], x.as_slice());
        }
    }
}
