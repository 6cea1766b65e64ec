use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::signal::Segment;

/// Centered moving average. Near the edges the window shrinks to the
/// samples available, so the output has the input's length.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 || window <= 1 {
        return x.to_vec();
    }
    let before = (window - 1) / 2;
    let after = window - 1 - before;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub seg_len: usize,
    pub overlap: f64,
    /// FFT length; `None` uses `seg_len`. Larger values interpolate the
    /// spectrum without changing its true resolution.
    pub nfft: Option<usize>,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            seg_len: 512,
            overlap: 0.5,
            nfft: None,
        }
    }
}

/// One-sided power spectral density in units²/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub resolution: f64,
}

impl Spectrum {
    /// Bin with the largest power among frequencies in `[lo, hi]`.
    pub fn argmax_in(&self, lo: f64, hi: f64) -> Option<usize> {
        self.freqs
            .iter()
            .enumerate()
            .filter(|(_, f)| **f >= lo && **f <= hi)
            .max_by(|a, b| self.power[a.0].total_cmp(&self.power[b.0]))
            .map(|(i, _)| i)
    }

    /// Integral of the density over all bins.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution
    }
}

fn hann(n: usize) -> Vec<f64> {
    // Periodic form, the usual choice for spectral estimation.
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate with a Hann window. Each segment's mean is removed before
/// windowing and its power is booked to the 0 Hz bin as `mean² / resolution`,
/// so a constant offset changes bin 0 only and the density still integrates
/// to the mean square of the input.
pub fn welch_psd(x: &[f64], fs: f64, cfg: &WelchConfig) -> Result<Spectrum, BaselineError> {
    let seg = cfg.seg_len;
    if seg < 2 {
        return Err(BaselineError::InvalidConfig(format!("seg_len {seg} < 2")));
    }
    if !(0.0..1.0).contains(&cfg.overlap) {
        return Err(BaselineError::InvalidConfig(format!(
            "overlap {} outside [0, 1)",
            cfg.overlap
        )));
    }
    let nfft = cfg.nfft.unwrap_or(seg);
    if nfft < seg {
        return Err(BaselineError::InvalidConfig(format!(
            "nfft {nfft} shorter than seg_len {seg}"
        )));
    }
    if x.len() < seg {
        return Err(BaselineError::SignalTooShort {
            needed: seg,
            got: x.len(),
        });
    }
    let step = (seg - (cfg.overlap * seg as f64).round() as usize).max(1);
    let window = hann(seg);
    let w_energy: f64 = window.iter().map(|w| w * w).sum();
    let resolution = fs / nfft as f64;
    let n_bins = nfft / 2 + 1;
    let fft = FftPlanner::new().plan_fft_forward(nfft);

    let mut acc = vec![0.0; n_bins];
    let mut count = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut start = 0;
    while start + seg <= x.len() {
        let chunk = &x[start..start + seg];
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        for (i, b) in buf.iter_mut().enumerate() {
            let v = if i < seg { (chunk[i] - mean) * window[i] } else { 0.0 };
            *b = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate().skip(1) {
            let one_sided = if 2 * k == nfft { 1.0 } else { 2.0 };
            *a += one_sided * buf[k].norm_sqr() / (fs * w_energy);
        }
        acc[0] += mean * mean / resolution;
        count += 1;
        start += step;
    }
    let power = acc.into_iter().map(|a| a / count as f64).collect();
    Ok(Spectrum {
        freqs: (0..n_bins).map(|k| k as f64 * resolution).collect(),
        power,
        resolution,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrConfig {
    pub trend_window_s: f64,
    pub band_hz: (f64, f64),
    pub welch: WelchConfig,
    /// The estimate is flagged when its peak is this many times weaker than
    /// the strongest non-DC component outside the band.
    pub confidence_ratio: f64,
}

impl Default for RrConfig {
    fn default() -> Self {
        Self {
            trend_window_s: 2.0,
            band_hz: (0.1, 0.5),
            // 512-sample segments give 0.078 Hz bins, i.e. 4.7 brpm steps;
            // zero-padding to 4096 places the argmax between those bins.
            welch: WelchConfig {
                nfft: Some(4096),
                ..WelchConfig::default()
            },
            confidence_ratio: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrEstimate {
    pub brpm: f64,
    pub low_confidence: bool,
}

pub fn rr_baseline_wander(segment: &Segment) -> Result<RrEstimate, BaselineError> {
    rr_baseline_wander_with(segment.samples(), segment.fs(), &RrConfig::default())
}

/// Respiration rate from the dominant in-band frequency of the low-passed
/// baseline.
pub fn rr_baseline_wander_with(
    x: &[f64],
    fs: f64,
    cfg: &RrConfig,
) -> Result<RrEstimate, BaselineError> {
    let win = ((cfg.trend_window_s * fs).round() as usize).max(1);
    let trend = moving_average(x, win);
    let spec = welch_psd(&trend, fs, &cfg.welch)?;
    let (lo, hi) = cfg.band_hz;
    let peak = spec.argmax_in(lo, hi).ok_or_else(|| {
        BaselineError::InvalidConfig(format!("no spectral bin inside [{lo}, {hi}] Hz"))
    })?;
    let outside = spec
        .freqs
        .iter()
        .zip(&spec.power)
        .skip(1)
        .filter(|(f, _)| **f < lo || **f > hi)
        .map(|(_, p)| *p)
        .fold(0.0, f64::max);
    let in_band = spec.power[peak];
    Ok(RrEstimate {
        brpm: 60.0 * spec.freqs[peak],
        low_confidence: !(in_band > 0.0) || in_band * cfg.confidence_ratio < outside,
    })
}
