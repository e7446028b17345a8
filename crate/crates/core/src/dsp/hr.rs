use serde::{Deserialize, Serialize};

use super::filter::bandpass;

/// Analysis window for one estimate.
pub const HR_WINDOW_S: f64 = 8.0;
/// Minimum spacing between beats (240 BPM).
pub const REFRACTORY_S: f64 = 0.25;
/// Threshold multiplier on the rolling MAD.
pub const MAD_K: f64 = 1.0;
/// Span of the rolling median / MAD.
const ROLLING_S: f64 = 2.0;
/// Spacing of the grid the rolling statistics are evaluated on.
const ROLLING_HOP_S: f64 = 0.25;

pub const BPM_MIN: f64 = 30.0;
pub const BPM_MAX: f64 = 240.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakParams {
    pub k: f64,
    pub refractory_s: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        PeakParams { k: MAD_K, refractory_s: REFRACTORY_S }
    }
}

/// Heart rate over one window; `bpm` is `None` when withheld.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrEstimate {
    pub window_start_us: u64,
    pub window_end_us: u64,
    pub bpm: Option<f64>,
    pub confidence: f64,
}

impl HrEstimate {
    pub fn midpoint_us(&self) -> u64 {
        self.window_start_us + (self.window_end_us - self.window_start_us) / 2
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median and median absolute deviation.
fn median_mad(x: &[f64]) -> (f64, f64) {
    let mut v = x.to_vec();
    let m = median(&mut v);
    for a in &mut v {
        *a = (*a - m).abs();
    }
    (m, median(&mut v))
}

/// Per-sample threshold `median + k * MAD` over a centred 2 s span,
/// evaluated every 0.25 s and held in between.
fn rolling_threshold(x: &[f64], fs: f64, k: f64) -> Vec<f64> {
    let n = x.len();
    let hop = ((ROLLING_HOP_S * fs).round() as usize).max(1);
    let half = ((ROLLING_S * fs / 2.0).round() as usize).max(1);
    let mut out = vec![0.0; n];
    let mut c = 0;
    while c < n {
        let lo = c.saturating_sub(half);
        let hi = (c + half).min(n);
        let (m, mad) = median_mad(&x[lo..hi]);
        let t = m + k * mad;
        let from = c.saturating_sub(hop / 2);
        let to = (c + hop - hop / 2).min(n);
        out[from..to].iter_mut().for_each(|v| *v = t);
        c += hop;
    }
    out
}

/// Local maxima above the adaptive threshold, at least one refractory period
/// apart; inside a refractory period the taller peak wins.
pub fn detect_peaks(filtered: &[f64], fs: f64) -> Vec<usize> {
    detect_peaks_with(filtered, fs, PeakParams::default())
}

pub fn detect_peaks_with(x: &[f64], fs: f64, p: PeakParams) -> Vec<usize> {
    if x.len() < 3 {
        return Vec::new();
    }
    let thr = rolling_threshold(x, fs, p.k);
    let refractory = (p.refractory_s * fs).round() as usize;
    let mut peaks: Vec<usize> = Vec::new();
    for i in 1..x.len() - 1 {
        if !(x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] > thr[i]) {
            continue;
        }
        match peaks.last_mut() {
            Some(last) if i - *last < refractory => {
                if x[i] > x[*last] {
                    *last = i;
                }
            }
            _ => peaks.push(i),
        }
    }
    peaks
}

/// Sub-sample peak position from a parabola through three samples.
fn refine(x: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= x.len() {
        return i as f64;
    }
    let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom.abs() < f64::EPSILON {
        return i as f64;
    }
    i as f64 + 0.5 * (a - c) / denom
}

/// Heart rate from one raw PPG window starting at `window_start_us`.
pub fn estimate_hr(window: &[f64], fs: f64, window_start_us: u64) -> HrEstimate {
    let window_end_us = window_start_us + (window.len() as f64 / fs * 1e6).round() as u64;
    let withheld = HrEstimate { window_start_us, window_end_us, bpm: None, confidence: 0.0 };
    let y = bandpass(window, fs);
    let peaks = detect_peaks(&y, fs);
    if peaks.len() < 3 {
        return withheld;
    }
    let pos: Vec<f64> = peaks.iter().map(|&i| refine(&y, i)).collect();
    let intervals: Vec<f64> = pos.windows(2).map(|w| (w[1] - w[0]) / fs).collect();
    let (med, mad) = median_mad(&intervals);
    let bpm = 60.0 / med;
    if !(BPM_MIN..=BPM_MAX).contains(&bpm) {
        return withheld;
    }
    HrEstimate {
        window_start_us,
        window_end_us,
        bpm: Some(bpm),
        confidence: (1.0 - mad / med).clamp(0.0, 1.0),
    }
}
