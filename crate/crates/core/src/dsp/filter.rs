//! Butterworth sections applied forward and backward for zero phase.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Passband edges of the PPG band-pass: 30 to 240 BPM.
pub const PPG_LOW_HZ: f64 = 0.5;
pub const PPG_HIGH_HZ: f64 = 4.0;

/// Direct-form II transposed biquad, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Second-order Butterworth low-pass via the bilinear transform.
    pub fn lowpass(fc: f64, fs: f64) -> Self {
        let w = 2.0 * PI * fc / fs;
        let alpha = w.sin() / (2.0 * FRAC_1_SQRT_2);
        let c = w.cos();
        let a0 = 1.0 + alpha;
        let b1 = (1.0 - c) / a0;
        Biquad { b: [b1 / 2.0, b1, b1 / 2.0], a: [-2.0 * c / a0, (1.0 - alpha) / a0] }
    }

    /// Second-order Butterworth high-pass via the bilinear transform.
    pub fn highpass(fc: f64, fs: f64) -> Self {
        let w = 2.0 * PI * fc / fs;
        let alpha = w.sin() / (2.0 * FRAC_1_SQRT_2);
        let c = w.cos();
        let a0 = 1.0 + alpha;
        let b0 = (1.0 + c) / 2.0 / a0;
        Biquad { b: [b0, -2.0 * b0, b0], a: [-2.0 * c / a0, (1.0 - alpha) / a0] }
    }

    /// Gain at DC.
    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1])
    }

    /// State that makes a constant input `x0` produce its steady-state output.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let y = self.dc_gain() * x0;
        let z2 = self.b[2] * x0 - self.a[1] * y;
        let z1 = self.b[1] * x0 - self.a[0] * y + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let [mut z1, mut z2] = self.steady_state(x0);
        for v in x.iter_mut() {
            let xi = *v;
            let y = self.b[0] * xi + z1;
            z1 = self.b[1] * xi - self.a[0] * y + z2;
            z2 = self.b[2] * xi - self.a[1] * y;
            *v = y;
        }
    }
}

/// Series of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade(pub Vec<Biquad>);

impl Cascade {
    /// High-pass at `lo` followed by low-pass at `hi`.
    pub fn band(lo: f64, hi: f64, fs: f64) -> Self {
        Cascade(vec![Biquad::highpass(lo, fs), Biquad::lowpass(hi, fs)])
    }

    /// One causal pass.
    pub fn filter(&self, x: &mut [f64]) {
        for s in &self.0 {
            s.run(x);
        }
    }

    /// Zero-phase forward-backward pass over an odd-reflected extension.
    pub fn filtfilt(&self, x: &[f64], pad: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = pad.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        self.filter(&mut ext);
        ext.reverse();
        self.filter(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// Zero-phase 0.5 to 4 Hz band-pass; output has the input's length.
pub fn bandpass(signal: &[f64], fs: f64) -> Vec<f64> {
    band(signal, fs, PPG_LOW_HZ, PPG_HIGH_HZ)
}

pub(crate) fn band(signal: &[f64], fs: f64, lo: f64, hi: f64) -> Vec<f64> {
    // Two seconds of padding covers the high-pass settling time.
    Cascade::band(lo, hi, fs).filtfilt(signal, (2.0 * fs) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn sine(f: f64, fs: f64, secs: f64) -> Vec<f64> {
        (0..(fs * secs) as usize).map(|i| (TAU * f * i as f64 / fs).sin()).collect()
    }

    /// Amplitude ratio over the steady middle of the record.
    fn gain(f: f64) -> f64 {
        let fs = 100.0;
        let x = sine(f, fs, 20.0);
        let y = bandpass(&x, fs);
        let mid = 500..1500;
        let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
        rms(&y[mid.clone()]) / rms(&x[mid])
    }

    #[test]
    fn frequency_response() {
        assert!(gain(1.25) >= 0.9, "{}", gain(1.25));
        assert!(gain(10.0) <= 0.1, "{}", gain(10.0));
    }

    #[test]
    fn analytic_magnitude_matches_measured() {
        // |H|^2 of the Butterworth prototypes, squared again for two passes.
        let h = |f: f64| {
            let hp = 1.0 / (1.0 + (PPG_LOW_HZ / f).powi(4));
            let lp = 1.0 / (1.0 + (f / PPG_HIGH_HZ).powi(4));
            hp * lp
        };
        for f in [0.8, 1.25, 2.0, 3.0] {
            // Bilinear warping is small this far below Nyquist.
            assert!((gain(f) - h(f)).abs() < 0.02, "{f}: {} vs {}", gain(f), h(f));
        }
    }

    #[test]
    fn dc_is_removed() {
        let y = bandpass(&vec![3.0e6; 800], 100.0);
        assert_eq!(y.len(), 800);
        assert!(y.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn zero_phase() {
        let fs = 100.0;
        let x = sine(1.5, fs, 20.0);
        let y = bandpass(&x, fs);
        let lag = (-10i32..=10)
            .max_by(|&a, &b| {
                let c = |l: i32| (600..1400).map(|i| x[i] * y[(i as i32 + l) as usize]).sum::<f64>();
                c(a).total_cmp(&c(b))
            })
            .unwrap();
        assert_eq!(lag, 0);
    }

    #[test]
    fn short_inputs() {
        assert!(bandpass(&[], 100.0).is_empty());
        assert_eq!(bandpass(&[1.0], 100.0).len(), 1);
    }

    proptest! {
        #[test]
        fn superposition(
            a in proptest::collection::vec(-1.0e3f64..1.0e3, 50..300),
            k in -10.0f64..10.0,
        ) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| (i as f64 * 0.37).sin() * 100.0 - v).collect();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| k * x + y).collect();
            let fa = bandpass(&a, 100.0);
            let fb = bandpass(&b, 100.0);
            let fs = bandpass(&sum, 100.0);
            let scale = fs.iter().chain(&fa).map(|v| v.abs()).fold(1.0, f64::max);
            for i in 0..a.len() {
                prop_assert!((fs[i] - (k * fa[i] + fb[i])).abs() <= 1e-9 * scale);
            }
        }

        #[test]
        fn time_invariance(shift in 1usize..50) {
            let fs = 100.0;
            let x: Vec<f64> = (0..4000).map(|i| (i as f64 * 0.07).sin() + (i as f64 * 0.013).cos()).collect();
            let y = bandpass(&x, fs);
            let ys = bandpass(&x[shift..], fs);
            // Edges differ through padding; compare the interior.
            for i in 1500..2500 {
                prop_assert!((ys[i] - y[i + shift]).abs() < 1e-6);
            }
        }
    }
}
