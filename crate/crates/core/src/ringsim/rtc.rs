use serde::{Deserialize, Serialize};

use crate::types::SIM_EPOCH_UNIX_US;

/// Device real-time clock: `device(t) = host(t) + offset + drift_ppm * 1e-6 * (t - t0)`
/// where `host(t)` is the exact UNIX time at virtual instant `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RtcState {
    pub offset_us: i64,
    pub drift_ppm: f64,
    /// Virtual instant `t0` at which `offset_us` was last set.
    #[serde(default)]
    pub reference_us: u64,
}

impl RtcState {
    pub fn new(offset_us: i64, drift_ppm: f64) -> Self {
        RtcState { offset_us, drift_ppm, reference_us: 0 }
    }

    /// Device epoch in microseconds at virtual instant `t_us`.
    pub fn read(&self, t_us: u64) -> u64 {
        let elapsed = t_us as f64 - self.reference_us as f64;
        let drift = (self.drift_ppm * 1e-6 * elapsed).round() as i64;
        (SIM_EPOCH_UNIX_US as i64 + t_us as i64 + self.offset_us + drift) as u64
    }

    /// Error of the device clock versus the host at `t_us`.
    pub fn error_us(&self, t_us: u64) -> i64 {
        self.read(t_us) as i64 - (SIM_EPOCH_UNIX_US + t_us) as i64
    }

    /// Set the clock so that it reads `epoch_us` at `t_us`.
    pub fn trim(&mut self, t_us: u64, epoch_us: u64) {
        self.reference_us = t_us;
        self.offset_us = epoch_us as i64 - (SIM_EPOCH_UNIX_US + t_us) as i64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_without_error() {
        let r = RtcState::default();
        assert_eq!(r.read(123_456_789), SIM_EPOCH_UNIX_US + 123_456_789);
    }

    #[test]
    fn offset_leads() {
        let r = RtcState::new(5_000_000, 0.0);
        assert_eq!(r.read(42) - (SIM_EPOCH_UNIX_US + 42), 5_000_000);
    }

    #[test]
    fn drift_accumulates_linearly() {
        // 20 ppm of 1000 s = 20 ms.
        let r = RtcState::new(0, 20.0);
        assert_eq!(r.error_us(1_000_000_000), 20_000);
        assert_eq!(r.error_us(0), 0);
    }

    #[test]
    fn trim_sets_reading_at_instant() {
        let mut r = RtcState::new(-7_000_000, 50.0);
        let t = 3_600_000_000;
        let target = SIM_EPOCH_UNIX_US + t + 1_234;
        r.trim(t, target);
        assert_eq!(r.read(t), target);
        // Drift restarts from the trim instant: 50 ppm of 10 s = 500 us.
        assert_eq!(r.read(t + 10_000_000), target + 10_000_000 + 500);
    }
}
