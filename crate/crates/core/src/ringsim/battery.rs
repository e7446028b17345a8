//! Linear charge model. Charge is tracked in nA*us so that drain over any
//! interval is exact integer arithmetic and independent of step partition.

use serde::{Deserialize, Serialize};

use crate::types::{RingMode, SensorConfig, REFERENCE_LED_CODE};

/// Cell capacity in mAh.
pub const CAPACITY_MAH: f64 = 15.0;
/// 15 mAh expressed in nA*us.
pub const CAPACITY_NA_US: u64 = 15 * 1_000_000 * 3_600 * 1_000_000;

/// SoC, radio and flash idle draw.
pub const BASE_NA: u64 = 300_000;
/// IMU draw at 1 kHz ODR; scales linearly with rate.
pub const IMU_AT_1KHZ_NA: u64 = 880_000;
/// Temperature sensors, independent of rate.
pub const TEMP_NA: u64 = 50_000;
/// PPG draw at 100 Hz with every LED at the reference code.
pub const PPG_REFERENCE_NA: u64 = 1_437_000;

/// Current drawn in `mode` with `config`, in nA. Sensors draw only while
/// acquiring.
pub fn current_na(mode: RingMode, config: &SensorConfig) -> u64 {
    let mut i = BASE_NA;
    if matches!(mode, RingMode::Streaming | RingMode::Logging) {
        if config.imu.enabled {
            i += IMU_AT_1KHZ_NA * u64::from(config.imu.rate_hz) / 1000;
        }
        if config.temp.enabled {
            i += TEMP_NA;
        }
        if config.ppg.enabled {
            let code_sum: u64 = config.ppg.led_codes.iter().map(|&c| u64::from(c)).sum();
            i += PPG_REFERENCE_NA * u64::from(config.ppg.rate_hz) * code_sum
                / (100 * 3 * u64::from(REFERENCE_LED_CODE));
        }
    }
    i
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatteryState {
    pub capacity_na_us: u64,
    pub level_na_us: u64,
    /// On external power the level holds.
    pub external_power: bool,
}

impl BatteryState {
    pub fn full() -> Self {
        BatteryState {
            capacity_na_us: CAPACITY_NA_US,
            level_na_us: CAPACITY_NA_US,
            external_power: false,
        }
    }

    pub fn with_percent(pct: f64) -> Self {
        let mut b = Self::full();
        b.level_na_us = (CAPACITY_NA_US as f64 * pct.clamp(0.0, 100.0) / 100.0) as u64;
        b
    }

    pub fn level_mah(&self) -> f64 {
        CAPACITY_MAH * self.level_na_us as f64 / self.capacity_na_us as f64
    }

    pub fn percent(&self) -> u8 {
        if self.level_na_us == 0 {
            return 0;
        }
        let p = (self.level_na_us as u128 * 100 / self.capacity_na_us as u128) as u8;
        p.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.level_na_us == 0
    }

    /// Drain at `current_na` for `dt_us`. Returns the offset into `dt_us` at
    /// which the cell emptied, if it did.
    pub fn step(&mut self, current_na: u64, dt_us: u64) -> Option<u64> {
        if self.external_power || current_na == 0 || self.level_na_us == 0 {
            return None;
        }
        let need = current_na as u128 * dt_us as u128;
        if need < self.level_na_us as u128 {
            self.level_na_us -= need as u64;
            None
        } else {
            let at = self.level_na_us.div_ceil(current_na);
            self.level_na_us = 0;
            Some(at.min(dt_us))
        }
    }

    /// Time to empty at a constant draw, in seconds.
    pub fn lifetime_s(&self, current_na: u64) -> f64 {
        self.level_na_us as f64 / current_na as f64 / 1e6
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_draws_budget() {
        let c = SensorConfig::reference();
        assert_eq!(current_na(RingMode::Logging, &c), 1_875_000);
        assert_eq!(BatteryState::full().lifetime_s(1_875_000), 8.0 * 3600.0);
    }

    #[test]
    fn idle_lifetime_is_fifty_hours() {
        let c = SensorConfig::all_disabled();
        let i = current_na(RingMode::Streaming, &c);
        assert_eq!(i, BASE_NA);
        assert_eq!(BatteryState::full().lifetime_s(i), 50.0 * 3600.0);
    }

    #[test]
    fn imu_only_term() {
        let mut c = SensorConfig::all_disabled();
        c.imu.enabled = true;
        assert_eq!(current_na(RingMode::Streaming, &c) - BASE_NA, 88_000);
    }

    #[test]
    fn led_drive_scales_ppg() {
        let mut c = SensorConfig::all_disabled();
        c.ppg.enabled = true;
        c.ppg.led_codes = [64; 3];
        assert_eq!(current_na(RingMode::Streaming, &c) - BASE_NA, PPG_REFERENCE_NA / 2);
        c.ppg.rate_hz = 25;
        assert_eq!(current_na(RingMode::Streaming, &c) - BASE_NA, PPG_REFERENCE_NA / 8);
    }

    #[test]
    fn step_is_partition_independent() {
        let mut a = BatteryState::full();
        let mut b = BatteryState::full();
        a.step(1_875_000, 3_000_000_000);
        for _ in 0..3000 {
            b.step(1_875_000, 1_000_000);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn empties_exactly_at_eight_hours() {
        let mut b = BatteryState::full();
        let at = b.step(1_875_000, 10 * 3600 * 1_000_000);
        assert_eq!(at, Some(8 * 3600 * 1_000_000));
        assert!(b.is_empty());
        assert_eq!(b.percent(), 0);
    }

    #[test]
    fn external_power_holds_level() {
        let mut b = BatteryState::full();
        b.external_power = true;
        assert_eq!(b.step(1_875_000, 100 * 3600 * 1_000_000), None);
        assert_eq!(b.percent(), 100);
    }
}
