use rand::Rng;
use serde::{Deserialize, Serialize};

/// Default bulk channel throughput: 128 kbit/s.
pub const DEFAULT_BULK_RATE_BPS: u32 = 16_000;
/// Attempts per command before the host gives up.
pub const MAX_ATTEMPTS: u32 = 3;

/// One-way latency, uniform over `mean ± jitter`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Latency {
    pub mean_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
}

impl Latency {
    pub const fn fixed(mean_ms: f64) -> Self {
        Latency { mean_ms, jitter_ms: 0.0 }
    }

    /// Uniform over `[lo_ms, hi_ms]`.
    pub fn between(lo_ms: f64, hi_ms: f64) -> Self {
        Latency { mean_ms: (lo_ms + hi_ms) / 2.0, jitter_ms: (hi_ms - lo_ms) / 2.0 }
    }

    pub fn max_us(&self) -> u64 {
        ((self.mean_ms + self.jitter_ms) * 1000.0).round().max(0.0) as u64
    }

    pub fn sample_us<R: Rng>(&self, rng: &mut R) -> u64 {
        let ms = if self.jitter_ms > 0.0 {
            rng.random_range(self.mean_ms - self.jitter_ms..=self.mean_ms + self.jitter_ms)
        } else {
            self.mean_ms
        };
        (ms * 1000.0).round().max(0.0) as u64
    }
}

/// Link characteristics. Also the on-disk fault-injection profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkParams {
    pub latency_up: Latency,
    pub latency_down: Latency,
    /// Per-frame loss probability on the notify channel, and on each leg of
    /// a command exchange unless `command_loss_rate` overrides it.
    pub loss_rate: f64,
    pub command_loss_rate: Option<f64>,
    pub bulk_rate_bps: u32,
    /// How long the host waits for a response before resending.
    pub attempt_timeout_ms: u32,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            latency_up: Latency::fixed(15.0),
            latency_down: Latency::fixed(15.0),
            loss_rate: 0.0,
            command_loss_rate: None,
            bulk_rate_bps: DEFAULT_BULK_RATE_BPS,
            attempt_timeout_ms: 300,
        }
    }
}

impl LinkParams {
    pub fn symmetric(latency: Latency) -> Self {
        LinkParams { latency_up: latency, latency_down: latency, ..Self::default() }
    }

    pub fn with_loss(mut self, loss_rate: f64) -> Self {
        self.loss_rate = loss_rate;
        self
    }

    pub fn command_loss(&self) -> f64 {
        self.command_loss_rate.unwrap_or(self.loss_rate)
    }

    /// Virtual time to push `bytes` through the bulk channel, rounded up.
    pub fn bulk_time_us(&self, bytes: usize) -> u64 {
        (bytes as u64 * 1_000_000).div_ceil(u64::from(self.bulk_rate_bps.max(1)))
    }

    pub fn attempt_timeout_us(&self) -> u64 {
        u64::from(self.attempt_timeout_ms) * 1000
    }

    pub fn validate(&self) -> Result<(), String> {
        let probs = [Some(self.loss_rate), self.command_loss_rate];
        if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("loss rates must lie in [0, 1]".into());
        }
        for l in [self.latency_up, self.latency_down] {
            if l.mean_ms < 0.0 || l.jitter_ms < 0.0 || l.jitter_ms > l.mean_ms {
                return Err("latency needs 0 <= jitter <= mean".into());
            }
        }
        if self.bulk_rate_bps == 0 {
            return Err("bulk_rate_bps must be positive".into());
        }
        let rtt_max = self.latency_up.max_us() + self.latency_down.max_us();
        if self.attempt_timeout_us() <= rtt_max {
            return Err("attempt timeout must exceed the worst-case round trip".into());
        }
        Ok(())
    }
}

/// Faults armed on one ring's link. Each fires once, counted in payload
/// bytes of a bulk transfer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultProfile {
    /// Drop the link when a transfer reaches this file offset.
    pub disconnect_at_byte: Option<u32>,
    /// Flip one bit of the byte at this file offset before it is framed.
    pub corrupt_byte: Option<u32>,
}
