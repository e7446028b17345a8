//! Rate-independent 30 Hz min/max envelopes for live charts.
//!
//! Frame `k` covers device time `[origin + ⌊k·10⁶/30⌋, origin + ⌊(k+1)·10⁶/30⌋)`
//! microseconds. A frame is emitted once a packet's window reaches past its
//! end, so a lost packet yields frames with no channels rather than a stall.

use serde::{Deserialize, Serialize};

use crate::proto::{SampleRecord, StreamPacket};
use crate::ringsim::sensors::{ACCEL_LSB_PER_G, GYRO_LSB_PER_DPS};

pub const RENDER_HZ: u64 = 30;

/// Every chart channel in frame order: (id, unit).
pub const CHANNELS: [(&str, &str); 12] = [
    ("ppg.green", "counts"),
    ("ppg.red", "counts"),
    ("ppg.ir", "counts"),
    ("accel.x", "g"),
    ("accel.y", "g"),
    ("accel.z", "g"),
    ("gyro.x", "dps"),
    ("gyro.y", "dps"),
    ("gyro.z", "dps"),
    ("temp.inner_a", "degC"),
    ("temp.inner_b", "degC"),
    ("temp.outer", "degC"),
];

/// Physical values of every channel a record carries, in `CHANNELS` order.
pub fn channel_values(r: &SampleRecord) -> [Option<f64>; 12] {
    let mut out = [None; 12];
    if let Some(p) = r.ppg {
        for i in 0..3 {
            out[i] = Some(f64::from(p[i]));
        }
    }
    if let Some(m) = r.imu {
        for i in 0..3 {
            out[3 + i] = Some(f64::from(m[i]) / ACCEL_LSB_PER_G);
            out[6 + i] = Some(f64::from(m[3 + i]) / GYRO_LSB_PER_DPS);
        }
    }
    if let Some(t) = r.temp {
        for i in 0..3 {
            out[9 + i] = Some(f64::from(t[i]) / 100.0);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub channel: String,
    pub unit: String,
    pub count: u32,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderFrame {
    pub index: u64,
    /// Device-epoch microseconds.
    pub start_us: u64,
    pub end_us: u64,
    /// Only channels with samples in the frame; empty for heartbeats.
    pub channels: Vec<Envelope>,
}

impl RenderFrame {
    pub fn is_heartbeat(&self) -> bool {
        self.channels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    count: u32,
    min: f64,
    max: f64,
}

impl Acc {
    fn add(&mut self, v: f64) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
    }
}

#[derive(Debug, Clone)]
pub struct RenderDownsampler {
    origin_us: Option<u64>,
    index: u64,
    acc: [Acc; 12],
}

impl Default for RenderDownsampler {
    fn default() -> Self {
        Self::new()
    }
}

impl RenderDownsampler {
    pub fn new() -> Self {
        RenderDownsampler { origin_us: None, index: 0, acc: [Acc::default(); 12] }
    }

    /// Start of frame `k`, relative to the origin.
    fn bound(k: u64) -> u64 {
        k * 1_000_000 / RENDER_HZ
    }

    fn frame_end(&self) -> u64 {
        self.origin_us.unwrap_or(0) + Self::bound(self.index + 1)
    }

    fn close(&mut self) -> RenderFrame {
        let origin = self.origin_us.unwrap_or(0);
        let channels = CHANNELS
            .iter()
            .zip(&self.acc)
            .filter(|(_, a)| a.count > 0)
            .map(|((id, unit), a)| Envelope {
                channel: (*id).to_string(),
                unit: (*unit).to_string(),
                count: a.count,
                min: a.min,
                max: a.max,
            })
            .collect();
        let frame = RenderFrame {
            index: self.index,
            start_us: origin + Self::bound(self.index),
            end_us: origin + Self::bound(self.index + 1),
            channels,
        };
        self.index += 1;
        self.acc = [Acc::default(); 12];
        frame
    }

    /// Fold in one packet and return every frame it completes. The first
    /// packet's base timestamp is the origin.
    pub fn push(&mut self, packet: &StreamPacket) -> Vec<RenderFrame> {
        self.origin_us.get_or_insert(packet.base_timestamp_us);
        let mut out = Vec::new();
        for r in &packet.records {
            while r.timestamp_us >= self.frame_end() {
                out.push(self.close());
            }
            for (acc, v) in self.acc.iter_mut().zip(channel_values(r)) {
                if let Some(v) = v {
                    acc.add(v);
                }
            }
        }
        while self.frame_end() <= packet.window_end_us() {
            out.push(self.close());
        }
        out
    }

    /// Emit the partially covered frame, if it holds anything.
    pub fn finish(&mut self) -> Option<RenderFrame> {
        self.acc.iter().any(|a| a.count > 0).then(|| self.close())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proto::{pack_samples, WINDOW_US};

    fn packets(n: u64, period_us: u64) -> Vec<StreamPacket> {
        let base = 1_767_225_600_000_000;
        (0..n)
            .map(|i| {
                let b = base + i * WINDOW_US;
                let recs = (0..WINDOW_US / period_us)
                    .map(|j| {
                        let t = b + j * period_us;
                        let v = ((t / 1000) % 997) as u32;
                        SampleRecord { ppg: Some([v, v + 1, v + 2]), imu: Some([2048, 0, 0, 0, 0, 82]), ..SampleRecord::empty(t) }
                    })
                    .collect();
                pack_samples(recs, i as u32, b).unwrap()
            })
            .collect()
    }

    #[test]
    fn ten_seconds_at_100hz_is_300_frames() {
        let mut d = RenderDownsampler::new();
        let frames: Vec<RenderFrame> = packets(200, 10_000).iter().flat_map(|p| d.push(p)).collect();
        assert_eq!(frames.len(), 300);
        for (k, f) in frames.iter().enumerate() {
            assert_eq!(f.index, k as u64);
            let ppg = &f.channels[0];
            assert!(ppg.count >= 3, "frame {k} has {} samples", ppg.count);
        }
        let total: u32 = frames.iter().map(|f| f.channels[0].count).sum();
        assert_eq!(total, 1000);
        assert!(d.finish().is_none());
    }

    #[test]
    fn envelope_bounds_every_sample() {
        let ps = packets(60, 10_000);
        let mut d = RenderDownsampler::new();
        let frames: Vec<RenderFrame> = ps.iter().flat_map(|p| d.push(p)).collect();
        for r in ps.iter().flat_map(|p| &p.records) {
            let f = frames.iter().find(|f| f.start_us <= r.timestamp_us && r.timestamp_us < f.end_us).unwrap();
            let v = f64::from(r.ppg.unwrap()[2]);
            let e = f.channels.iter().find(|e| e.channel == "ppg.ir").unwrap();
            assert!(e.min <= v && v <= e.max);
        }
        let accel = frames[0].channels.iter().find(|e| e.channel == "accel.x").unwrap();
        assert_eq!((accel.min, accel.unit.as_str()), (1.0, "g"));
    }

    #[test]
    fn idle_stream_gives_heartbeats() {
        let base = 5_000_000;
        let mut d = RenderDownsampler::new();
        let frames: Vec<RenderFrame> = (0..20u64)
            .flat_map(|i| d.push(&pack_samples(vec![], i as u32, base + i * WINDOW_US).unwrap()))
            .collect();
        assert_eq!(frames.len(), 30);
        assert!(frames.iter().all(RenderFrame::is_heartbeat));
    }

    #[test]
    fn lost_packets_become_empty_frames() {
        let ps = packets(20, 10_000);
        let mut d = RenderDownsampler::new();
        let frames: Vec<RenderFrame> =
            ps.iter().enumerate().filter(|(i, _)| !(5..8).contains(i)).flat_map(|(_, p)| d.push(p)).collect();
        assert_eq!(frames.len(), 30);
        assert!(frames.iter().any(RenderFrame::is_heartbeat));
        assert!(frames.windows(2).all(|w| w[0].end_us == w[1].start_us));
    }
}
