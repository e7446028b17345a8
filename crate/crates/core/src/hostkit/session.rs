use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{CalibrationReport, Host, HostError};
use crate::dsp::{activity_counts, estimate_hr, HR_WINDOW_S};
use crate::proto::{Command, DeviceEvent, Message, SampleRecord, StreamPacket, TargetMode, WINDOW_US};
use crate::render::{RenderDownsampler, RenderFrame};
use crate::ringsim::sensors::{ACCEL_LSB_PER_G, PPG_IR_CHANNEL};
use crate::transport::Notification;
use crate::types::{Mac, Modality, SensorConfig, MICROS_PER_SEC};

/// Live metrics are recomputed once per second of received data.
pub const HR_UPDATE_US: u64 = MICROS_PER_SEC;
/// Render frames kept for a lagging observer; older ones are dropped first.
const RENDER_BACKLOG: usize = 1800;
/// How long `stop_session` waits for the end-of-session event.
const DRAIN_GRACE_US: u64 = MICROS_PER_SEC;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    /// Estimated device-epoch microseconds.
    pub timestamp_us: u64,
    pub tag: String,
}

/// Missing stream sequence numbers, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub first_seq: u32,
    pub last_seq: u32,
}

impl Gap {
    pub fn packets(&self) -> u32 {
        self.last_seq - self.first_seq + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiveMetrics {
    pub window_start_us: u64,
    pub window_end_us: u64,
    pub hr_bpm: Option<f64>,
    pub confidence: f64,
    pub activity_count: u32,
}

/// Something an observer of a live session should see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SessionUpdate {
    Render(RenderFrame),
    Metrics(LiveMetrics),
    Event(DeviceEvent),
}

/// One recording: online stream or fetched offline segments.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub mac: Mac,
    pub config: SensorConfig,
    pub calibration: Option<CalibrationReport>,
    /// Device minus host clock used to stamp annotations.
    pub clock_offset_us: i64,
    pub start_us: u64,
    pub end_us: Option<u64>,
    pub records: Vec<SampleRecord>,
    pub annotations: Vec<Annotation>,
    pub gaps: Vec<Gap>,
    pub metrics: Vec<LiveMetrics>,
    pub packets_received: u32,
    pub ended: bool,
    next_seq: u32,
    /// Packet count of a timed session, known up front.
    planned_packets: Option<u32>,
    origin_us: Option<u64>,
    next_metrics_us: u64,
    render: RenderDownsampler,
    updates: VecDeque<SessionUpdate>,
    render_pending: usize,
}

impl Session {
    pub fn new(mac: Mac, config: SensorConfig, start_us: u64) -> Self {
        let hex: String = mac.0.iter().map(|b| format!("{b:02x}")).collect();
        Session {
            id: format!("{hex}-{start_us}"),
            mac,
            config,
            calibration: None,
            clock_offset_us: 0,
            start_us,
            end_us: None,
            records: Vec::new(),
            annotations: Vec::new(),
            gaps: Vec::new(),
            metrics: Vec::new(),
            packets_received: 0,
            ended: false,
            next_seq: 0,
            planned_packets: None,
            origin_us: None,
            next_metrics_us: 0,
            render: RenderDownsampler::new(),
            updates: VecDeque::new(),
            render_pending: 0,
        }
    }

    pub fn is_live(&self) -> bool {
        !self.ended
    }

    pub fn count(&self, m: Modality) -> usize {
        self.records.iter().filter(|r| r.has(m)).count()
    }

    pub fn missing_packets(&self) -> u32 {
        self.gaps.iter().map(Gap::packets).sum()
    }

    /// Index of the record closest in time to `t_us`.
    pub fn nearest_record(&self, t_us: u64) -> Option<usize> {
        if self.records.is_empty() {
            return None;
        }
        let i = self.records.partition_point(|r| r.timestamp_us < t_us);
        let dist = |k: usize| self.records[k].timestamp_us.abs_diff(t_us);
        match i {
            0 => Some(0),
            i if i == self.records.len() => Some(i - 1),
            i => Some(if dist(i - 1) <= dist(i) { i - 1 } else { i }),
        }
    }

    pub fn drain_updates(&mut self) -> Vec<SessionUpdate> {
        self.render_pending = 0;
        self.updates.drain(..).collect()
    }

    fn push_update(&mut self, u: SessionUpdate) {
        if matches!(u, SessionUpdate::Render(_)) {
            if self.render_pending == RENDER_BACKLOG {
                if let Some(i) = self.updates.iter().position(|x| matches!(x, SessionUpdate::Render(_))) {
                    self.updates.remove(i);
                    self.render_pending -= 1;
                }
            }
            self.render_pending += 1;
        }
        self.updates.push_back(u);
    }

    /// Apply one notification from the ring.
    pub fn ingest(&mut self, n: &Notification) {
        match &n.message {
            Message::Stream(p) => self.ingest_packet(p),
            Message::Event(ev) => {
                if let DeviceEvent::SessionEnded { packets } = *ev {
                    self.close(packets);
                }
                self.push_update(SessionUpdate::Event(ev.clone()));
            }
            _ => {}
        }
    }

    /// Mark the session over after `packets` were sent in total.
    fn close(&mut self, packets: u32) {
        if packets > self.next_seq {
            self.gaps.push(Gap { first_seq: self.next_seq, last_seq: packets - 1 });
            self.next_seq = packets;
        }
        if let Some(f) = self.render.finish() {
            self.push_update(SessionUpdate::Render(f));
        }
        self.ended = true;
    }

    fn ingest_packet(&mut self, p: &StreamPacket) {
        if self.ended || p.seq < self.next_seq {
            return;
        }
        if p.seq > self.next_seq {
            self.gaps.push(Gap { first_seq: self.next_seq, last_seq: p.seq - 1 });
        }
        self.next_seq = p.seq + 1;
        self.packets_received += 1;
        let origin = *self.origin_us.get_or_insert(p.base_timestamp_us);
        if self.next_metrics_us == 0 {
            self.next_metrics_us = origin + (HR_WINDOW_S * 1e6) as u64;
        }
        self.records.extend_from_slice(&p.records);
        for f in self.render.push(p) {
            self.push_update(SessionUpdate::Render(f));
        }
        while self.next_metrics_us <= p.window_end_us() {
            let end = self.next_metrics_us;
            let m = self.metrics_over(end - (HR_WINDOW_S * 1e6) as u64, end);
            self.metrics.push(m);
            self.push_update(SessionUpdate::Metrics(m));
            self.next_metrics_us += HR_UPDATE_US;
        }
    }

    fn window(&self, start_us: u64, end_us: u64) -> &[SampleRecord] {
        let a = self.records.partition_point(|r| r.timestamp_us < start_us);
        let b = self.records.partition_point(|r| r.timestamp_us < end_us);
        &self.records[a..b]
    }

    /// Heart rate from the IR channel and activity counts over one window.
    pub fn metrics_over(&self, start_us: u64, end_us: u64) -> LiveMetrics {
        let recs = self.window(start_us, end_us);
        let ir: Vec<f64> = recs.iter().filter_map(|r| r.ppg.map(|p| f64::from(p[PPG_IR_CHANNEL]))).collect();
        let hr = (self.config.ppg.enabled && !ir.is_empty())
            .then(|| estimate_hr(&ir, f64::from(self.config.ppg.rate_hz), start_us));
        let accel: Vec<[f64; 3]> = recs
            .iter()
            .filter_map(|r| r.imu.map(|m| [0, 1, 2].map(|i| f64::from(m[i]) / ACCEL_LSB_PER_G)))
            .collect();
        let activity = if self.config.imu.enabled && accel.len() > 1 {
            activity_counts(&accel, f64::from(self.config.imu.rate_hz))
        } else {
            0
        };
        LiveMetrics {
            window_start_us: start_us,
            window_end_us: end_us,
            hr_bpm: hr.and_then(|h| h.bpm),
            confidence: hr.map_or(0.0, |h| h.confidence),
            activity_count: activity,
        }
    }
}

impl Host {
    /// Push `config`, estimate the device clock if not calibrated, and
    /// start streaming. A zero `duration_ms` streams until stopped.
    pub fn start_session(&mut self, mac: Mac, config: SensorConfig, duration_ms: u32) -> Result<Session, HostError> {
        if !config.is_valid() {
            return Err(HostError::BadArgument("sensor rate outside the allowed set".into()));
        }
        for m in Modality::ALL {
            self.expect_ack(mac, &Command::SensorEnable { modality: m, enabled: config.enabled(m) })?;
            self.expect_ack(mac, &Command::SetRate { modality: m, rate_hz: config.rate(m) })?;
        }
        let ppg = config.ppg;
        self.expect_ack(mac, &Command::SetLed { led_codes: ppg.led_codes, pulse_width_us: ppg.pulse_width_us })?;
        let offset = self.clock_offset_us(mac)?;
        let start = (self.now_epoch_us() as i64 + offset) as u64;
        let mut s = Session::new(mac, config, start);
        s.calibration = self.calibration(mac).cloned();
        s.clock_offset_us = offset;
        s.planned_packets = (duration_ms > 0).then(|| (u64::from(duration_ms) * 1000 / WINDOW_US) as u32);
        self.expect_ack(mac, &Command::SetMode { mode: TargetMode::Streaming, duration_ms })?;
        Ok(s)
    }

    /// Estimated device time now, in the session's clock.
    pub fn session_time_us(&self, s: &Session) -> u64 {
        (self.now_epoch_us() as i64 + s.clock_offset_us) as u64
    }

    /// Deliver everything that has arrived by now.
    pub fn poll_session(&mut self, s: &mut Session) -> Result<(), HostError> {
        for n in self.radio.poll(s.mac)? {
            s.ingest(&n);
        }
        Ok(())
    }

    /// Let `dt_us` of virtual time pass while receiving.
    pub fn run_session(&mut self, s: &mut Session, dt_us: u64) -> Result<(), HostError> {
        self.radio.advance(dt_us);
        self.poll_session(s)
    }

    /// Run a timed session until the ring ends it, or `limit_us` passes. If
    /// the end event was lost, packets missing from the tail of a timed
    /// session are recorded as a gap.
    pub fn run_until_ended(&mut self, s: &mut Session, limit_us: u64) -> Result<(), HostError> {
        let deadline = self.radio.now_us() + limit_us;
        while !s.ended && self.radio.now_us() < deadline {
            let step = MICROS_PER_SEC.min(deadline - self.radio.now_us());
            self.run_session(s, step)?;
        }
        if let (false, Some(n)) = (s.ended, s.planned_packets) {
            s.close(n);
        }
        if s.end_us.is_none() {
            s.end_us = Some(self.session_time_us(s));
        }
        Ok(())
    }

    /// Stop streaming and collect what is still in flight.
    pub fn stop_session(&mut self, s: &mut Session) -> Result<(), HostError> {
        if !s.ended {
            self.expect_ack(s.mac, &Command::SetMode { mode: TargetMode::Idle, duration_ms: 0 })?;
        }
        let deadline = self.radio.now_us() + self.radio.params().latency_down.max_us() + DRAIN_GRACE_US;
        self.poll_session(s)?;
        while !s.ended && self.radio.now_us() < deadline {
            let next = self.radio.next_notification_us(s.mac).unwrap_or(deadline).min(deadline);
            self.radio.advance_to(next.max(self.radio.now_us() + 1));
            self.poll_session(s)?;
        }
        s.ended = true;
        if s.end_us.is_none() {
            s.end_us = Some(self.session_time_us(s));
        }
        Ok(())
    }

    /// Tag the current instant of a live session.
    pub fn annotate(&mut self, s: &mut Session, tag: &str) -> Result<Annotation, HostError> {
        if s.ended {
            return Err(HostError::BadArgument("session has ended".into()));
        }
        if tag.trim().is_empty() {
            return Err(HostError::BadArgument("empty annotation tag".into()));
        }
        let a = Annotation { timestamp_us: self.session_time_us(s), tag: tag.to_string() };
        s.annotations.push(a.clone());
        Ok(a)
    }
}
