//! Simulated radio between one host and any number of virtual rings.
//!
//! The [`Radio`] owns the rings and the virtual clock. Each connected ring
//! has three channels:
//!
//! - command: request/response with per-leg latency and loss, up to
//!   [`MAX_ATTEMPTS`] attempts, retried writes deduplicated by attempt id;
//! - notify: stream packets and device events, FIFO, silently lossy;
//! - bulk: file chunks, reliable, paced at `bulk_rate_bps`.
//!
//! Everything that crosses a channel is encoded to frame bytes and decoded
//! on the far side.

mod env;
mod link;

pub use env::{EnvError, Environment, Prelog, RingSpec};
pub use link::{FaultProfile, Latency, LinkParams, DEFAULT_BULK_RATE_BPS, MAX_ATTEMPTS};

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proto::{
    decode_message, encode_message, Chunk, Command, ErrorCode, Message, ProtoError, Response,
};
use crate::ringsim::Ring;
use crate::types::Mac;

pub const RSSI_MIN_DBM: f64 = -100.0;
pub const RSSI_MAX_DBM: f64 = -30.0;
/// Per-scan RSSI spread around a ring's placement value.
pub const RSSI_SIGMA_DB: f64 = 2.0;

const STREAM_RSSI: u64 = 0;
const STREAM_LATENCY: u64 = 1;
const STREAM_LOSS: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("no advertising device with address {0}")]
    UnknownDevice(Mac),
    #[error("already connected to {0}")]
    AlreadyConnected(Mac),
    #[error("not connected to {0}")]
    NotConnected(Mac),
    #[error("no response after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("link dropped at file offset {offset}")]
    Disconnected { offset: u32 },
    #[error("device rejected the request: {0:?}")]
    Rejected(ErrorCode),
    #[error("unexpected reply to {0}")]
    UnexpectedReply(&'static str),
    #[error(transparent)]
    Codec(#[from] ProtoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advertisement {
    pub name: String,
    pub mac: Mac,
    pub rssi: i16,
    pub battery_pct: u8,
    pub fw_version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkState {
    Connected,
    Disconnected,
}

/// A message delivered to the host over the notify channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Notification {
    /// Virtual instant the device sent it.
    pub sent_us: u64,
    /// Virtual instant it reached the host.
    pub at_us: u64,
    pub message: Message,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub requests: u64,
    pub attempts: u64,
    pub retries: u64,
    pub timeouts: u64,
    pub notify_sent: u64,
    pub notify_dropped: u64,
    pub records_sent: u64,
    pub records_delivered: u64,
    pub bulk_bytes: u64,
    /// Writes the device executed, and resent writes it answered from memory.
    pub writes_executed: u64,
    pub duplicates_suppressed: u64,
}

/// Outcome of one command exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub reply: Message,
    pub sent_us: u64,
    /// When the successful attempt left the host.
    pub attempt_sent_us: u64,
    pub received_us: u64,
    pub attempts: u32,
}

impl Exchange {
    /// Round trip of the attempt that got through.
    pub fn rtt_us(&self) -> u64 {
        self.received_us - self.attempt_sent_us
    }
}

#[derive(Debug)]
struct Slot {
    ring: Ring,
    rssi_dbm: f64,
    faults: FaultProfile,
    state: LinkState,
    notify: VecDeque<(u64, u64, Vec<u8>)>,
    last_notify_us: u64,
    /// Last executed non-idempotent attempt: (request id, reply).
    last_write: Option<(u64, Option<Message>)>,
    stats: LinkStats,
}

impl Slot {
    fn connected(&self) -> bool {
        self.state == LinkState::Connected
    }
}

/// The host's radio and every ring within range.
#[derive(Debug)]
pub struct Radio {
    now_us: u64,
    params: LinkParams,
    slots: Vec<Slot>,
    next_request: u64,
    rssi_rng: ChaCha8Rng,
    latency_rng: ChaCha8Rng,
    loss_rng: ChaCha8Rng,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

impl Radio {
    pub fn new(params: LinkParams, seed: u64) -> Self {
        Radio {
            now_us: 0,
            params,
            slots: Vec::new(),
            next_request: 1,
            rssi_rng: rng(seed, STREAM_RSSI),
            latency_rng: rng(seed, STREAM_LATENCY),
            loss_rng: rng(seed, STREAM_LOSS),
        }
    }

    /// Put a ring in range. Its clock is brought to the radio's.
    pub fn add_ring(&mut self, mut ring: Ring, rssi_dbm: f64) -> Mac {
        if ring.now_us() < self.now_us {
            ring.advance_to(self.now_us);
        } else if ring.now_us() > self.now_us {
            let t = ring.now_us();
            self.advance_to(t);
        }
        ring.take_emissions();
        let mac = ring.mac();
        assert!(self.slot(mac).is_none(), "duplicate ring address {mac}");
        self.slots.push(Slot {
            ring,
            rssi_dbm,
            faults: FaultProfile::default(),
            state: LinkState::Disconnected,
            notify: VecDeque::new(),
            last_notify_us: 0,
            last_write: None,
            stats: LinkStats::default(),
        });
        mac
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn set_params(&mut self, params: LinkParams) {
        self.params = params;
    }

    pub fn macs(&self) -> Vec<Mac> {
        self.slots.iter().map(|s| s.ring.mac()).collect()
    }

    fn slot(&self, mac: Mac) -> Option<&Slot> {
        self.slots.iter().find(|s| s.ring.mac() == mac)
    }

    fn slot_index(&self, mac: Mac) -> Result<usize, LinkError> {
        self.slots
            .iter()
            .position(|s| s.ring.mac() == mac)
            .ok_or(LinkError::UnknownDevice(mac))
    }

    fn connected_index(&self, mac: Mac) -> Result<usize, LinkError> {
        let i = self.slot_index(mac)?;
        if self.slots[i].connected() {
            Ok(i)
        } else {
            Err(LinkError::NotConnected(mac))
        }
    }

    /// Direct access to a ring, for test oracles and environment setup.
    pub fn ring(&self, mac: Mac) -> Option<&Ring> {
        self.slot(mac).map(|s| &s.ring)
    }

    pub fn ring_mut(&mut self, mac: Mac) -> Option<&mut Ring> {
        self.slots.iter_mut().find(|s| s.ring.mac() == mac).map(|s| &mut s.ring)
    }

    pub fn set_faults(&mut self, mac: Mac, faults: FaultProfile) -> Result<(), LinkError> {
        let i = self.slot_index(mac)?;
        self.slots[i].faults = faults;
        Ok(())
    }

    pub fn link_state(&self, mac: Mac) -> Option<LinkState> {
        self.slot(mac).map(|s| s.state)
    }

    pub fn stats(&self, mac: Mac) -> Option<LinkStats> {
        self.slot(mac).map(|s| s.stats)
    }

    /// Run every ring to `t_us`, routing what they emit onto notify channels.
    pub fn advance_to(&mut self, t_us: u64) {
        if t_us <= self.now_us {
            return;
        }
        self.now_us = t_us;
        for i in 0..self.slots.len() {
            self.slots[i].ring.advance_to(t_us);
            let emissions = self.slots[i].ring.take_emissions();
            if !self.slots[i].connected() {
                continue;
            }
            for e in emissions {
                self.route(i, e.at_us, &e.message);
            }
        }
    }

    pub fn advance(&mut self, dt_us: u64) {
        self.advance_to(self.now_us + dt_us);
    }

    fn route(&mut self, i: usize, sent_us: u64, message: &Message) {
        let records = match message {
            Message::Stream(p) => p.records.len() as u64,
            _ => 0,
        };
        let slot = &mut self.slots[i];
        slot.stats.notify_sent += 1;
        slot.stats.records_sent += records;
        if self.params.loss_rate > 0.0 && self.loss_rng.random_bool(self.params.loss_rate) {
            slot.stats.notify_dropped += 1;
            return;
        }
        let lat = self.params.latency_down.sample_us(&mut self.latency_rng);
        let at = (sent_us + lat).max(slot.last_notify_us);
        slot.last_notify_us = at;
        let bytes = encode_message(message).expect("device emissions fit the MTU");
        slot.notify.push_back((sent_us, at, bytes));
    }

    /// Advertisements heard while scanning for `duration_us`.
    pub fn scan(&mut self, duration_us: u64) -> Vec<Advertisement> {
        self.advance(duration_us);
        let noise = Normal::new(0.0, RSSI_SIGMA_DB).expect("positive sigma");
        let mut out = Vec::new();
        for s in &self.slots {
            if !s.ring.is_powered() {
                continue;
            }
            let rssi = (s.rssi_dbm + noise.sample(&mut self.rssi_rng)).clamp(RSSI_MIN_DBM, RSSI_MAX_DBM);
            out.push(Advertisement {
                name: s.ring.name().to_string(),
                mac: s.ring.mac(),
                rssi: rssi.round() as i16,
                battery_pct: s.ring.battery().percent(),
                fw_version: crate::ringsim::FW_VERSION.to_string(),
            });
        }
        out
    }

    pub fn connect(&mut self, mac: Mac) -> Result<(), LinkError> {
        let i = self.slot_index(mac)?;
        let slot = &mut self.slots[i];
        if !slot.ring.is_powered() {
            return Err(LinkError::UnknownDevice(mac));
        }
        if slot.connected() {
            return Err(LinkError::AlreadyConnected(mac));
        }
        slot.state = LinkState::Connected;
        slot.notify.clear();
        slot.last_notify_us = self.now_us;
        Ok(())
    }

    pub fn disconnect(&mut self, mac: Mac) -> Result<(), LinkError> {
        let i = self.connected_index(mac)?;
        self.slots[i].state = LinkState::Disconnected;
        self.slots[i].notify.clear();
        Ok(())
    }

    /// Send one command and wait for its reply. Lost attempts are resent
    /// after the attempt timeout; a resent write is answered from the
    /// device's record of that attempt rather than executed twice.
    pub fn request(&mut self, mac: Mac, cmd: &Command) -> Result<Exchange, LinkError> {
        let i = self.connected_index(mac)?;
        let id = self.next_request;
        self.next_request += 1;
        self.slots[i].stats.requests += 1;
        let frame = encode_message(&Message::Command(cmd.clone()))?;
        let loss = self.params.command_loss();
        let sent_us = self.now_us;

        for attempt in 1..=MAX_ATTEMPTS {
            let attempt_sent = self.now_us;
            let deadline = attempt_sent + self.params.attempt_timeout_us();
            self.slots[i].stats.attempts += 1;
            if attempt > 1 {
                self.slots[i].stats.retries += 1;
            }

            let up_lost = loss > 0.0 && self.loss_rng.random_bool(loss);
            let up = self.params.latency_up.sample_us(&mut self.latency_rng);
            if up_lost {
                self.advance_to(deadline);
                continue;
            }
            self.advance_to(attempt_sent + up);
            let reply = self.execute(i, id, &frame)?;

            let down_lost = loss > 0.0 && self.loss_rng.random_bool(loss);
            let down = self.params.latency_down.sample_us(&mut self.latency_rng);
            let Some(reply) = reply.filter(|_| !down_lost) else {
                self.advance_to(deadline);
                continue;
            };
            self.advance_to(self.now_us + down);
            return Ok(Exchange {
                reply: decode_message(&reply)?,
                sent_us,
                attempt_sent_us: attempt_sent,
                received_us: self.now_us,
                attempts: attempt,
            });
        }
        self.slots[i].stats.timeouts += 1;
        Err(LinkError::Timeout { attempts: MAX_ATTEMPTS })
    }

    /// Device side of one attempt: decode, dedup, execute, encode the reply.
    fn execute(&mut self, i: usize, id: u64, frame: &[u8]) -> Result<Option<Vec<u8>>, LinkError> {
        let Message::Command(cmd) = decode_message(frame)? else {
            return Err(LinkError::UnexpectedReply("command frame"));
        };
        let slot = &mut self.slots[i];
        let reply = if cmd.is_read_only() {
            slot.ring.handle(&cmd)
        } else {
            match &slot.last_write {
                Some((last, reply)) if *last == id => {
                    slot.stats.duplicates_suppressed += 1;
                    reply.clone()
                }
                _ => {
                    slot.stats.writes_executed += 1;
                    let reply = slot.ring.handle(&cmd);
                    slot.last_write = Some((id, reply.clone()));
                    reply
                }
            }
        };
        // Anything the command itself emitted (a flushed packet, an end of
        // session event) goes out on the notify channel now.
        let emissions = slot.ring.take_emissions();
        for e in emissions {
            self.route(i, e.at_us, &e.message);
        }
        Ok(match reply {
            Some(m) => Some(encode_message(&m)?),
            None => None,
        })
    }

    /// Notifications that have reached the host by now, in arrival order.
    pub fn poll(&mut self, mac: Mac) -> Result<Vec<Notification>, LinkError> {
        let i = self.slot_index(mac)?;
        let now = self.now_us;
        let slot = &mut self.slots[i];
        let mut out = Vec::new();
        while slot.notify.front().is_some_and(|(_, at, _)| *at <= now) {
            let (sent_us, at_us, bytes) = slot.notify.pop_front().expect("front exists");
            let message = decode_message(&bytes)?;
            if let Message::Stream(p) = &message {
                slot.stats.records_delivered += p.records.len() as u64;
            }
            out.push(Notification { sent_us, at_us, message });
        }
        Ok(out)
    }

    /// Arrival time of the oldest undelivered notification.
    pub fn next_notification_us(&self, mac: Mac) -> Option<u64> {
        self.slot(mac).and_then(|s| s.notify.front().map(|(_, at, _)| *at))
    }

    /// Pull up to `max_len` bytes of an open file over the bulk channel.
    /// The clock advances by the transfer time of the bytes delivered.
    pub fn bulk_read(&mut self, mac: Mac, file_id: u16, offset: u32, max_len: u16) -> Result<Chunk, LinkError> {
        let i = self.connected_index(mac)?;
        let cmd = Command::ReadChunk { file_id, offset, max_len };
        let reply = self.slots[i].ring.handle(&cmd);
        let mut chunk = match reply {
            Some(Message::Chunk(c)) => c,
            Some(Message::Response(Response::Error(code))) => return Err(LinkError::Rejected(code)),
            Some(_) => return Err(LinkError::UnexpectedReply("ReadChunk")),
            None => return Err(LinkError::Timeout { attempts: 1 }),
        };
        let start = chunk.offset;
        let end = start + chunk.data.len() as u32;
        let slot = &mut self.slots[i];

        if let Some(d) = slot.faults.disconnect_at_byte.filter(|d| (start..end).contains(d)) {
            slot.faults.disconnect_at_byte = None;
            slot.state = LinkState::Disconnected;
            slot.notify.clear();
            let partial = (d - start) as usize;
            slot.stats.bulk_bytes += partial as u64;
            let t = self.now_us + self.params.bulk_time_us(partial);
            self.advance_to(t);
            return Err(LinkError::Disconnected { offset: d });
        }
        if let Some(c) = slot.faults.corrupt_byte.filter(|c| (start..end).contains(c)) {
            slot.faults.corrupt_byte = None;
            chunk.data[(c - start) as usize] ^= 0x01;
        }

        let bytes = encode_message(&Message::Chunk(chunk))?;
        let Message::Chunk(chunk) = decode_message(&bytes)? else {
            return Err(LinkError::UnexpectedReply("ReadChunk"));
        };
        slot.stats.bulk_bytes += chunk.data.len() as u64;
        let t = self.now_us + self.params.bulk_time_us(chunk.data.len());
        self.advance_to(t);
        Ok(chunk)
    }
}
