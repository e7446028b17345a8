//! Shared gateway state and the pacer that lets virtual time follow the
//! wall clock.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard, TryLockError};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use crate::api::Kind;
use crate::bus::Bus;
use crate::GatewayConfig;
use ringlab_core::hostkit::{Host, PartialDownload, Session, SessionUpdate};
use ringlab_core::proto::DeviceEvent;
use ringlab_core::transport::LinkState;
use ringlab_core::{Mac, Modality};

pub const PACER_TICK: Duration = Duration::from_millis(5);

/// Maps wall time onto virtual time at a fixed speed. Host operations that
/// jump virtual time ahead re-base the mapping instead of being undone.
#[derive(Debug, Clone, Copy)]
pub struct Pacing {
    wall0: Instant,
    virt0: u64,
    speed: f64,
}

impl Pacing {
    pub fn new(virt_now: u64, speed: f64) -> Self {
        Pacing { wall0: Instant::now(), virt0: virt_now, speed }
    }

    pub fn target(&mut self, virt_now: u64) -> u64 {
        self.target_at(Instant::now(), virt_now)
    }

    fn target_at(&mut self, wall: Instant, virt_now: u64) -> u64 {
        let t = self.virt0 + (wall.saturating_duration_since(self.wall0).as_secs_f64() * self.speed * 1e6) as u64;
        if t < virt_now {
            self.wall0 = wall;
            self.virt0 = virt_now;
            virt_now
        } else {
            t
        }
    }
}

#[derive(Debug)]
pub struct Inner {
    pub host: Host,
    pub live: BTreeMap<Mac, Session>,
    /// Latest finished session per ring.
    pub finished: BTreeMap<Mac, Session>,
    /// Interrupted downloads, resumed by the next fetch of the same file.
    pub partial: BTreeMap<(Mac, u16), PartialDownload>,
    pub operator: Option<String>,
    pub pacing: Pacing,
}

#[derive(Debug)]
pub struct AppState {
    pub config: GatewayConfig,
    pub bus: Bus,
    inner: Mutex<Inner>,
}

pub fn session_summary(s: &Session) -> Value {
    json!({
        "session_id": s.id,
        "mac": s.mac,
        "live": s.is_live(),
        "config": s.config,
        "start_us": s.start_us,
        "end_us": s.end_us,
        "clock_offset_us": s.clock_offset_us,
        "records": {
            "ppg": s.count(Modality::Ppg),
            "imu": s.count(Modality::Imu),
            "temp": s.count(Modality::Temp),
        },
        "packets_received": s.packets_received,
        "missing_packets": s.missing_packets(),
        "gaps": s.gaps,
        "annotations": s.annotations,
        "latest_metrics": s.metrics.last(),
    })
}

impl AppState {
    pub fn new(host: Host, config: GatewayConfig) -> Arc<Self> {
        let pacing = Pacing::new(host.radio().now_us(), config.speed);
        let inner = Inner {
            host,
            live: BTreeMap::new(),
            finished: BTreeMap::new(),
            partial: BTreeMap::new(),
            operator: None,
            pacing,
        };
        Arc::new(AppState { config, bus: Bus::default(), inner: Mutex::new(inner) })
    }

    pub fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// One pacer step. Skipped while a long host operation holds the state.
    pub fn tick(&self) {
        let mut g = match self.inner.try_lock() {
            Ok(g) => g,
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
            Err(TryLockError::WouldBlock) => return,
        };
        let now = g.host.radio().now_us();
        let target = g.pacing.target(now);
        if target > now {
            g.host.radio_mut().advance_to(target);
        }
        g.pump(&self.bus);
    }
}

fn publish_updates(bus: &Bus, s: &mut Session) {
    for u in s.drain_updates() {
        match u {
            SessionUpdate::Render(f) => bus.publish(Kind::RenderFrame, Some(s.mac), json!(f)),
            SessionUpdate::Metrics(m) => bus.publish(Kind::HrUpdate, Some(s.mac), json!(m)),
            SessionUpdate::Event(e) => bus.publish(Kind::Event, Some(s.mac), json!(e)),
        };
    }
}

impl Inner {
    /// Deliver arrived notifications and publish what observers should see.
    pub fn pump(&mut self, bus: &Bus) {
        let macs: Vec<Mac> = self.live.keys().copied().collect();
        for mac in macs {
            let mut s = self.live.remove(&mac).expect("live session");
            if let Err(e) = self.host.poll_session(&mut s) {
                bus.publish(Kind::Error, Some(mac), json!({ "code": e.code(), "message": e.to_string() }));
                s.ended = true;
            }
            publish_updates(bus, &mut s);
            if s.ended {
                if s.end_us.is_none() {
                    s.end_us = Some(self.host.session_time_us(&s));
                }
                bus.publish(Kind::Session, Some(mac), session_summary(&s));
                self.finished.insert(mac, s);
            } else {
                self.live.insert(mac, s);
            }
        }

        for mac in self.host.radio().macs() {
            if self.live.contains_key(&mac) || self.host.radio().link_state(mac) != Some(LinkState::Connected) {
                continue;
            }
            let Ok(notes) = self.host.radio_mut().poll(mac) else { continue };
            for n in notes {
                if let ringlab_core::proto::Message::Event(ev) = n.message {
                    let offline = matches!(ev, DeviceEvent::SegmentClosed(_) | DeviceEvent::LoggingComplete { .. });
                    bus.publish(Kind::Event, Some(mac), json!(ev));
                    if let (true, Some(st)) = (offline, self.host.offline_status(mac)) {
                        bus.publish(Kind::OfflineStatus, Some(mac), json!(st));
                    }
                }
            }
        }
    }

    /// Finish a live session and publish its remaining updates.
    pub fn stop(&mut self, mac: Mac, bus: &Bus) -> Option<Result<(), ringlab_core::hostkit::HostError>> {
        let mut s = self.live.remove(&mac)?;
        let r = self.host.stop_session(&mut s);
        publish_updates(bus, &mut s);
        self.finished.insert(mac, s);
        Some(r)
    }

    pub fn session(&self, mac: Mac) -> Option<&Session> {
        self.live.get(&mac).or_else(|| self.finished.get(&mac))
    }
}

/// Run the pacer until the state is dropped everywhere else.
pub fn spawn_pacer(state: &Arc<AppState>) -> tokio::task::JoinHandle<()> {
    let weak = Arc::downgrade(state);
    tokio::spawn(async move {
        let mut every = tokio::time::interval(PACER_TICK);
        every.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        loop {
            every.tick().await;
            let Some(st) = weak.upgrade() else { break };
            // The tick can take a while when many rings are streaming.
            if tokio::task::spawn_blocking(move || st.tick()).await.is_err() {
                break;
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pacing_follows_wall_clock_at_speed() {
        let mut p = Pacing::new(1_000, 4.0);
        let w = p.wall0;
        assert_eq!(p.target_at(w + Duration::from_millis(250), 1_000), 1_001_000);
    }

    #[test]
    fn pacing_rebases_after_a_jump() {
        let mut p = Pacing::new(0, 1.0);
        let w = p.wall0;
        assert_eq!(p.target_at(w + Duration::from_secs(1), 5_000_000), 5_000_000);
        assert_eq!(p.target_at(w + Duration::from_secs(2), 5_000_000), 6_000_000);
    }
}
