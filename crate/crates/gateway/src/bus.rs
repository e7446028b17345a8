//! Fan-out of API messages to stream subscribers, one bounded queue each.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, Weak};
use std::time::{SystemTime, UNIX_EPOCH};

use tokio::sync::Notify;

use crate::api::{ApiMessage, Kind};
use ringlab_core::Mac;

/// Default per-client queue length, about eight seconds of render frames.
pub const CLIENT_QUEUE: usize = 256;

#[derive(Debug)]
pub struct ClientQueue {
    pub id: String,
    cap: usize,
    queue: Mutex<VecDeque<ApiMessage>>,
    notify: Notify,
    dropped: AtomicU64,
}

impl ClientQueue {
    /// When full, the oldest droppable message goes. Messages that must not
    /// be lost are kept even past the limit.
    fn push(&self, msg: ApiMessage) {
        let mut q = self.queue.lock().expect("queue lock");
        if q.len() >= self.cap {
            if let Some(i) = q.iter().position(|m| m.kind.droppable()) {
                q.remove(i);
                self.dropped.fetch_add(1, Ordering::Relaxed);
            } else if msg.kind.droppable() {
                self.dropped.fetch_add(1, Ordering::Relaxed);
                return;
            }
        }
        q.push_back(msg);
        drop(q);
        self.notify.notify_one();
    }

    pub fn try_next(&self) -> Option<ApiMessage> {
        self.queue.lock().expect("queue lock").pop_front()
    }

    pub async fn next(&self) -> ApiMessage {
        loop {
            if let Some(m) = self.try_next() {
                return m;
            }
            self.notify.notified().await;
        }
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.queue.lock().expect("queue lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Default)]
struct Inner {
    seq: u64,
    clients: Vec<Weak<ClientQueue>>,
}

#[derive(Debug, Default)]
pub struct Bus {
    inner: Mutex<Inner>,
}

fn wall_us() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_micros() as u64)
}

impl Bus {
    pub fn subscribe(&self, id: String, cap: usize) -> Arc<ClientQueue> {
        let q = Arc::new(ClientQueue {
            id,
            cap: cap.max(1),
            queue: Mutex::new(VecDeque::new()),
            notify: Notify::new(),
            dropped: AtomicU64::new(0),
        });
        self.inner.lock().expect("bus lock").clients.push(Arc::downgrade(&q));
        q
    }

    /// Stamp a message and queue it for every live subscriber. Sequence
    /// numbers and queue order agree because both happen under one lock.
    pub fn publish(&self, kind: Kind, mac: Option<Mac>, body: serde_json::Value) -> ApiMessage {
        let mut inner = self.inner.lock().expect("bus lock");
        inner.seq += 1;
        let msg = ApiMessage { seq: inner.seq, server_time_us: wall_us(), kind, mac, body };
        inner.clients.retain(|w| match w.upgrade() {
            Some(c) => {
                c.push(msg.clone());
                true
            }
            None => false,
        });
        msg
    }

    pub fn subscribers(&self) -> usize {
        self.inner.lock().expect("bus lock").clients.iter().filter(|w| w.strong_count() > 0).count()
    }
}
