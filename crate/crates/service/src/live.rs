//! Per-backend live fan-out. Every subscriber gets its own unbounded event
//! queue (events are never dropped) and a single-slot frame cell that keeps
//! only the newest overlay frame (frames are lossy per subscriber).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Weak};

use parking_lot::Mutex;
use serde::Serialize;
use tokio::sync::{mpsc, watch};

pub type Frame = Arc<Vec<u8>>;

struct Subscriber {
    id: u64,
    events: mpsc::UnboundedSender<Arc<str>>,
    frames: watch::Sender<Option<Frame>>,
}

#[derive(Default)]
pub struct LiveHub {
    subs: Mutex<Vec<Subscriber>>,
    next_id: AtomicU64,
    events_sent: AtomicU64,
    frames_sent: AtomicU64,
}

pub struct Subscription {
    id: u64,
    hub: Weak<LiveHub>,
    pub events: mpsc::UnboundedReceiver<Arc<str>>,
    pub frames: watch::Receiver<Option<Frame>>,
}

impl Drop for Subscription {
    fn drop(&mut self) {
        if let Some(hub) = self.hub.upgrade() {
            hub.subs.lock().retain(|s| s.id != self.id);
        }
    }
}

impl LiveHub {
    pub fn new() -> Arc<Self> {
        Arc::new(LiveHub::default())
    }

    /// New subscribers see only frames published after they joined.
    pub fn subscribe(self: &Arc<Self>) -> Subscription {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (etx, erx) = mpsc::unbounded_channel();
        let (ftx, frx) = watch::channel(None);
        self.subs.lock().push(Subscriber { id, events: etx, frames: ftx });
        Subscription { id, hub: Arc::downgrade(self), events: erx, frames: frx }
    }

    pub fn subscribers(&self) -> usize {
        self.subs.lock().len()
    }

    pub fn publish_event<T: Serialize>(&self, event: &T) {
        let text: Arc<str> = match serde_json::to_string(event) {
            Ok(t) => t.into(),
            Err(e) => {
                tracing::error!("unserializable live event: {e}");
                return;
            }
        };
        let mut subs = self.subs.lock();
        subs.retain(|s| s.events.send(text.clone()).is_ok());
        self.events_sent.fetch_add(subs.len() as u64, Ordering::Relaxed);
    }

    pub fn publish_frame(&self, frame: Frame) {
        let subs = self.subs.lock();
        for s in subs.iter() {
            s.frames.send_replace(Some(frame.clone()));
        }
        self.frames_sent.fetch_add(subs.len() as u64, Ordering::Relaxed);
    }

    /// `(events, frames)` handed to subscribers so far.
    pub fn counters(&self) -> (u64, u64) {
        (self.events_sent.load(Ordering::Relaxed), self.frames_sent.load(Ordering::Relaxed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn events_queue_frames_overwrite() {
        let hub = LiveHub::new();
        let mut sub = hub.subscribe();
        for i in 0..100 {
            hub.publish_event(&serde_json::json!({ "n": i }));
            hub.publish_frame(Arc::new(vec![i as u8]));
        }
        for i in 0..100 {
            let e = sub.events.recv().await.unwrap();
            assert_eq!(&*e, format!("{{\"n\":{i}}}"));
        }
        sub.frames.changed().await.unwrap();
        assert_eq!(sub.frames.borrow_and_update().as_deref(), Some(&vec![99u8]));
        assert!(!sub.frames.has_changed().unwrap());
    }

    #[tokio::test]
    async fn late_joiner_gets_no_backfill() {
        let hub = LiveHub::new();
        hub.publish_frame(Arc::new(vec![1]));
        let mut sub = hub.subscribe();
        assert!(!sub.frames.has_changed().unwrap());
        hub.publish_frame(Arc::new(vec![2]));
        sub.frames.changed().await.unwrap();
        assert_eq!(sub.frames.borrow().as_deref(), Some(&vec![2u8]));
    }

    #[test]
    fn dropped_subscription_unregisters() {
        let hub = LiveHub::new();
        let sub = hub.subscribe();
        assert_eq!(hub.subscribers(), 1);
        drop(sub);
        assert_eq!(hub.subscribers(), 0);
        hub.publish_event(&1);
    }
}
