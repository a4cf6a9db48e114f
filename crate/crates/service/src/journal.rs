use std::collections::VecDeque;
use std::sync::Mutex;

use docent_core::orchestrator::{OutputEvent, TimedOutput};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

pub const DEFAULT_HISTORY_CAP: usize = 10_000;
const LIVE_CAPACITY: usize = 1024;

/// One output with its per-session sequence number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequenced {
    pub seq: u64,
    pub at: f64,
    pub event: OutputEvent,
}

impl Sequenced {
    pub fn kind(&self) -> &'static str {
        match self.event {
            OutputEvent::StateChanged { .. } => "state_changed",
            OutputEvent::AgentPerformance { .. } => "agent_performance",
            OutputEvent::MetricsUpdated { .. } => "metrics_updated",
            OutputEvent::RoomResolved { .. } => "room_resolved",
            OutputEvent::SessionEnded => "session_ended",
        }
    }

    pub fn is_end(&self) -> bool {
        matches!(self.event, OutputEvent::SessionEnded)
    }
}

struct Inner {
    events: VecDeque<Sequenced>,
    next_seq: u64,
}

/// Bounded, oldest-first-evicting event history plus a live fan-out.
pub struct Journal {
    inner: Mutex<Inner>,
    live: broadcast::Sender<Sequenced>,
    cap: usize,
}

impl Journal {
    pub fn new(cap: usize) -> Self {
        let (live, _) = broadcast::channel(LIVE_CAPACITY);
        Self { inner: Mutex::new(Inner { events: VecDeque::new(), next_seq: 1 }), live, cap: cap.max(1) }
    }

    /// Numbers and stores outputs; returns the last sequence number used.
    pub fn publish(&self, outputs: impl IntoIterator<Item = TimedOutput>) -> u64 {
        let mut inner = self.inner.lock().expect("journal poisoned");
        for output in outputs {
            let event = Sequenced { seq: inner.next_seq, at: output.at, event: output.event };
            inner.next_seq += 1;
            inner.events.push_back(event.clone());
            while inner.events.len() > self.cap {
                inner.events.pop_front();
            }
            // Nobody listening is fine.
            let _ = self.live.send(event);
        }
        inner.next_seq - 1
    }

    pub fn last_seq(&self) -> u64 {
        self.inner.lock().expect("journal poisoned").next_seq - 1
    }

    /// Stored events with `seq >= from`.
    pub fn since(&self, from: u64) -> Vec<Sequenced> {
        let inner = self.inner.lock().expect("journal poisoned");
        inner.events.iter().filter(|e| e.seq >= from).cloned().collect()
    }

    /// Stored events with `seq >= from` and a receiver for everything after
    /// them, taken atomically so nothing falls between the two.
    pub fn subscribe(&self, from: u64) -> (Vec<Sequenced>, broadcast::Receiver<Sequenced>) {
        let inner = self.inner.lock().expect("journal poisoned");
        let rx = self.live.subscribe();
        let backlog = inner.events.iter().filter(|e| e.seq >= from).cloned().collect();
        (backlog, rx)
    }
}
