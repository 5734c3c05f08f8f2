//! Progress events published while a run is in flight.
//!
//! Every event carries a strictly increasing sequence number so clients
//! receiving them more than once can drop duplicates.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::scoring::ScoreRequest;

/// A preference-archive entry as shown to the tester.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceView {
    pub target: u32,
    pub label: String,
    pub canonical_key: String,
    pub rendered: String,
    pub score: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    GenerationProgress {
        generation: u32,
        coverage: f64,
        covered: usize,
        active_targets: usize,
        interactions_done: u32,
        moments_done: u32,
    },
    MomentOpened {
        moment: u32,
        generation: u32,
    },
    InteractionReady {
        request: ScoreRequest,
    },
    ScoresApplied {
        interaction_id: u32,
        scores: BTreeMap<String, i64>,
        /// The new preference entry, when the archive changed.
        update: Option<PreferenceView>,
    },
    InteractionSkipped {
        target: String,
        reason: String,
    },
    MomentClosed {
        moment: u32,
        interactions: u32,
        preference: Vec<PreferenceView>,
    },
    RunFinished {
        generations: u32,
        coverage: f64,
        suite_size: usize,
    },
    RunAborted {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    /// The event with its timestamp zeroed, for comparing runs.
    pub fn untimed(&self) -> Event {
        Event {
            timestamp_ms: 0,
            ..self.clone()
        }
    }
}

pub trait EventSink {
    fn emit(&mut self, event: &Event);
}

impl<F: FnMut(&Event)> EventSink for F {
    fn emit(&mut self, event: &Event) {
        self(event)
    }
}

/// Collects events in memory.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventSink for EventLog {
    fn emit(&mut self, event: &Event) {
        self.events.push(event.clone());
    }
}

/// Discards events.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&mut self, _: &Event) {}
}

/// Stamps events with sequence numbers and forwards them.
pub struct Emitter<'s> {
    next_seq: u64,
    sink: &'s mut dyn EventSink,
}

impl<'s> Emitter<'s> {
    pub fn new(sink: &'s mut dyn EventSink) -> Self {
        Emitter { next_seq: 1, sink }
    }

    pub fn emit(&mut self, kind: EventKind) {
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let event = Event {
            seq: self.next_seq,
            timestamp_ms,
            kind,
        };
        self.next_seq += 1;
        self.sink.emit(&event);
    }
}
