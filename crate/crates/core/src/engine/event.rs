//! World events and the deterministic event queue.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{CellId, JobId, MachineId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    SetupStart,
    SetupComplete,
    Finish,
    Breakdown,
    Repair,
    SharedBacklogArrival,
    TransportStart,
    TransportComplete,
    StageReleaseReady,
    BufferWaitStart,
    BlockingStart,
    BufferAdmit,
    BlockingEnd,
}

impl EventKind {
    pub const ALL: [EventKind; 14] = [
        EventKind::Arrival,
        EventKind::SetupStart,
        EventKind::SetupComplete,
        EventKind::Finish,
        EventKind::Breakdown,
        EventKind::Repair,
        EventKind::SharedBacklogArrival,
        EventKind::TransportStart,
        EventKind::TransportComplete,
        EventKind::StageReleaseReady,
        EventKind::BufferWaitStart,
        EventKind::BlockingStart,
        EventKind::BufferAdmit,
        EventKind::BlockingEnd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::SetupStart => "setup_start",
            EventKind::SetupComplete => "setup_complete",
            EventKind::Finish => "finish",
            EventKind::Breakdown => "breakdown",
            EventKind::Repair => "repair",
            EventKind::SharedBacklogArrival => "shared_backlog_arrival",
            EventKind::TransportStart => "transport_start",
            EventKind::TransportComplete => "transport_complete",
            EventKind::StageReleaseReady => "stage_release_ready",
            EventKind::BufferWaitStart => "buffer_wait_start",
            EventKind::BlockingStart => "blocking_start",
            EventKind::BufferAdmit => "buffer_admit",
            EventKind::BlockingEnd => "blocking_end",
        }
    }

    /// Events that count as a stage item making progress.
    pub fn is_progress(self) -> bool {
        matches!(self, EventKind::Finish | EventKind::TransportComplete)
    }
}

/// Entities an event refers to; unused fields are omitted when serialized.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job: Option<JobId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine: Option<MachineId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<CellId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub jobs: Vec<JobId>,
}

impl Subject {
    pub fn job(job: JobId, stage: u32) -> Self {
        Self { job: Some(job), stage: Some(stage), ..Default::default() }
    }

    pub fn job_at(job: JobId, stage: u32, cell: CellId) -> Self {
        Self { cell: Some(cell), ..Self::job(job, stage) }
    }

    pub fn machine(machine: MachineId, cell: CellId) -> Self {
        Self { machine: Some(machine), cell: Some(cell), ..Default::default() }
    }

    pub fn with_machine(mut self, machine: MachineId) -> Self {
        self.machine = Some(machine);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub subject: Subject,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key {
    t: f64,
    seq: u64,
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t.total_cmp(&other.t).then(self.seq.cmp(&other.seq))
    }
}

/// Pending events ordered by (time, insertion sequence).
#[derive(Debug, Clone, Default)]
pub struct EventQueue {
    events: BTreeMap<Key, Event>,
    times: BTreeMap<u64, f64>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, t: f64, kind: EventKind, subject: Subject) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.events.insert(Key { t, seq }, Event { t, kind, subject, seq });
        self.times.insert(seq, t);
        seq
    }

    /// Removes a pending event; returns it if it was still queued.
    pub fn cancel(&mut self, seq: u64) -> Option<Event> {
        let t = self.times.remove(&seq)?;
        self.events.remove(&Key { t, seq })
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.events.keys().next().map(|k| k.t)
    }

    /// Pops the head if it is due at or before `now`.
    pub fn pop_due(&mut self, now: f64) -> Option<Event> {
        let key = *self.events.keys().next()?;
        if key.t > now {
            return None;
        }
        self.times.remove(&key.seq);
        self.events.remove(&key)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.events.values()
    }

    /// True when anything other than future breakdowns is pending.
    pub fn has_progress_capable(&self) -> bool {
        self.events.values().any(|e| e.kind != EventKind::Breakdown)
    }
}

impl Serialize for EventQueue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("EventQueue", 2)?;
        st.serialize_field("next_seq", &self.next_seq)?;
        st.serialize_field("events", &self.events.values().collect::<Vec<_>>())?;
        st.end()
    }
}
