//! Episode traces: everything the metric catalog is computed from.

use serde::{Deserialize, Serialize};

use crate::engine::{Accounting, EpisodeFlags, Event};
use crate::ids::JobId;
use crate::interpreter::{ActivationRecord, NoActionRecord};
use crate::protocol::ProtocolLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub case_id: String,
    pub instance: String,
    pub mode: String,
    pub controller: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub framework: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub job: JobId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub due_date: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_time: Option<f64>,
    pub stages: u32,
    pub completed_stages: u32,
}

/// Terminal state of the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSnapshot {
    pub end_time: f64,
    pub epochs: u32,
    pub flags: EpisodeFlags,
    pub accounting: Accounting,
    pub jobs: Vec<JobOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub meta: EpisodeMeta,
    pub world_events: Vec<Event>,
    pub activations: Vec<ActivationRecord>,
    pub no_actions: Vec<NoActionRecord>,
    pub protocol: ProtocolLog,
    pub last: FinalSnapshot,
}
