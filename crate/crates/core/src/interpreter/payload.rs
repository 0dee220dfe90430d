//! Controller-facing decision payloads.

use serde::{Deserialize, Serialize};

use super::mask::{ActionMask, Target};
use super::observation::{Capacity, NodeSummary, Observation, Progress};
use super::{DecisionKind, ProtocolContext};
use crate::ids::AgentId;

const SHARED_FACTORS: [&str; 2] = [
    "Use current context, visible feedback, and working_memory only.",
    "Prefer feasible actions that reduce congestion and future reroute pressure.",
];

fn kind_factor(kind: DecisionKind) -> &'static str {
    match kind {
        DecisionKind::BacklogSelection => "Release work whose due date is nearest while respecting the WIP cap.",
        DecisionKind::AreaSelection => "Pick an area whose eligible cells can absorb the stage soon.",
        DecisionKind::CellSelection => "Pick an eligible cell with spare machines and a short inbound queue.",
        DecisionKind::CellCommitment => "Accept only work this cell can actually process.",
        DecisionKind::LocalDispatch => "Bind ready work to idle machines, avoiding needless setups.",
        DecisionKind::BidSubmission => "Bid when the cell can finish the stage competitively.",
        DecisionKind::Reroute => "Move rejected work to a sibling cell that can take it.",
        DecisionKind::EscalationHandling => "Re-award escalated work to a cell that is still operational.",
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptionSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_jobs: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backlog_jobs: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_kwh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idle_machines: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inbound_occupancy: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operational: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimated_completion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference_rank: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub due_date: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remaining_stages: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup_needed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processing_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionEntry {
    pub action: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<String>,
    pub summary: OptionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub progress: Progress,
    pub capacity: Capacity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadContext {
    pub feedback: Feedback,
    pub recent_event_types: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_job_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_stage_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub working_memory: Vec<String>,
}

/// Exactly what a controller sees for one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPayload {
    pub agent: String,
    pub role: String,
    pub kind: DecisionKind,
    pub legal_actions: Vec<usize>,
    pub decision_factors: Vec<String>,
    pub options: Vec<OptionEntry>,
    pub context: PayloadContext,
}

impl DecisionPayload {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("payload serializes")
    }
}

fn node_summary(n: &NodeSummary, cell_level: bool) -> OptionSummary {
    let mut s = OptionSummary {
        active_jobs: Some(n.active_jobs),
        backlog_jobs: Some(n.backlog_jobs),
        energy_kwh: Some(round1(n.energy_kwh)),
        ..Default::default()
    };
    if cell_level {
        s.idle_machines = Some(n.idle_machines);
        s.inbound_occupancy = Some(n.inbound_occupancy);
        s.operational = Some(n.down_machines < n.machines);
        s.estimated_completion = n.estimated_completion.map(round2);
    }
    s
}

/// Assembles the payload; options come only from `obs` and cover exactly
/// the legal indices of `mask`.
pub fn build_payload(
    agent: AgentId,
    obs: &Observation,
    ctx: &ProtocolContext,
    mask: &ActionMask,
    recent_event_types: Vec<String>,
    working_memory: Vec<String>,
) -> DecisionPayload {
    let legal = mask.legal_indices();
    let own_cell = match obs {
        Observation::Cell { cell, .. } => Some(cell),
        _ => None,
    };
    let options = legal
        .iter()
        .map(|&i| {
            let mut e = OptionEntry {
                action: i,
                job_id: None,
                stage_id: None,
                area_id: None,
                cell_id: None,
                machine_id: None,
                decision: None,
                summary: OptionSummary::default(),
            };
            match mask.target(i).expect("legal index has semantics") {
                Target::Job { job, stage } => {
                    e.job_id = Some(job.0);
                    e.stage_id = Some(stage);
                    if let Observation::Plant { backlog, .. } = obs {
                        if let Some(b) = backlog.iter().find(|b| b.job == job) {
                            e.summary.due_date = b.due_date.map(round2);
                            e.summary.remaining_stages = Some(b.remaining_stages);
                        }
                    }
                }
                Target::Area { area } => {
                    e.area_id = Some(area.0);
                    if let Observation::Plant { areas, .. } = obs {
                        e.summary = node_summary(&areas[area.index()], false);
                    }
                }
                Target::Cell { cell } => {
                    e.cell_id = Some(cell.0);
                    if let Some(n) = obs.cells().iter().find(|n| n.id == cell.0) {
                        e.summary = node_summary(n, true);
                    }
                    if let Some(c) = ctx.candidates.as_ref() {
                        if ctx.role_semantics == DecisionKind::Reroute {
                            e.summary.preference_rank = c.iter().position(|x| *x == cell).map(|p| p as u32);
                        }
                    }
                }
                Target::Binding { job, machine } => {
                    e.job_id = Some(job.0);
                    e.machine_id = Some(machine.0);
                    if let Observation::Cell { machines, ready, .. } = obs {
                        let r = ready.iter().find(|r| r.job == job).expect("binding names a ready job");
                        let m = machines.iter().find(|m| m.id == machine).expect("binding names a machine");
                        e.stage_id = Some(r.stage);
                        e.summary.setup_needed = Some(m.family != Some(r.setup_family));
                        e.summary.processing_time = Some(round2(r.processing_time));
                    }
                }
                t @ (Target::Accept | Target::Reject | Target::Bid | Target::Decline) => {
                    e.decision = Some(
                        match t {
                            Target::Accept => "accept",
                            Target::Reject => "reject",
                            Target::Bid => "bid",
                            _ => "decline",
                        }
                        .to_string(),
                    );
                    if let Some(n) = own_cell {
                        e.summary = node_summary(n, true);
                    }
                }
            }
            e
        })
        .collect();

    let mut factors: Vec<String> = SHARED_FACTORS.iter().map(|s| s.to_string()).collect();
    factors.push(kind_factor(ctx.role_semantics).to_string());
    let item = ctx.item_info.as_ref().map(|i| i.item);
    DecisionPayload {
        agent: agent.to_string(),
        role: agent.role().to_string(),
        kind: ctx.role_semantics,
        legal_actions: legal,
        decision_factors: factors,
        options,
        context: PayloadContext {
            feedback: Feedback { progress: obs.progress().clone(), capacity: obs.capacity().clone() },
            recent_event_types,
            selected_job_id: item.map(|i| i.job.0),
            selected_stage_id: item.map(|i| i.stage),
            working_memory,
        },
    }
}
