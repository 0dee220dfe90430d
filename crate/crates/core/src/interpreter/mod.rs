//! Maps realized events and protocol obligations to activations, masks and
//! controller payloads.

mod mask;
mod observation;
mod payload;

use serde::{Deserialize, Serialize};

pub use mask::{legal_actions, ActionMask, Target};
pub use observation::{
    build_observation, ranked_backlog, BacklogEntry, Capacity, MachineView, NodeSummary, Observation, Progress,
    ReadyJob,
};
pub use payload::{build_payload, DecisionPayload, Feedback, OptionEntry, OptionSummary, PayloadContext};

use crate::engine::{Event, WorldState};
use crate::ids::{AgentId, CellId, WorkItem};
use crate::protocol::{AuthorityMode, ContractState, ProtocolRuntime, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    BacklogSelection,
    AreaSelection,
    CellSelection,
    CellCommitment,
    LocalDispatch,
    BidSubmission,
    Reroute,
    EscalationHandling,
}

impl DecisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::BacklogSelection => "backlog_selection",
            DecisionKind::AreaSelection => "area_selection",
            DecisionKind::CellSelection => "cell_selection",
            DecisionKind::CellCommitment => "cell_commitment",
            DecisionKind::LocalDispatch => "local_dispatch",
            DecisionKind::BidSubmission => "bid_submission",
            DecisionKind::Reroute => "reroute",
            DecisionKind::EscalationHandling => "escalation_handling",
        }
    }

    /// Whether an agent at this level may hold the decision.
    pub fn fits(self, agent: AgentId) -> bool {
        use DecisionKind::*;
        match agent {
            AgentId::Plant => matches!(self, BacklogSelection | AreaSelection | CellSelection | EscalationHandling),
            AgentId::Area(_) => matches!(self, CellSelection | Reroute),
            AgentId::Cell(_) => matches!(self, CellCommitment | LocalDispatch | BidSubmission),
        }
    }

    pub fn is_commitment(self) -> bool {
        matches!(self, DecisionKind::CellCommitment | DecisionKind::BidSubmission)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopTag {
    Release,
    Routing,
    Commitment,
    Dispatch,
    Recovery,
}

/// What made an activation necessary: a world event (by sequence number)
/// or a protocol object (by id).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", content = "ref", rename_all = "snake_case")]
pub enum Cause {
    WorldEvent(u64),
    ProtocolObject(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemInfo {
    pub item: WorkItem,
    pub eligible_cells: Vec<CellId>,
    pub base_processing_time: f64,
    pub setup_family: u32,
    pub origin: Option<CellId>,
    pub due_date: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractRef {
    pub contract_id: u64,
    pub state: ContractState,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolContext {
    pub trigger: Cause,
    pub trigger_label: String,
    pub role_semantics: DecisionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_info: Option<ItemInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commitment_status: Option<ContractRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settlement_outcome: Option<String>,
    /// Restricts cell choices (reroute siblings, escalation targets).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<CellId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obligation: Option<u64>,
    /// Resolved by the contract-safe path without consulting a controller.
    #[serde(default)]
    pub runtime_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    Controller,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub action: usize,
    pub source: DecisionSource,
    /// Whether the first controller reply was accepted; absent when the
    /// controller was not consulted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_pass: Option<bool>,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRecord {
    pub epoch: u32,
    pub time: f64,
    pub agent: AgentId,
    pub cause: Cause,
    #[serde(rename = "loop")]
    pub loop_tag: LoopTag,
    pub kind: DecisionKind,
    pub ctx: ProtocolContext,
    pub domain_size: usize,
    pub legal_actions: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoActionRecord {
    pub epoch: u32,
    pub time: f64,
    pub agent: AgentId,
    pub kind: DecisionKind,
    pub cause: Cause,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obligation: Option<u64>,
}

/// One activation ready for a controller.
#[derive(Debug, Clone)]
pub struct Activation {
    pub record: ActivationRecord,
    pub mask: ActionMask,
    pub payload: DecisionPayload,
}

#[derive(Debug, Clone, Default)]
pub struct Interpretation {
    pub activations: Vec<Activation>,
    pub no_actions: Vec<NoActionRecord>,
}

pub fn loop_tag(kind: DecisionKind) -> LoopTag {
    match kind {
        DecisionKind::BacklogSelection => LoopTag::Release,
        DecisionKind::AreaSelection | DecisionKind::CellSelection => LoopTag::Routing,
        DecisionKind::CellCommitment | DecisionKind::BidSubmission => LoopTag::Commitment,
        DecisionKind::LocalDispatch => LoopTag::Dispatch,
        DecisionKind::Reroute | DecisionKind::EscalationHandling => LoopTag::Recovery,
    }
}

fn in_scope(agent: AgentId, pre: &WorldState, e: &Event) -> bool {
    let cell = e.subject.cell.or_else(|| e.subject.machine.map(|m| pre.config.hierarchy.cell_of(m)));
    match (agent, cell) {
        (AgentId::Plant, _) => true,
        (AgentId::Area(a), Some(c)) => pre.config.hierarchy.area_of(c) == a,
        (AgentId::Cell(x), Some(c)) => x == c,
        _ => false,
    }
}

fn recent_event_types(label: &str, realized: &[Event], agent: AgentId, pre: &WorldState) -> Vec<String> {
    let mut out = vec![label.to_string()];
    for e in realized.iter().rev().filter(|e| in_scope(agent, pre, e)) {
        let k = e.kind.as_str();
        if !out.iter().any(|x| x == k) {
            out.push(k.to_string());
        }
        if out.len() >= 6 {
            break;
        }
    }
    out
}

/// Decides who acts in the coming epoch and with which mask and payload.
/// Agents with an empty mask produce a no-action record instead.
pub fn interpret(realized: &[Event], runtime: &ProtocolRuntime, pre: &WorldState, mode: &AuthorityMode) -> Interpretation {
    let epoch = pre.decision_epochs + 1;
    let mut out = Interpretation::default();
    for agent in runtime.agent_order() {
        let Some(ctx) = runtime.pending_context(pre, agent) else { continue };
        debug_assert!(ctx.role_semantics.fits(agent), "{agent} cannot hold {:?}", ctx.role_semantics);
        let obs = build_observation(agent, pre, Some(&ctx));
        let mask = legal_actions(agent, &obs, &ctx, mode);
        if mask.is_empty() {
            out.no_actions.push(NoActionRecord {
                epoch: pre.decision_epochs,
                time: pre.clock,
                agent,
                kind: ctx.role_semantics,
                cause: ctx.trigger,
                obligation: ctx.obligation,
            });
            continue;
        }
        let recent = recent_event_types(&ctx.trigger_label, realized, agent, pre);
        let payload = build_payload(agent, &obs, &ctx, &mask, recent, runtime.working_memory(agent));
        let record = ActivationRecord {
            epoch,
            time: pre.clock,
            agent,
            cause: ctx.trigger,
            loop_tag: loop_tag(ctx.role_semantics),
            kind: ctx.role_semantics,
            domain_size: mask.domain_size,
            legal_actions: mask.legal_indices(),
            ctx,
            decision: None,
        };
        out.activations.push(Activation { record, mask, payload });
    }
    out
}

#[cfg(test)]
mod tests;
