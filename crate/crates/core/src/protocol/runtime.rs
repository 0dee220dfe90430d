//! Protocol runtime: obligations, contracts, bid rounds, recovery.
//!
//! The runtime owns every pending protocol obligation. The engine asks it
//! whether a decision is required; the interpreter asks it what context each
//! agent should act under; decided activations come back through
//! [`ProtocolRuntime::apply`] and turn into physical actions plus protocol
//! objects.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::mode::{AuthorityMode, RoutingAuthority};
use super::objects::{Contract, ContractState, ObjectKind, ProtocolObject, Provenance, SettlementKind, SettlementRecord};
use crate::engine::{DecisionBoundary, Event, EventKind, JobStatus, PhysicalAction, WorldState};
use crate::ids::{AgentId, AreaId, CellId, WorkItem};
use crate::interpreter::{
    build_observation, Activation, Cause, ContractRef, DecisionKind, ItemInfo, NoActionRecord, Observation,
    ProtocolContext, Target,
};
use crate::instance::InstanceConfig;

/// Plant-level recoveries allowed per work item before it goes back to the
/// backlog.
pub const FALLBACK_BUDGET: u32 = 3;
const MEMORY_DEPTH: usize = 3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProtocolError {
    #[error("activation for {agent} does not match its pending obligation")]
    StaleActivation { agent: AgentId },
    #[error("activation at epoch {epoch} for {agent} carries no decision")]
    Undecided { epoch: u32, agent: AgentId },
    #[error("action {action} decodes to {target:?}, which does not fit a {kind:?} decision")]
    BadTarget { action: usize, target: Option<Target>, kind: DecisionKind },
    #[error("contract {0} cannot move from {1:?} to {2:?}")]
    Lifecycle(u64, ContractState, ContractState),
    #[error("no routing state for {0:?}")]
    UnknownItem(WorkItem),
}

/// A decision the protocol owes to a specific agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obligation {
    pub id: u64,
    pub agent: AgentId,
    pub kind: DecisionKind,
    pub item: WorkItem,
    pub cause: Cause,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contract: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<CellId>>,
    #[serde(default)]
    pub runtime_fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct BidRound {
    area: Option<AreaId>,
    pending: BTreeSet<CellId>,
    /// (estimate, queue length, cell), sorted once the round closes.
    bids: Vec<(f64, u32, CellId)>,
    awarded: BTreeSet<CellId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ItemRouting {
    area: Option<AreaId>,
    failed: BTreeSet<CellId>,
    plant_attempts: u32,
    round: Option<BidRound>,
}

enum PlantRecovery {
    Escalation,
    Reselect,
    Fallback,
}

/// Everything the runtime emitted during an episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolLog {
    pub objects: Vec<ProtocolObject>,
    pub settlements: Vec<SettlementRecord>,
    pub contracts: Vec<Contract>,
}

#[derive(Debug, Clone)]
pub struct ProtocolRuntime {
    mode: AuthorityMode,
    agents: Vec<AgentId>,
    queues: BTreeMap<AgentId, VecDeque<Obligation>>,
    items: BTreeMap<WorkItem, ItemRouting>,
    /// Committed contract per routed stage, until its finish.
    active: BTreeMap<WorkItem, u64>,
    memory: BTreeMap<AgentId, VecDeque<String>>,
    backlog_cause: Option<Cause>,
    dispatch_cause: BTreeMap<CellId, Cause>,
    /// Cells that received work while fully down, awaiting a no-action record.
    arrival_pending: BTreeSet<CellId>,
    next_obligation: u64,
    log: ProtocolLog,
}

impl ProtocolRuntime {
    pub fn new(mode: AuthorityMode, config: &InstanceConfig) -> Self {
        let h = &config.hierarchy;
        let mut agents = vec![AgentId::Plant];
        agents.extend(h.areas.iter().map(|a| AgentId::Area(a.id)));
        agents.extend(h.cells.iter().map(|c| AgentId::Cell(c.id)));
        Self {
            mode,
            agents,
            queues: BTreeMap::new(),
            items: BTreeMap::new(),
            active: BTreeMap::new(),
            memory: BTreeMap::new(),
            backlog_cause: None,
            dispatch_cause: BTreeMap::new(),
            arrival_pending: BTreeSet::new(),
            next_obligation: 0,
            log: ProtocolLog::default(),
        }
    }

    pub fn mode(&self) -> &AuthorityMode {
        &self.mode
    }

    /// Plant, then areas, then cells, each by ascending id.
    pub fn agent_order(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents.iter().copied()
    }

    pub fn log(&self) -> &ProtocolLog {
        &self.log
    }

    pub fn into_log(self) -> ProtocolLog {
        self.log
    }

    pub fn pending_obligations(&self) -> usize {
        self.queues.values().map(|q| q.len()).sum()
    }

    pub fn working_memory(&self, agent: AgentId) -> Vec<String> {
        self.memory.get(&agent).map(|m| m.iter().cloned().collect()).unwrap_or_default()
    }

    fn item_info(state: &WorldState, item: WorkItem) -> Option<ItemInfo> {
        let job = &state.jobs[item.job.index()];
        let spec = state.spec(item.job);
        let stage = spec.route.get(item.stage as usize)?;
        Some(ItemInfo {
            item,
            eligible_cells: stage.eligible_cells.clone(),
            base_processing_time: stage.base_processing_time,
            setup_family: stage.setup_family,
            origin: job.last_cell,
            due_date: spec.due_date,
        })
    }

    /// Context under which `agent` must act now, if any. Shared by the
    /// decision boundary and the interpreter so both agree on who acts.
    pub fn pending_context(&self, state: &WorldState, agent: AgentId) -> Option<ProtocolContext> {
        if let Some(ob) = self.queues.get(&agent).and_then(|q| q.front()) {
            let contract = ob.contract.map(|id| {
                let c = &self.log.contracts[id as usize];
                ContractRef { contract_id: id, state: c.state, provenance: c.provenance }
            });
            return Some(ProtocolContext {
                trigger: ob.cause,
                trigger_label: ob.label.clone(),
                role_semantics: ob.kind,
                item_info: Self::item_info(state, ob.item),
                commitment_status: contract,
                settlement_outcome: None,
                candidates: ob.candidates.clone(),
                obligation: Some(ob.id),
                runtime_fallback: ob.runtime_fallback,
            });
        }
        let bare = |kind, label: &str, trigger| ProtocolContext {
            trigger,
            trigger_label: label.to_string(),
            role_semantics: kind,
            item_info: None,
            commitment_status: None,
            settlement_outcome: None,
            candidates: None,
            obligation: None,
            runtime_fallback: false,
        };
        match agent {
            AgentId::Plant => {
                if state.backlog_candidates().is_empty() {
                    return None;
                }
                let trigger = self.backlog_cause.unwrap_or(Cause::WorldEvent(state.initial_backlog_seq.unwrap_or(0)));
                Some(bare(DecisionKind::BacklogSelection, "release_backlog_window", trigger))
            }
            AgentId::Area(_) => None,
            AgentId::Cell(c) => {
                let feasible = !state.cells[c.index()].ready.is_empty() && state.idle_machines(c) > 0;
                if !feasible && !self.arrival_pending.contains(&c) {
                    return None;
                }
                let trigger = self.dispatch_cause.get(&c).copied().unwrap_or(Cause::WorldEvent(0));
                Some(bare(DecisionKind::LocalDispatch, "dispatch_window", trigger))
            }
        }
    }

    fn push(&mut self, mut ob: Obligation) {
        ob.id = self.next_obligation;
        self.next_obligation += 1;
        self.queues.entry(ob.agent).or_default().push_back(ob);
    }

    fn obligation(agent: AgentId, kind: DecisionKind, item: WorkItem, cause: Cause, label: &str) -> Obligation {
        Obligation {
            id: 0,
            agent,
            kind,
            item,
            cause,
            label: label.to_string(),
            contract: None,
            candidates: None,
            runtime_fallback: false,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        state: &WorldState,
        epoch: u32,
        kind: ObjectKind,
        sender: AgentId,
        receiver: AgentId,
        item: Option<WorkItem>,
        contract: Option<u64>,
        cell: Option<CellId>,
    ) -> u64 {
        let id = self.log.objects.len() as u64;
        self.log.objects.push(ProtocolObject {
            id,
            kind,
            sender,
            receiver,
            epoch,
            time: state.clock,
            item,
            contract,
            cell,
            estimate: None,
            reason: None,
        });
        id
    }

    fn settle(&mut self, state: &WorldState, epoch: u32, kind: SettlementKind, contract: u64) {
        let c = &self.log.contracts[contract as usize];
        let rec = SettlementRecord {
            seq: self.log.settlements.len() as u64,
            epoch,
            time: state.clock,
            kind,
            contract,
            item: c.item,
            cell: c.cell,
            provenance: c.provenance,
        };
        self.log.settlements.push(rec);
    }

    fn transition(&mut self, contract: u64, next: ContractState) -> Result<(), ProtocolError> {
        let c = &mut self.log.contracts[contract as usize];
        c.transition(next).map_err(|from| ProtocolError::Lifecycle(contract, from, next))
    }

    fn issuer_for(&self, provenance: Provenance, cell: CellId, state: &WorldState) -> AgentId {
        match provenance {
            Provenance::ChainAssignment | Provenance::BidAward => AgentId::Area(state.config.hierarchy.area_of(cell)),
            Provenance::Reroute if self.mode.u => AgentId::Area(state.config.hierarchy.area_of(cell)),
            _ => AgentId::Plant,
        }
    }

    /// Proposes a contract for `item` at `cell` and hands the cell its
    /// commitment decision, or commits implicitly where the plant awards
    /// directly without a reject right.
    #[allow(clippy::too_many_arguments)]
    fn propose(
        &mut self,
        state: &WorldState,
        epoch: u32,
        item: WorkItem,
        cell: CellId,
        provenance: Provenance,
        offer_kind: ObjectKind,
        actions: &mut Vec<PhysicalAction>,
    ) -> Result<(), ProtocolError> {
        let issuer = self.issuer_for(provenance, cell, state);
        let id = self.log.contracts.len() as u64;
        self.log.contracts.push(Contract {
            contract_id: id,
            item,
            cell,
            issuer,
            state: ContractState::Proposed,
            provenance,
            history: Vec::new(),
        });
        self.settle(state, epoch, SettlementKind::Proposed, id);
        let offer = self.emit(state, epoch, offer_kind, issuer, AgentId::Cell(cell), Some(item), Some(id), Some(cell));
        let implicit = self.mode.routing_authority == RoutingAuthority::PlantDirect && !self.mode.can_reject();
        if implicit {
            return self.resolve(state, epoch, id, true, actions);
        }
        let mut ob = Self::obligation(AgentId::Cell(cell), DecisionKind::CellCommitment, item, Cause::ProtocolObject(offer), "contract_offer");
        ob.contract = Some(id);
        self.push(ob);
        Ok(())
    }

    /// Settles a commitment decision. Acceptance also requires the cell to
    /// still have an operational machine.
    fn resolve(
        &mut self,
        state: &WorldState,
        epoch: u32,
        contract: u64,
        accept: bool,
        actions: &mut Vec<PhysicalAction>,
    ) -> Result<(), ProtocolError> {
        let (item, cell, issuer) = {
            let c = &self.log.contracts[contract as usize];
            (c.item, c.cell, c.issuer)
        };
        if accept && state.operational(cell) {
            self.transition(contract, ContractState::Committed)?;
            self.settle(state, epoch, SettlementKind::Committed, contract);
            self.emit(state, epoch, ObjectKind::Commitment, AgentId::Cell(cell), issuer, Some(item), Some(contract), Some(cell));
            self.active.insert(item, contract);
            self.items.remove(&item);
            actions.push(PhysicalAction::Release { job: item.job, cell });
            return Ok(());
        }
        self.transition(contract, ContractState::Rejected)?;
        self.settle(state, epoch, SettlementKind::Rejected, contract);
        let cause = if self.mode.can_reject() {
            let id = self.emit(state, epoch, ObjectKind::Rejection, AgentId::Cell(cell), issuer, Some(item), Some(contract), Some(cell));
            self.log.objects[id as usize].reason = Some(if accept { "infeasible" } else { "rejected" }.to_string());
            Cause::ProtocolObject(id)
        } else {
            Cause::ProtocolObject(self.log.objects.len().saturating_sub(1) as u64)
        };
        self.routing(item)?.failed.insert(cell);
        self.recover(state, epoch, item, cell, cause, actions)
    }

    fn routing(&mut self, item: WorkItem) -> Result<&mut ItemRouting, ProtocolError> {
        self.items.get_mut(&item).ok_or(ProtocolError::UnknownItem(item))
    }

    /// Eligible cells of the current stage that have not failed this item.
    fn remaining_cells(&self, state: &WorldState, item: WorkItem) -> Vec<CellId> {
        let failed = self.items.get(&item).map(|r| r.failed.clone()).unwrap_or_default();
        Self::item_info(state, item)
            .map(|i| i.eligible_cells.into_iter().filter(|c| !failed.contains(c)).collect())
            .unwrap_or_default()
    }

    fn recover(
        &mut self,
        state: &WorldState,
        epoch: u32,
        item: WorkItem,
        rejecting: CellId,
        cause: Cause,
        actions: &mut Vec<PhysicalAction>,
    ) -> Result<(), ProtocolError> {
        let h = &state.config.hierarchy;
        if self.mode.u {
            let area = h.area_of(rejecting);
            let mut siblings: Vec<CellId> =
                self.remaining_cells(state, item).into_iter().filter(|c| h.area_of(*c) == area).collect();
            siblings.sort_by(|a, b| state.idle_machines(*b).cmp(&state.idle_machines(*a)).then(a.cmp(b)));
            if siblings.is_empty() {
                let id = self.emit(state, epoch, ObjectKind::Escalation, AgentId::Area(area), AgentId::Plant, Some(item), None, None);
                self.log.objects[id as usize].reason = Some("area_reroute_exhausted".to_string());
                return self.plant_recover(state, epoch, item, PlantRecovery::Fallback, Cause::ProtocolObject(id), actions);
            }
            let mut ob = Self::obligation(AgentId::Area(area), DecisionKind::Reroute, item, cause, "cell_rejection");
            ob.candidates = Some(siblings);
            self.push(ob);
            return Ok(());
        }
        if self.mode.h {
            let next = self.routing(item)?.round.as_ref().and_then(|r| {
                r.bids.iter().map(|b| b.2).find(|c| !r.awarded.contains(c))
            });
            let failed = self.items[&item].failed.clone();
            if let Some(cell) = next.filter(|c| !failed.contains(c)) {
                if let Some(r) = self.routing(item)?.round.as_mut() {
                    r.awarded.insert(cell);
                }
                return self.propose(state, epoch, item, cell, Provenance::BidAward, ObjectKind::Award, actions);
            }
            return self.plant_recover(state, epoch, item, PlantRecovery::Fallback, cause, actions);
        }
        if self.mode.p {
            let id = self.emit(state, epoch, ObjectKind::Escalation, AgentId::Cell(rejecting), AgentId::Plant, Some(item), None, Some(rejecting));
            self.log.objects[id as usize].reason = Some("commitment_failed".to_string());
            return self.plant_recover(state, epoch, item, PlantRecovery::Escalation, Cause::ProtocolObject(id), actions);
        }
        if self.mode.routing_authority == RoutingAuthority::PlantDirect {
            return self.plant_recover(state, epoch, item, PlantRecovery::Reselect, cause, actions);
        }
        self.plant_recover(state, epoch, item, PlantRecovery::Fallback, cause, actions)
    }

    fn plant_recover(
        &mut self,
        state: &WorldState,
        epoch: u32,
        item: WorkItem,
        how: PlantRecovery,
        cause: Cause,
        actions: &mut Vec<PhysicalAction>,
    ) -> Result<(), ProtocolError> {
        let r = self.routing(item)?;
        r.plant_attempts += 1;
        if r.plant_attempts > FALLBACK_BUDGET {
            let id = self.emit(state, epoch, ObjectKind::Escalation, AgentId::Plant, AgentId::Plant, Some(item), None, None);
            self.log.objects[id as usize].reason = Some("fallback_budget_exhausted".to_string());
            self.items.remove(&item);
            actions.push(PhysicalAction::ReturnToBacklog { job: item.job });
            return Ok(());
        }
        let mut candidates = self.remaining_cells(state, item);
        if candidates.is_empty() {
            candidates = Self::item_info(state, item).map(|i| i.eligible_cells).unwrap_or_default();
        }
        let (kind, label, fallback) = match how {
            PlantRecovery::Escalation => (DecisionKind::EscalationHandling, "escalation", false),
            PlantRecovery::Reselect => (DecisionKind::CellSelection, "commitment_failure", false),
            PlantRecovery::Fallback => (DecisionKind::EscalationHandling, "plant_fallback", true),
        };
        let mut ob = Self::obligation(AgentId::Plant, kind, item, cause, label);
        ob.candidates = Some(candidates);
        ob.runtime_fallback = fallback;
        self.push(ob);
        Ok(())
    }

    fn remember(&mut self, agent: AgentId, note: String) {
        let m = self.memory.entry(agent).or_default();
        m.push_back(note);
        while m.len() > MEMORY_DEPTH {
            m.pop_front();
        }
    }

    fn close_round(&mut self, state: &WorldState, epoch: u32, item: WorkItem, actions: &mut Vec<PhysicalAction>) -> Result<(), ProtocolError> {
        let round = self.routing(item)?.round.as_mut().expect("round is open");
        if !round.pending.is_empty() {
            return Ok(());
        }
        round.bids.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let best = round.bids.first().map(|b| b.2);
        match best {
            Some(cell) => {
                round.awarded.insert(cell);
                self.propose(state, epoch, item, cell, Provenance::BidAward, ObjectKind::Award, actions)
            }
            None => {
                let area = round.area;
                let sender = area.map(AgentId::Area).unwrap_or(AgentId::Plant);
                let id = self.emit(state, epoch, ObjectKind::Escalation, sender, AgentId::Plant, Some(item), None, None);
                self.log.objects[id as usize].reason = Some("no_bids".to_string());
                self.plant_recover(state, epoch, item, PlantRecovery::Fallback, Cause::ProtocolObject(id), actions)
            }
        }
    }

    fn open_round(&mut self, state: &WorldState, epoch: u32, item: WorkItem, area: AreaId, cause: Cause, actions: &mut Vec<PhysicalAction>) -> Result<(), ProtocolError> {
        let h = &state.config.hierarchy;
        let candidates: Vec<CellId> = self.remaining_cells(state, item).into_iter().filter(|c| h.area_of(*c) == area).collect();
        self.routing(item)?.round = Some(BidRound { area: Some(area), pending: candidates.iter().copied().collect(), ..Default::default() });
        for c in &candidates {
            let ob = Self::obligation(AgentId::Cell(*c), DecisionKind::BidSubmission, item, cause, "bid_request");
            self.push(ob);
        }
        self.close_round(state, epoch, item, actions)
    }

    /// Applies one epoch's decided activations and returns the physical
    /// actions to commit, in activation order.
    pub fn apply(&mut self, pre: &WorldState, epoch: u32, decided: &[Activation]) -> Result<Vec<PhysicalAction>, ProtocolError> {
        let mut actions = Vec::new();
        for act in decided {
            let rec = &act.record;
            let agent = rec.agent;
            let decision = rec.decision.as_ref().ok_or(ProtocolError::Undecided { epoch: rec.epoch, agent })?;
            let target = act.mask.target(decision.action);
            let bad = || ProtocolError::BadTarget { action: decision.action, target, kind: rec.kind };
            if let Some(id) = rec.ctx.obligation {
                let q = self.queues.get_mut(&agent).ok_or(ProtocolError::StaleActivation { agent })?;
                if q.front().map(|f| f.id) != Some(id) {
                    return Err(ProtocolError::StaleActivation { agent });
                }
                q.pop_front();
            }
            self.remember(agent, format!("epoch {} {} -> action {}", rec.epoch, rec.kind.as_str(), decision.action));
            let item = rec.ctx.item_info.as_ref().map(|i| i.item);
            match (rec.kind, target) {
                (DecisionKind::BacklogSelection, Some(Target::Job { job, stage })) => {
                    let item = WorkItem::new(job, stage);
                    actions.push(PhysicalAction::SelectBacklog { job });
                    self.items.insert(item, ItemRouting::default());
                    let cause = rec.cause;
                    let (kind, label) = if self.mode.uses_areas() {
                        (DecisionKind::AreaSelection, "release_area_selection_window")
                    } else {
                        (DecisionKind::CellSelection, "release_cell_selection_window")
                    };
                    let ob = Self::obligation(AgentId::Plant, kind, item, cause, label);
                    self.push(ob);
                }
                (DecisionKind::AreaSelection, Some(Target::Area { area })) => {
                    let item = item.ok_or_else(bad)?;
                    self.routing(item)?.area = Some(area);
                    let obj = self.emit(pre, epoch, ObjectKind::Allocation, AgentId::Plant, AgentId::Area(area), Some(item), None, None);
                    if self.mode.h {
                        self.open_round(pre, epoch, item, area, Cause::ProtocolObject(obj), &mut actions)?;
                    } else {
                        let ob = Self::obligation(AgentId::Area(area), DecisionKind::CellSelection, item, Cause::ProtocolObject(obj), "area_assignment");
                        self.push(ob);
                    }
                }
                (DecisionKind::CellSelection | DecisionKind::EscalationHandling | DecisionKind::Reroute, Some(Target::Cell { cell })) => {
                    let item = item.ok_or_else(bad)?;
                    let provenance = match (rec.kind, agent) {
                        (DecisionKind::CellSelection, AgentId::Plant) if rec.ctx.commitment_status.is_none() && rec.ctx.candidates.is_none() => {
                            Provenance::DirectAward
                        }
                        (DecisionKind::CellSelection, AgentId::Area(_)) => Provenance::ChainAssignment,
                        (DecisionKind::EscalationHandling, _) if rec.ctx.runtime_fallback => Provenance::Fallback,
                        _ => Provenance::Reroute,
                    };
                    self.propose(pre, epoch, item, cell, provenance, ObjectKind::Allocation, &mut actions)?;
                }
                (DecisionKind::CellCommitment, Some(t @ (Target::Accept | Target::Reject))) => {
                    let contract = rec.ctx.commitment_status.as_ref().ok_or_else(bad)?.contract_id;
                    self.resolve(pre, epoch, contract, t == Target::Accept, &mut actions)?;
                }
                (DecisionKind::BidSubmission, Some(t @ (Target::Bid | Target::Decline))) => {
                    let item = item.ok_or_else(bad)?;
                    let AgentId::Cell(cell) = agent else { return Err(bad()) };
                    let mediator = self.routing(item)?.area.map(AgentId::Area).unwrap_or(AgentId::Plant);
                    if t == Target::Bid {
                        let obs = build_observation(agent, pre, Some(&rec.ctx));
                        let (est, queue) = match &obs {
                            Observation::Cell { cell, .. } => (cell.estimated_completion.unwrap_or(f64::MAX), cell.active_jobs),
                            _ => (f64::MAX, 0),
                        };
                        let id = self.emit(pre, epoch, ObjectKind::Bid, agent, mediator, Some(item), None, Some(cell));
                        self.log.objects[id as usize].estimate = Some(est);
                        if let Some(r) = self.routing(item)?.round.as_mut() {
                            r.bids.push((est, queue, cell));
                        }
                    }
                    if let Some(r) = self.routing(item)?.round.as_mut() {
                        r.pending.remove(&cell);
                    }
                    self.close_round(pre, epoch, item, &mut actions)?;
                }
                (DecisionKind::LocalDispatch, Some(Target::Binding { job, machine })) => {
                    if let AgentId::Cell(c) = agent {
                        self.arrival_pending.remove(&c);
                    }
                    actions.push(PhysicalAction::Dispatch { job, machine });
                }
                _ => return Err(bad()),
            }
        }
        Ok(actions)
    }

    /// Consumes no-action records. An obligation that cannot be acted on is
    /// handed to plant recovery so that it never blocks its queue.
    pub fn note_no_actions(&mut self, pre: &WorldState, epoch: u32, records: &[NoActionRecord]) -> Result<Vec<PhysicalAction>, ProtocolError> {
        let mut actions = Vec::new();
        for r in records {
            if let AgentId::Cell(c) = r.agent {
                if r.obligation.is_none() {
                    self.arrival_pending.remove(&c);
                }
            }
            let Some(id) = r.obligation else { continue };
            let q = self.queues.get_mut(&r.agent).ok_or(ProtocolError::StaleActivation { agent: r.agent })?;
            let ob = match q.front() {
                Some(f) if f.id == id => q.pop_front().expect("front exists"),
                _ => return Err(ProtocolError::StaleActivation { agent: r.agent }),
            };
            if ob.kind == DecisionKind::BidSubmission {
                if let AgentId::Cell(c) = ob.agent {
                    if let Some(round) = self.routing(ob.item)?.round.as_mut() {
                        round.pending.remove(&c);
                    }
                }
                self.close_round(pre, epoch, ob.item, &mut actions)?;
            } else if self.items.contains_key(&ob.item) {
                self.plant_recover(pre, epoch, ob.item, PlantRecovery::Fallback, ob.cause, &mut actions)?;
            }
        }
        Ok(actions)
    }

    fn on_finish(&mut self, state: &WorldState, ev: &Event) {
        let (Some(job), Some(stage), Some(cell)) = (ev.subject.job, ev.subject.stage, ev.subject.cell) else { return };
        let item = WorkItem::new(job, stage);
        let Some(contract) = self.active.remove(&item) else { return };
        let epoch = state.decision_epochs;
        let issuer = self.log.contracts[contract as usize].issuer;
        self.emit(state, epoch, ObjectKind::Settlement, AgentId::Cell(cell), issuer, Some(item), Some(contract), Some(cell));
        let last = state.jobs[job.index()].status == JobStatus::Completed;
        let next = if last { ContractState::Settled } else { ContractState::Open };
        // Registered contracts are always committed here.
        let _ = self.transition(contract, next);
        self.settle(state, epoch, SettlementKind::StageSettled, contract);
        self.settle(state, epoch, if last { SettlementKind::JobSettled } else { SettlementKind::LeftOpen }, contract);
    }
}

impl DecisionBoundary for ProtocolRuntime {
    fn observe(&mut self, state: &WorldState, ev: &Event) {
        let cause = Cause::WorldEvent(ev.seq);
        match ev.kind {
            EventKind::SharedBacklogArrival | EventKind::TransportComplete => self.backlog_cause = Some(cause),
            EventKind::StageReleaseReady if ev.subject.cell.is_none() => self.backlog_cause = Some(cause),
            _ => {}
        }
        let cell = ev.subject.cell.or_else(|| ev.subject.machine.map(|m| state.config.hierarchy.cell_of(m)));
        match ev.kind {
            EventKind::Arrival => {
                if let Some(c) = cell {
                    self.dispatch_cause.insert(c, cause);
                    // Busy machines will pick the job up later; only a cell
                    // with nothing operational is a dead decision point.
                    if !state.operational(c) {
                        self.arrival_pending.insert(c);
                    }
                }
            }
            EventKind::Finish => {
                self.backlog_cause = Some(cause);
                if let Some(c) = cell {
                    self.dispatch_cause.insert(c, cause);
                }
                self.on_finish(state, ev);
            }
            EventKind::Repair => {
                self.backlog_cause = Some(cause);
                if let Some(c) = cell {
                    self.dispatch_cause.insert(c, cause);
                }
            }
            _ => {}
        }
    }

    fn decision_required(&self, state: &WorldState) -> bool {
        self.agents.iter().any(|a| self.pending_context(state, *a).is_some())
    }
}

#[cfg(test)]
mod tests;
