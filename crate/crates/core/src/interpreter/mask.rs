//! Protocol-conditioned legal-action masks.

use serde::{Deserialize, Serialize};

use super::observation::Observation;
use super::{DecisionKind, ProtocolContext};
use crate::engine::MachineStatus;
use crate::ids::{AgentId, AreaId, CellId, JobId, MachineId};
use crate::protocol::AuthorityMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum Target {
    Job { job: JobId, stage: u32 },
    Area { area: AreaId },
    Cell { cell: CellId },
    Binding { job: JobId, machine: MachineId },
    Accept,
    Reject,
    Bid,
    Decline,
}

/// Domain of indexed actions with a legality bit and decoded meaning each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMask {
    pub domain_size: usize,
    pub legal: Vec<bool>,
    pub semantics: Vec<Target>,
}

impl ActionMask {
    fn from_domain(semantics: Vec<Target>, legal: impl Fn(&Target) -> bool) -> Self {
        let legal = semantics.iter().map(legal).collect();
        Self { domain_size: semantics.len(), legal, semantics }
    }

    pub fn legal_indices(&self) -> Vec<usize> {
        self.legal.iter().enumerate().filter(|(_, l)| **l).map(|(i, _)| i).collect()
    }

    pub fn legal_count(&self) -> usize {
        self.legal.iter().filter(|l| **l).count()
    }

    pub fn is_legal(&self, index: usize) -> bool {
        self.legal.get(index).copied().unwrap_or(false)
    }

    pub fn target(&self, index: usize) -> Option<Target> {
        self.semantics.get(index).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.legal_count() == 0
    }
}

fn cell_domain(cells: &[CellId], allowed: &[CellId]) -> ActionMask {
    let sem = cells.iter().map(|&cell| Target::Cell { cell }).collect();
    ActionMask::from_domain(sem, |t| matches!(t, Target::Cell { cell } if allowed.contains(cell)))
}

/// Legal actions for an activated agent; indices follow ascending ids.
pub fn legal_actions(_agent: AgentId, obs: &Observation, ctx: &ProtocolContext, mode: &AuthorityMode) -> ActionMask {
    let eligible: Vec<CellId> = ctx.item_info.as_ref().map(|i| i.eligible_cells.clone()).unwrap_or_default();
    let allowed: Vec<CellId> = ctx.candidates.clone().unwrap_or_else(|| eligible.clone());
    match (ctx.role_semantics, obs) {
        (DecisionKind::BacklogSelection, Observation::Plant { backlog, top_k, .. }) => {
            let sem = backlog.iter().take(*top_k as usize).map(|b| Target::Job { job: b.job, stage: b.stage }).collect();
            ActionMask::from_domain(sem, |_| true)
        }
        (DecisionKind::AreaSelection, Observation::Plant { areas, .. }) => {
            let sem = areas.iter().map(|a| Target::Area { area: AreaId(a.id) }).collect();
            ActionMask::from_domain(sem, |t| match t {
                Target::Area { area } => areas[area.index()].cells.iter().any(|c| allowed.contains(c)),
                _ => false,
            })
        }
        (DecisionKind::CellSelection | DecisionKind::EscalationHandling | DecisionKind::Reroute, _) => {
            let cells: Vec<CellId> = obs.cells().iter().map(|c| CellId(c.id)).collect();
            cell_domain(&cells, &allowed)
        }
        (DecisionKind::CellCommitment, _) => {
            let can_reject = mode.can_reject();
            ActionMask::from_domain(vec![Target::Accept, Target::Reject], |t| *t == Target::Accept || can_reject)
        }
        (DecisionKind::BidSubmission, _) => ActionMask::from_domain(vec![Target::Bid, Target::Decline], |_| true),
        (DecisionKind::LocalDispatch, Observation::Cell { machines, ready, .. }) => {
            let mut sem = Vec::new();
            for r in ready {
                for m in machines {
                    sem.push(Target::Binding { job: r.job, machine: m.id });
                }
            }
            ActionMask::from_domain(sem, |t| match t {
                Target::Binding { machine, .. } => {
                    machines.iter().any(|m| m.id == *machine && m.status == MachineStatus::Idle)
                }
                _ => false,
            })
        }
        _ => ActionMask { domain_size: 0, legal: vec![], semantics: vec![] },
    }
}
