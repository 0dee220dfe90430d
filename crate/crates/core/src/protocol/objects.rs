//! Contracts, protocol objects and settlement records.

use serde::{Deserialize, Serialize};

use crate::ids::{AgentId, CellId, WorkItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractState {
    Proposed,
    Committed,
    Rejected,
    Settled,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    DirectAward,
    ChainAssignment,
    BidAward,
    Reroute,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub contract_id: u64,
    pub item: WorkItem,
    pub cell: CellId,
    pub issuer: AgentId,
    pub state: ContractState,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<ContractState>,
}

impl Contract {
    /// Moves to `next` if the lifecycle allows it.
    pub fn transition(&mut self, next: ContractState) -> Result<(), ContractState> {
        use ContractState::*;
        let ok = matches!((self.state, next), (Proposed, Committed) | (Proposed, Rejected) | (Committed, Settled) | (Committed, Open));
        if !ok {
            return Err(self.state);
        }
        self.history.push(self.state);
        self.state = next;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Message,
    Commitment,
    Allocation,
    Settlement,
    Rejection,
    Escalation,
    Bid,
    Award,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolObject {
    pub id: u64,
    pub kind: ObjectKind,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub epoch: u32,
    pub time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<WorkItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contract: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<CellId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettlementKind {
    Proposed,
    Committed,
    Rejected,
    StageSettled,
    JobSettled,
    LeftOpen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementRecord {
    pub seq: u64,
    pub epoch: u32,
    pub time: f64,
    pub kind: SettlementKind,
    pub contract: u64,
    pub item: WorkItem,
    pub cell: CellId,
    pub provenance: Provenance,
}
