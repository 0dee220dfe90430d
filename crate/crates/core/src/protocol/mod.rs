//! Coordination layer: authority modes, contracts and the runtime that
//! turns decisions into protocol objects and physical actions.

mod mode;
mod objects;
mod runtime;

pub use mode::{AuthorityMode, CommitActions, ModeRegistry, RegistryError, RoutingAuthority};
pub use objects::{Contract, ContractState, ObjectKind, ProtocolObject, Provenance, SettlementKind, SettlementRecord};
pub use runtime::{Obligation, ProtocolError, ProtocolLog, ProtocolRuntime, FALLBACK_BUDGET};
