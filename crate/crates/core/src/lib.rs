//! Event-driven factory scheduling simulator with an explicit coordination
//! protocol layer.
//!
//! The crate is organised bottom-up: [`instance`] loads and validates
//! benchmark documents, [`engine`] owns the world state and the discrete-event
//! core, [`interpreter`] turns realized events into agent activations,
//! [`protocol`] manages contracts and protocol objects, [`controllers`] decide,
//! [`metrics`] evaluates finished traces and [`runner`] ties episodes, suites
//! and artifacts together.

pub mod controllers;
pub mod engine;
pub mod ids;
pub mod instance;
pub mod interpreter;
pub mod metrics;
pub mod protocol;
pub mod runner;

pub use ids::{AgentId, AreaId, CellId, JobId, MachineId, WorkItem};
