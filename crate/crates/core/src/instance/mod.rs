//! Benchmark instances: hierarchy, routes, budgets, failure and scenario
//! profiles, plus loading and validation of instance documents.

mod catalog;
mod document;
mod grammar;
mod validate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{AreaId, CellId, JobId, MachineId};

pub use catalog::{load_shipped, resolve_suite, shipped_document, SHIPPED, SUITES};
pub use document::{load_instance, SCHEMA_VERSION};
pub use grammar::{generate_jobs, RouteGrammar};
pub use validate::{validate_instance, Violation};

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("unsupported schema version `{0}`")]
    SchemaVersion(String),
    #[error("invalid instance: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("unknown instance `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AreaNode {
    pub id: AreaId,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CellNode {
    pub id: CellId,
    pub area: AreaId,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MachineNode {
    pub id: MachineId,
    pub cell: CellId,
}

/// Rooted plant → area → cell → machine tree.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Hierarchy {
    pub plant_id: String,
    pub areas: Vec<AreaNode>,
    pub cells: Vec<CellNode>,
    pub machines: Vec<MachineNode>,
    pub partition: Vec<u32>,
}

impl Hierarchy {
    /// Builds the tree from a cell partition; cells and machines are numbered
    /// consecutively area by area.
    pub fn from_partition(plant_id: &str, partition: &[u32], machines_per_cell: u32) -> Self {
        let mut areas = Vec::new();
        let mut cells = Vec::new();
        let mut machines = Vec::new();
        for (a, &n) in partition.iter().enumerate() {
            let area = AreaId(a as u32);
            areas.push(AreaNode { id: area });
            for _ in 0..n {
                let cell = CellId(cells.len() as u32);
                cells.push(CellNode { id: cell, area });
                for _ in 0..machines_per_cell {
                    machines.push(MachineNode { id: MachineId(machines.len() as u32), cell });
                }
            }
        }
        Self { plant_id: plant_id.to_string(), areas, cells, machines, partition: partition.to_vec() }
    }

    pub fn area_of(&self, cell: CellId) -> AreaId {
        self.cells[cell.index()].area
    }

    pub fn cells_in(&self, area: AreaId) -> impl Iterator<Item = CellId> + '_ {
        self.cells.iter().filter(move |c| c.area == area).map(|c| c.id)
    }

    pub fn machines_in(&self, cell: CellId) -> impl Iterator<Item = MachineId> + '_ {
        self.machines.iter().filter(move |m| m.cell == cell).map(|m| m.id)
    }

    pub fn cell_of(&self, machine: MachineId) -> CellId {
        self.machines[machine.index()].cell
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RouteStage {
    #[serde(default)]
    pub stage_index: u32,
    pub eligible_cells: Vec<CellId>,
    pub base_processing_time: f64,
    pub setup_family: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub job_id: JobId,
    pub route: Vec<RouteStage>,
    pub release_time: f64,
    #[serde(default)]
    pub due_date: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RepairDistribution {
    Constant { value: f64 },
    Exponential { mean: f64 },
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FailureProfile {
    /// Weibull time-to-failure measured from the last renewal.
    WeibullAging { shape: f64, scale: f64, repair: RepairDistribution },
    /// Memoryless failures; `rate = 0` disables breakdowns.
    ExponentialNominal { rate: f64, repair: RepairDistribution },
    /// Exponential with rate `base_rate * (1 + load_coefficient * load)`.
    LoadDependent { base_rate: f64, load_coefficient: f64, repair: RepairDistribution },
}

impl FailureProfile {
    pub fn kind_name(&self) -> &'static str {
        match self {
            FailureProfile::WeibullAging { .. } => "weibull_aging",
            FailureProfile::ExponentialNominal { .. } => "exponential_nominal",
            FailureProfile::LoadDependent { .. } => "load_dependent",
        }
    }

    pub fn repair(&self) -> &RepairDistribution {
        match self {
            FailureProfile::WeibullAging { repair, .. }
            | FailureProfile::ExponentialNominal { repair, .. }
            | FailureProfile::LoadDependent { repair, .. } => repair,
        }
    }

    pub fn none() -> Self {
        FailureProfile::ExponentialNominal { rate: 0.0, repair: RepairDistribution::Constant { value: 1.0 } }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// Energy rate cap (kWh per time unit).
    pub energy_cap: f64,
    /// Carbon rate cap (kg per time unit).
    pub carbon_cap: f64,
    pub wip_cap: u32,
    #[serde(default = "default_carbon_intensity")]
    pub carbon_intensity: f64,
}

fn default_carbon_intensity() -> f64 {
    0.6
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArrivalBatch {
    pub time: f64,
    pub jobs: Vec<JobId>,
}

/// Physical coefficients of the energy, setup and transport model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    pub processing_power: f64,
    pub setup_power_factor: f64,
    pub transport_power_factor: f64,
    pub setup_time: f64,
    pub transport_time_per_hop: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            processing_power: 100.0,
            setup_power_factor: 6.0,
            transport_power_factor: 0.2,
            setup_time: 0.5,
            transport_time_per_hop: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioProfile {
    pub name: String,
    pub backlog_top_k: u32,
    pub transport_multiplier: f64,
    pub inbound_cap: u32,
    pub speed_modifiers: BTreeMap<CellId, f64>,
    pub arrival_plan: Vec<ArrivalBatch>,
    pub physics: Physics,
}

impl ScenarioProfile {
    pub fn speed(&self, cell: CellId) -> f64 {
        self.speed_modifiers.get(&cell).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum JobSource {
    Explicit(Vec<JobSpec>),
    Grammar(RouteGrammar),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceConfig {
    pub id: String,
    pub source_id: Option<String>,
    pub hierarchy: Hierarchy,
    pub jobs: JobSource,
    pub budgets: Budgets,
    pub failure_profile: FailureProfile,
    pub scenario: ScenarioProfile,
    pub horizon_limit: u32,
    pub no_progress_window: u32,
}

impl InstanceConfig {
    pub fn job_count(&self) -> usize {
        match &self.jobs {
            JobSource::Explicit(j) => j.len(),
            JobSource::Grammar(g) => g.job_count as usize,
        }
    }
}
