//! Agent-local observations derived from the world state.

use serde::{Deserialize, Serialize};

use super::ProtocolContext;
use crate::engine::{JobStatus, MachineStatus, WorldState};
use crate::ids::{AgentId, AreaId, CellId, JobId, MachineId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub released_jobs_total: u32,
    pub completed_jobs_total: u32,
    pub backlog_jobs_total: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capacity {
    pub admissible_for_new_work: bool,
    pub busy_machines_total: u32,
    pub down_machines_total: u32,
}

/// Aggregate view of an area or a cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSummary {
    pub id: u32,
    /// In-flight jobs bound to the node.
    pub active_jobs: u32,
    /// Backlog jobs with remaining route demand at the node.
    pub backlog_jobs: u32,
    pub energy_kwh: f64,
    pub machines: u32,
    pub idle_machines: u32,
    pub down_machines: u32,
    pub inbound_occupancy: u32,
    /// Outstanding processing time of jobs bound to the node.
    pub queued_work: f64,
    /// Completion estimate for the context item, when there is one.
    pub estimated_completion: Option<f64>,
    pub cells: Vec<CellId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacklogEntry {
    pub job: JobId,
    pub stage: u32,
    pub due_date: Option<f64>,
    pub remaining_stages: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineView {
    pub id: MachineId,
    pub status: MachineStatus,
    pub family: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReadyJob {
    pub job: JobId,
    pub stage: u32,
    pub setup_family: u32,
    pub processing_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum Observation {
    Plant {
        time: f64,
        /// Selectable backlog, earliest due date first then job id.
        backlog: Vec<BacklogEntry>,
        areas: Vec<NodeSummary>,
        cells: Vec<NodeSummary>,
        progress: Progress,
        capacity: Capacity,
        top_k: u32,
    },
    Area {
        time: f64,
        area: NodeSummary,
        cells: Vec<NodeSummary>,
        progress: Progress,
        capacity: Capacity,
    },
    Cell {
        time: f64,
        cell: NodeSummary,
        machines: Vec<MachineView>,
        ready: Vec<ReadyJob>,
        inbound_cap: u32,
        progress: Progress,
        capacity: Capacity,
    },
}

impl Observation {
    pub fn progress(&self) -> &Progress {
        match self {
            Observation::Plant { progress, .. } | Observation::Area { progress, .. } | Observation::Cell { progress, .. } => progress,
        }
    }

    pub fn capacity(&self) -> &Capacity {
        match self {
            Observation::Plant { capacity, .. } | Observation::Area { capacity, .. } | Observation::Cell { capacity, .. } => capacity,
        }
    }

    /// Cell summaries visible to the agent.
    pub fn cells(&self) -> &[NodeSummary] {
        match self {
            Observation::Plant { cells, .. } | Observation::Area { cells, .. } => cells,
            Observation::Cell { cell, .. } => std::slice::from_ref(cell),
        }
    }
}

fn remaining_work(state: &WorldState, job: JobId, cell: CellId) -> f64 {
    let j = &state.jobs[job.index()];
    match j.status {
        JobStatus::Processing => j
            .machine
            .and_then(|m| state.machines[m.index()].busy_until)
            .map(|t| (t - state.clock).max(0.0))
            .unwrap_or_else(|| state.effective_processing_time(j.id, cell)),
        JobStatus::Completed | JobStatus::Backlog => 0.0,
        _ => state.effective_processing_time(j.id, cell),
    }
}

/// Whether any remaining stage of a backlog job can run on a cell matching `at`.
fn demands(state: &WorldState, job: JobId, at: impl Fn(CellId) -> bool) -> bool {
    let from = state.jobs[job.index()].stage as usize;
    state.spec(job).route[from..].iter().any(|st| st.eligible_cells.iter().any(|c| at(*c)))
}

fn cell_summary(state: &WorldState, cell: CellId, ctx: Option<&ProtocolContext>) -> NodeSummary {
    let mut s = NodeSummary {
        id: cell.0,
        active_jobs: 0,
        backlog_jobs: 0,
        energy_kwh: state.accounting.cell_energy[cell.index()],
        machines: 0,
        idle_machines: 0,
        down_machines: 0,
        inbound_occupancy: state.inbound_occupancy(cell) as u32,
        queued_work: 0.0,
        estimated_completion: None,
        cells: vec![cell],
    };
    for m in state.machines_of(cell) {
        s.machines += 1;
        match m.status {
            MachineStatus::Idle => s.idle_machines += 1,
            MachineStatus::Down => s.down_machines += 1,
            _ => {}
        }
    }
    for j in &state.jobs {
        if j.status.in_flight() && j.location == Some(cell) {
            s.active_jobs += 1;
            s.queued_work += remaining_work(state, j.id, cell);
        } else if j.status == JobStatus::Backlog && !j.routing && demands(state, j.id, |c| c == cell) {
            s.backlog_jobs += 1;
        }
    }
    if let Some(info) = ctx.and_then(|c| c.item_info.as_ref()) {
        let up = (s.machines - s.down_machines).max(1) as f64;
        let travel = state.transport_duration(info.origin, cell);
        let p = info.base_processing_time * state.config.scenario.speed(cell);
        s.estimated_completion = Some(state.clock + travel + s.queued_work / up + p);
    }
    s
}

fn area_summary(state: &WorldState, area: AreaId, cells: &[NodeSummary]) -> NodeSummary {
    let members: Vec<CellId> = state.config.hierarchy.cells_in(area).collect();
    let mut s = NodeSummary {
        id: area.0,
        active_jobs: 0,
        backlog_jobs: 0,
        energy_kwh: 0.0,
        machines: 0,
        idle_machines: 0,
        down_machines: 0,
        inbound_occupancy: 0,
        queued_work: 0.0,
        estimated_completion: None,
        cells: members.clone(),
    };
    for c in cells.iter().filter(|c| members.contains(&CellId(c.id))) {
        s.active_jobs += c.active_jobs;
        s.energy_kwh += c.energy_kwh;
        s.machines += c.machines;
        s.idle_machines += c.idle_machines;
        s.down_machines += c.down_machines;
        s.inbound_occupancy += c.inbound_occupancy;
        s.queued_work += c.queued_work;
    }
    // A backlog job counts once per area even if several cells qualify.
    s.backlog_jobs = state
        .jobs
        .iter()
        .filter(|j| j.status == JobStatus::Backlog && !j.routing)
        .filter(|j| demands(state, j.id, |c| members.contains(&c)))
        .count() as u32;
    s
}

fn progress(state: &WorldState) -> Progress {
    let released = state
        .jobs
        .iter()
        .filter(|j| j.stage > 0 || j.status.in_flight() || j.status == JobStatus::Completed)
        .count() as u32;
    Progress {
        released_jobs_total: released,
        completed_jobs_total: state.accounting.completed_jobs,
        backlog_jobs_total: state.backlog_total(),
    }
}

fn capacity<'a>(state: &WorldState, cells: impl Iterator<Item = &'a CellId>) -> Capacity {
    let mut busy = 0;
    let mut down = 0;
    for c in cells {
        for m in state.machines_of(*c) {
            match m.status {
                MachineStatus::Setup | MachineStatus::Processing => busy += 1,
                MachineStatus::Down => down += 1,
                MachineStatus::Idle => {}
            }
        }
    }
    Capacity { admissible_for_new_work: state.admissible_for_new_work(), busy_machines_total: busy, down_machines_total: down }
}

/// Ranked selectable backlog: earliest due date first, ties by job id.
pub fn ranked_backlog(state: &WorldState) -> Vec<BacklogEntry> {
    let mut v: Vec<BacklogEntry> = state
        .backlog_candidates()
        .into_iter()
        .map(|j| {
            let spec = state.spec(j);
            let stage = state.jobs[j.index()].stage;
            BacklogEntry { job: j, stage, due_date: spec.due_date, remaining_stages: spec.route.len() as u32 - stage }
        })
        .collect();
    v.sort_by(|a, b| {
        let da = a.due_date.unwrap_or(f64::INFINITY);
        let db = b.due_date.unwrap_or(f64::INFINITY);
        da.total_cmp(&db).then(a.job.cmp(&b.job))
    });
    v
}

/// Builds the scoped observation for `agent`. Item-relative estimates are
/// filled when `ctx` names a work item.
pub fn build_observation(agent: AgentId, pre: &WorldState, ctx: Option<&ProtocolContext>) -> Observation {
    let h = &pre.config.hierarchy;
    let time = pre.clock;
    match agent {
        AgentId::Plant => {
            let cells: Vec<NodeSummary> = h.cells.iter().map(|c| cell_summary(pre, c.id, ctx)).collect();
            let areas = h.areas.iter().map(|a| area_summary(pre, a.id, &cells)).collect();
            let all: Vec<CellId> = h.cells.iter().map(|c| c.id).collect();
            Observation::Plant {
                time,
                backlog: ranked_backlog(pre),
                areas,
                cells,
                progress: progress(pre),
                capacity: capacity(pre, all.iter()),
                top_k: pre.config.scenario.backlog_top_k,
            }
        }
        AgentId::Area(a) => {
            let cells: Vec<NodeSummary> = h.cells_in(a).map(|c| cell_summary(pre, c, ctx)).collect();
            let area = area_summary(pre, a, &cells);
            let members = area.cells.clone();
            Observation::Area { time, area, cells, progress: progress(pre), capacity: capacity(pre, members.iter()) }
        }
        AgentId::Cell(c) => {
            let cell = cell_summary(pre, c, ctx);
            let machines = pre.machines_of(c).map(|m| MachineView { id: m.id, status: m.status, family: m.family }).collect();
            let mut ready: Vec<ReadyJob> = pre.cells[c.index()]
                .ready
                .iter()
                .copied()
                .map(|j| {
                    let st = pre.current_stage(j).expect("ready job has a stage");
                    ReadyJob {
                        job: j,
                        stage: pre.jobs[j.index()].stage,
                        setup_family: st.setup_family,
                        processing_time: pre.effective_processing_time(j, c),
                    }
                })
                .collect();
            ready.sort_by_key(|r| r.job);
            Observation::Cell {
                time,
                cell,
                machines,
                ready,
                inbound_cap: pre.config.scenario.inbound_cap,
                progress: progress(pre),
                capacity: capacity(pre, [c].iter()),
            }
        }
    }
}
