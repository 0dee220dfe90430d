//! World state and accounting.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::event::{EventKind, EventQueue};
use crate::ids::{CellId, JobId, MachineId};
use crate::instance::{InstanceConfig, JobSpec, RouteStage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Backlog,
    InTransport,
    Inbound,
    Ready,
    Processing,
    Blocked,
    Completed,
}

impl JobStatus {
    pub fn in_flight(self) -> bool {
        matches!(
            self,
            JobStatus::InTransport | JobStatus::Inbound | JobStatus::Ready | JobStatus::Processing | JobStatus::Blocked
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JobState {
    pub id: JobId,
    /// Index of the stage currently pending or in progress.
    pub stage: u32,
    pub status: JobStatus,
    /// Cell the job is bound to (transport target, buffer or machine).
    pub location: Option<CellId>,
    /// Cell where the previous stage finished.
    pub last_cell: Option<CellId>,
    pub machine: Option<MachineId>,
    pub arrived: bool,
    /// Holds a WIP slot from its first backlog selection until completion.
    pub started: bool,
    /// Selected from the backlog and currently being routed.
    pub routing: bool,
    /// Returned to the backlog after recovery failed; not selectable until
    /// the world changes.
    pub hold: bool,
    pub completion_time: Option<f64>,
    pub blocked_since: Option<f64>,
    pub waiting_since: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MachineStatus {
    Idle,
    Setup,
    Processing,
    Down,
}

/// Work cut short by a breakdown: the event to reissue and the time left.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interrupted {
    pub next: EventKind,
    pub remaining: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MachineState {
    pub id: MachineId,
    pub cell: CellId,
    pub status: MachineStatus,
    pub family: Option<u32>,
    pub job: Option<JobId>,
    pub busy_until: Option<f64>,
    /// Sequence number of the pending setup/finish event for the bound job.
    pub pending: Option<u64>,
    pub pending_kind: Option<EventKind>,
    pub interrupted: Option<Interrupted>,
    pub last_renewal: f64,
    pub busy_time: f64,
    pub down_since: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CellBuffer {
    /// Jobs holding an inbound slot: in transport to the cell or waiting in it.
    pub slots: Vec<JobId>,
    /// Arrived jobs awaiting dispatch.
    pub ready: Vec<JobId>,
    /// Released jobs waiting for an inbound slot, FIFO.
    pub blocked: VecDeque<JobId>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Move {
    pub job: JobId,
    pub from: Option<CellId>,
    pub to: CellId,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootInterval {
    pub start: f64,
    pub end: f64,
    pub excess: f64,
}

/// Maximal spans where a resource rate exceeded its cap, with the integrated
/// excess over each span.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OvershootLedger {
    pub intervals: Vec<OvershootInterval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open: Option<OvershootInterval>,
}

impl OvershootLedger {
    pub fn step(&mut self, t0: f64, t1: f64, rate: f64, cap: f64) {
        let dt = t1 - t0;
        if dt <= 0.0 {
            return;
        }
        if rate > cap {
            let add = (rate - cap) * dt;
            match &mut self.open {
                Some(iv) => {
                    iv.end = t1;
                    iv.excess += add;
                }
                None => self.open = Some(OvershootInterval { start: t0, end: t1, excess: add }),
            }
        } else {
            self.close();
        }
    }

    pub fn close(&mut self) {
        if let Some(iv) = self.open.take() {
            self.intervals.push(iv);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Accounting {
    pub energy_kwh: f64,
    pub carbon_kg: f64,
    pub processing_time: f64,
    pub processing_energy: f64,
    pub setup_time: f64,
    pub setup_energy: f64,
    pub setup_count: u32,
    pub transport_time: f64,
    pub transport_energy: f64,
    pub transport_moves: u32,
    pub blocking_time: f64,
    pub buffer_wait_time: f64,
    pub completed_jobs: u32,
    pub remaining_operations: u32,
    pub downtime: f64,
    pub repair_time: f64,
    pub breakdown_count: u32,
    pub arrival_events: u32,
    pub arrived_jobs: u32,
    pub decision_steps: u32,
    pub no_action_events: u32,
    pub energy_overshoot: OvershootLedger,
    pub carbon_overshoot: OvershootLedger,
    /// Energy attributed to each cell (processing, setup, inbound transport).
    pub cell_energy: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Running,
    Done,
    Deadlock,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeFlags {
    pub status: EpisodeStatus,
    pub done: bool,
    pub deadlocked: bool,
    pub truncated: bool,
}

impl EpisodeFlags {
    pub fn running() -> Self {
        Self { status: EpisodeStatus::Running, done: false, deadlocked: false, truncated: false }
    }

    pub fn is_running(&self) -> bool {
        self.status == EpisodeStatus::Running
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WorldState {
    pub clock: f64,
    pub jobs: Vec<JobState>,
    pub machines: Vec<MachineState>,
    pub cells: Vec<CellBuffer>,
    pub transport: BTreeMap<JobId, Move>,
    pub pending_events: EventQueue,
    pub rng_state: ChaCha8Rng,
    pub accounting: AccountingState,
    pub episode: EpisodeFlags,
    pub decision_epochs: u32,
    pub last_progress_epoch: u32,
    pub initial_backlog_seq: Option<u64>,
    #[serde(skip)]
    pub config: Arc<InstanceConfig>,
    pub specs: Arc<Vec<JobSpec>>,
}

pub type AccountingState = Accounting;

impl WorldState {
    pub fn spec(&self, job: JobId) -> &JobSpec {
        &self.specs[job.index()]
    }

    /// Route stage the job is currently at; `None` once completed.
    pub fn current_stage(&self, job: JobId) -> Option<&RouteStage> {
        let j = &self.jobs[job.index()];
        self.specs[job.index()].route.get(j.stage as usize)
    }

    pub fn total_stage_items(&self) -> usize {
        self.specs.iter().map(|s| s.route.len()).sum()
    }

    pub fn all_completed(&self) -> bool {
        self.jobs.iter().all(|j| j.status == JobStatus::Completed)
    }

    pub fn machines_of(&self, cell: CellId) -> impl Iterator<Item = &MachineState> {
        self.machines.iter().filter(move |m| m.cell == cell)
    }

    pub fn idle_machines(&self, cell: CellId) -> usize {
        self.machines_of(cell).filter(|m| m.status == MachineStatus::Idle).count()
    }

    pub fn operational(&self, cell: CellId) -> bool {
        self.machines_of(cell).any(|m| m.status != MachineStatus::Down)
    }

    pub fn started_jobs(&self) -> u32 {
        self.jobs.iter().filter(|j| j.started && j.status != JobStatus::Completed).count() as u32
    }

    pub fn in_flight_jobs(&self) -> u32 {
        self.jobs.iter().filter(|j| j.status.in_flight()).count() as u32
    }

    pub fn admissible_for_new_work(&self) -> bool {
        self.started_jobs() < self.config.budgets.wip_cap
    }

    /// Backlog items the plant may select now, unranked.
    pub fn backlog_candidates(&self) -> Vec<JobId> {
        let admit_new = self.admissible_for_new_work();
        self.jobs
            .iter()
            .filter(|j| j.status == JobStatus::Backlog && j.arrived && !j.routing && !j.hold)
            .filter(|j| j.started || admit_new)
            .map(|j| j.id)
            .collect()
    }

    /// Jobs in the shared backlog including registered future arrivals.
    pub fn backlog_total(&self) -> u32 {
        self.jobs.iter().filter(|j| j.status == JobStatus::Backlog && !j.routing).count() as u32
    }

    pub fn inbound_occupancy(&self, cell: CellId) -> usize {
        self.cells[cell.index()].slots.len()
    }

    pub fn effective_processing_time(&self, job: JobId, cell: CellId) -> f64 {
        let st = self.current_stage(job).expect("job has a pending stage");
        st.base_processing_time * self.config.scenario.speed(cell)
    }

    pub fn transport_duration(&self, from: Option<CellId>, to: CellId) -> f64 {
        let h = &self.config.hierarchy;
        let hops = match from {
            Some(f) if h.area_of(f) != h.area_of(to) => 2.0,
            _ => 1.0,
        };
        let s = &self.config.scenario;
        s.physics.transport_time_per_hop * hops * s.transport_multiplier
    }

    pub fn utilization(&self, machine: MachineId) -> f64 {
        if self.clock <= 0.0 {
            0.0
        } else {
            self.machines[machine.index()].busy_time / self.clock
        }
    }
}
