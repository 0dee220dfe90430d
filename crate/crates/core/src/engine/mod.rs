//! Discrete-event core: world construction, physical transitions, decision
//! commits and autonomous advancement between decision epochs.

pub mod event;
pub mod failure;
pub mod state;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use event::{Event, EventKind, EventQueue, Subject};
pub use failure::{sample_failure, sample_repair};
pub use state::{
    Accounting, AccountingState, CellBuffer, EpisodeFlags, EpisodeStatus, Interrupted, JobState, JobStatus,
    MachineState, MachineStatus, Move, OvershootInterval, OvershootLedger, WorldState,
};

use crate::ids::{CellId, JobId, MachineId};
use crate::instance::{generate_jobs, InstanceConfig};

const FAILURE_STREAM: u64 = 0xfa11;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("internal corruption at t={time}: {message}")]
    Corruption { time: f64, message: String },
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

fn corrupt(state: &WorldState, message: impl Into<String>) -> EngineError {
    EngineError::Corruption { time: state.clock, message: message.into() }
}

/// Validated physical effect of a committed decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum PhysicalAction {
    /// Take a job out of the shared backlog for routing.
    SelectBacklog { job: JobId },
    /// Release a routed job towards its committed cell.
    Release { job: JobId, cell: CellId },
    Dispatch { job: JobId, machine: MachineId },
    /// Give up routing for now; the job waits in the backlog.
    ReturnToBacklog { job: JobId },
}

#[derive(Debug, Clone, Default)]
pub struct JointAction {
    pub actions: Vec<PhysicalAction>,
    pub decisions: u32,
    pub no_actions: u32,
}

/// Hooks the engine consults while advancing: the protocol layer observes
/// every realized event and says when an agent must act.
pub trait DecisionBoundary {
    fn observe(&mut self, state: &WorldState, event: &Event);
    fn decision_required(&self, state: &WorldState) -> bool;
}

#[derive(Debug, Clone)]
pub struct Advance {
    pub realized: Vec<Event>,
    pub epoch_time: f64,
}

/// Builds x_0 for `seed`.
pub fn init_world(config: Arc<InstanceConfig>, seed: u64) -> WorldState {
    let specs = Arc::new(generate_jobs(&config, seed));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(FAILURE_STREAM);
    let h = &config.hierarchy;

    let jobs = specs
        .iter()
        .map(|s| JobState {
            id: s.job_id,
            stage: 0,
            status: JobStatus::Backlog,
            location: None,
            last_cell: None,
            machine: None,
            arrived: false,
            started: false,
            routing: false,
            hold: false,
            completion_time: None,
            blocked_since: None,
            waiting_since: None,
        })
        .collect();
    let machines = h
        .machines
        .iter()
        .map(|m| MachineState {
            id: m.id,
            cell: m.cell,
            status: MachineStatus::Idle,
            family: None,
            job: None,
            busy_until: None,
            pending: None,
            pending_kind: None,
            interrupted: None,
            last_renewal: 0.0,
            busy_time: 0.0,
            down_since: None,
        })
        .collect();

    let mut queue = EventQueue::new();
    let planned: Vec<JobId> = config.scenario.arrival_plan.iter().flat_map(|b| b.jobs.iter().copied()).collect();
    let resident: Vec<JobId> = specs.iter().map(|s| s.job_id).filter(|j| !planned.contains(j)).collect();
    let initial_backlog_seq = (!resident.is_empty())
        .then(|| queue.schedule(0.0, EventKind::SharedBacklogArrival, Subject { jobs: resident, ..Default::default() }));
    for batch in &config.scenario.arrival_plan {
        queue.schedule(batch.time, EventKind::SharedBacklogArrival, Subject { jobs: batch.jobs.clone(), ..Default::default() });
    }
    for m in &h.machines {
        if let Some(dt) = sample_failure(&config.failure_profile, 0.0, 0.0, &mut rng) {
            queue.schedule(dt, EventKind::Breakdown, Subject::machine(m.id, m.cell));
        }
    }

    let accounting = Accounting {
        remaining_operations: specs.iter().map(|s| s.route.len() as u32).sum(),
        cell_energy: vec![0.0; h.cells.len()],
        ..Default::default()
    };
    WorldState {
        clock: 0.0,
        jobs,
        machines,
        cells: vec![CellBuffer::default(); h.cells.len()],
        transport: BTreeMap::new(),
        pending_events: queue,
        rng_state: rng,
        accounting,
        episode: EpisodeFlags::running(),
        decision_epochs: 0,
        last_progress_epoch: 0,
        initial_backlog_seq,
        config,
        specs,
    }
}

/// Integrates rates over [clock, t] and moves the clock.
fn integrate_to(state: &mut WorldState, t: f64) {
    let t0 = state.clock;
    let dt = t - t0;
    if dt <= 0.0 {
        state.clock = t0.max(t);
        return;
    }
    let phys = state.config.scenario.physics.clone();
    let n_cells = state.cells.len();
    let mut proc = vec![0u32; n_cells];
    let mut setup = vec![0u32; n_cells];
    let mut moving = vec![0u32; n_cells];
    let mut down = 0u32;
    for m in &mut state.machines {
        match m.status {
            MachineStatus::Processing => {
                proc[m.cell.index()] += 1;
                m.busy_time += dt;
            }
            MachineStatus::Setup => {
                setup[m.cell.index()] += 1;
                m.busy_time += dt;
            }
            MachineStatus::Down => down += 1,
            MachineStatus::Idle => {}
        }
    }
    for mv in state.transport.values() {
        moving[mv.to.index()] += 1;
    }
    let blocked = state.jobs.iter().filter(|j| j.status == JobStatus::Blocked).count() as f64;
    let waiting = state.jobs.iter().filter(|j| j.waiting_since.is_some()).count() as f64;

    let a = &mut state.accounting;
    let mut rate = 0.0;
    for c in 0..n_cells {
        let r = phys.processing_power * proc[c] as f64
            + phys.setup_power_factor * setup[c] as f64
            + phys.transport_power_factor * moving[c] as f64;
        a.cell_energy[c] += r * dt;
        rate += r;
    }
    let (p, s, m): (u32, u32, u32) = (proc.iter().sum(), setup.iter().sum(), moving.iter().sum());
    a.processing_time += p as f64 * dt;
    a.processing_energy += phys.processing_power * p as f64 * dt;
    a.setup_time += s as f64 * dt;
    a.transport_time += m as f64 * dt;
    a.downtime += down as f64 * dt;
    a.blocking_time += blocked * dt;
    a.buffer_wait_time += waiting * dt;
    a.setup_energy = phys.setup_power_factor * a.setup_time;
    a.transport_energy = phys.transport_power_factor * a.transport_time;
    a.energy_kwh = a.processing_energy + a.setup_energy + a.transport_energy;
    let b = &state.config.budgets;
    a.carbon_kg = b.carbon_intensity * a.energy_kwh;
    a.energy_overshoot.step(t0, t, rate, b.energy_cap);
    a.carbon_overshoot.step(t0, t, b.carbon_intensity * rate, b.carbon_cap);
    state.clock = t;
}

fn schedule_next_failure(state: &mut WorldState, machine: MachineId) {
    let load = state.utilization(machine);
    let cell = state.machines[machine.index()].cell;
    if let Some(dt) = sample_failure(&state.config.failure_profile, 0.0, load, &mut state.rng_state) {
        let t = state.clock + dt;
        state.pending_events.schedule(t, EventKind::Breakdown, Subject::machine(machine, cell));
    }
}

fn set_pending(state: &mut WorldState, machine: MachineId, t: f64, kind: EventKind, subject: Subject) {
    let seq = state.pending_events.schedule(t, kind, subject);
    let m = &mut state.machines[machine.index()];
    m.pending = Some(seq);
    m.pending_kind = Some(kind);
    m.busy_until = Some(t);
}

fn clear_holds(state: &mut WorldState) {
    for j in &mut state.jobs {
        j.hold = false;
    }
}

fn start_transport(state: &mut WorldState, job: JobId, cell: CellId) {
    let stage = state.jobs[job.index()].stage;
    state.pending_events.schedule(state.clock, EventKind::TransportStart, Subject::job_at(job, stage, cell));
}

/// Applies the physical transition of one event.
pub fn apply_event(state: &mut WorldState, ev: &Event) -> Result<(), EngineError> {
    let now = state.clock;
    let sub = &ev.subject;
    let job_of = |state: &WorldState| sub.job.ok_or_else(|| corrupt(state, format!("{} without job", ev.kind.as_str())));
    let cell_of = |state: &WorldState| sub.cell.ok_or_else(|| corrupt(state, format!("{} without cell", ev.kind.as_str())));
    if ev.kind.is_progress() {
        state.last_progress_epoch = state.decision_epochs;
    }
    match ev.kind {
        EventKind::SharedBacklogArrival => {
            for j in &sub.jobs {
                if j.index() >= state.jobs.len() {
                    return Err(corrupt(state, "arrival of unknown job"));
                }
                state.jobs[j.index()].arrived = true;
            }
            if Some(ev.seq) != state.initial_backlog_seq {
                state.accounting.arrival_events += 1;
                state.accounting.arrived_jobs += sub.jobs.len() as u32;
            }
        }
        EventKind::StageReleaseReady => {
            let job = job_of(state)?;
            let Some(cell) = sub.cell else {
                // Next stage goes back to the shared backlog.
                return Ok(());
            };
            let cap = state.config.scenario.inbound_cap as usize;
            let js = &mut state.jobs[job.index()];
            js.routing = false;
            js.location = Some(cell);
            if state.cells[cell.index()].slots.len() < cap {
                state.cells[cell.index()].slots.push(job);
                state.jobs[job.index()].status = JobStatus::InTransport;
                start_transport(state, job, cell);
            } else {
                state.jobs[job.index()].status = JobStatus::Blocked;
                state.cells[cell.index()].blocked.push_back(job);
                let stage = state.jobs[job.index()].stage;
                state.pending_events.schedule(now, EventKind::BlockingStart, Subject::job_at(job, stage, cell));
            }
        }
        EventKind::BlockingStart => {
            let job = job_of(state)?;
            state.jobs[job.index()].blocked_since = Some(now);
        }
        EventKind::BufferAdmit => {
            let job = job_of(state)?;
            let cell = cell_of(state)?;
            let js = &mut state.jobs[job.index()];
            if js.status != JobStatus::Blocked {
                return Err(corrupt(state, format!("buffer_admit for unblocked job {job}")));
            }
            js.status = JobStatus::InTransport;
            js.blocked_since = None;
            let stage = js.stage;
            state.pending_events.schedule(now, EventKind::BlockingEnd, Subject::job_at(job, stage, cell));
        }
        EventKind::BlockingEnd => {
            let job = job_of(state)?;
            let cell = cell_of(state)?;
            start_transport(state, job, cell);
        }
        EventKind::TransportStart => {
            let job = job_of(state)?;
            let cell = cell_of(state)?;
            let from = state.jobs[job.index()].last_cell;
            let dur = state.transport_duration(from, cell);
            state.transport.insert(job, Move { job, from, to: cell, start: now, end: now + dur });
            state.accounting.transport_moves += 1;
            let stage = state.jobs[job.index()].stage;
            state.pending_events.schedule(now + dur, EventKind::TransportComplete, Subject::job_at(job, stage, cell));
        }
        EventKind::TransportComplete => {
            let job = job_of(state)?;
            let cell = cell_of(state)?;
            if state.transport.remove(&job).is_none() {
                return Err(corrupt(state, format!("transport_complete without move for job {job}")));
            }
            state.jobs[job.index()].status = JobStatus::Inbound;
            let stage = state.jobs[job.index()].stage;
            state.pending_events.schedule(now, EventKind::Arrival, Subject::job_at(job, stage, cell));
            clear_holds(state);
        }
        EventKind::Arrival => {
            let job = job_of(state)?;
            let cell = cell_of(state)?;
            state.jobs[job.index()].status = JobStatus::Ready;
            state.cells[cell.index()].ready.push(job);
            if state.idle_machines(cell) == 0 {
                let stage = state.jobs[job.index()].stage;
                state.pending_events.schedule(now, EventKind::BufferWaitStart, Subject::job_at(job, stage, cell));
            }
        }
        EventKind::BufferWaitStart => {
            let job = job_of(state)?;
            if state.jobs[job.index()].status == JobStatus::Ready {
                state.jobs[job.index()].waiting_since = Some(now);
            }
        }
        EventKind::SetupStart => {
            let job = job_of(state)?;
            let mid = sub.machine.ok_or_else(|| corrupt(state, "setup_start without machine"))?;
            let m = &state.machines[mid.index()];
            if m.status != MachineStatus::Setup || m.job != Some(job) {
                return Err(corrupt(state, format!("setup_start on machine {mid} not reserved for job {job}")));
            }
            state.accounting.setup_count += 1;
            let t = now + state.config.scenario.physics.setup_time;
            set_pending(state, mid, t, EventKind::SetupComplete, sub.clone());
        }
        EventKind::SetupComplete => {
            let job = job_of(state)?;
            let mid = sub.machine.ok_or_else(|| corrupt(state, "setup_complete without machine"))?;
            if state.machines[mid.index()].job != Some(job) {
                return Err(corrupt(state, format!("setup_complete for unbound job {job}")));
            }
            let family = state.current_stage(job).map(|s| s.setup_family);
            let cell = state.machines[mid.index()].cell;
            let p = state.effective_processing_time(job, cell);
            let m = &mut state.machines[mid.index()];
            m.family = family;
            m.status = MachineStatus::Processing;
            set_pending(state, mid, now + p, EventKind::Finish, sub.clone());
        }
        EventKind::Finish => {
            let job = job_of(state)?;
            let mid = sub.machine.ok_or_else(|| corrupt(state, "finish without machine"))?;
            let m = &mut state.machines[mid.index()];
            if m.status != MachineStatus::Processing || m.job != Some(job) {
                return Err(corrupt(state, format!("finish on machine {mid} which is not processing job {job}")));
            }
            m.status = MachineStatus::Idle;
            m.job = None;
            m.pending = None;
            m.pending_kind = None;
            m.busy_until = None;
            let cell = m.cell;
            state.accounting.remaining_operations -= 1;
            let n_stages = state.spec(job).route.len() as u32;
            let js = &mut state.jobs[job.index()];
            js.machine = None;
            js.last_cell = Some(cell);
            js.location = None;
            js.stage += 1;
            if js.stage >= n_stages {
                js.status = JobStatus::Completed;
                js.completion_time = Some(now);
                state.accounting.completed_jobs += 1;
            } else {
                js.status = JobStatus::Backlog;
                let stage = js.stage;
                state.pending_events.schedule(now, EventKind::StageReleaseReady, Subject::job(job, stage));
            }
            clear_holds(state);
        }
        EventKind::Breakdown => {
            let mid = sub.machine.ok_or_else(|| corrupt(state, "breakdown without machine"))?;
            let m = &state.machines[mid.index()];
            if m.status == MachineStatus::Down {
                return Err(corrupt(state, format!("breakdown of machine {mid} which is already down")));
            }
            let pending = m.pending;
            let mut interrupted = None;
            if let Some(seq) = pending {
                if let Some(e) = state.pending_events.cancel(seq) {
                    interrupted = Some(Interrupted { next: e.kind, remaining: (e.t - now).max(0.0) });
                }
            }
            let cell = state.machines[mid.index()].cell;
            let repair = sample_repair(state.config.failure_profile.repair(), &mut state.rng_state);
            let m = &mut state.machines[mid.index()];
            m.status = MachineStatus::Down;
            m.interrupted = interrupted;
            m.pending = None;
            m.pending_kind = None;
            m.busy_until = None;
            m.down_since = Some(now);
            state.accounting.breakdown_count += 1;
            state.pending_events.schedule(now + repair, EventKind::Repair, Subject::machine(mid, cell));
        }
        EventKind::Repair => {
            let mid = sub.machine.ok_or_else(|| corrupt(state, "repair without machine"))?;
            let m = &mut state.machines[mid.index()];
            let since = m.down_since.take().ok_or_else(|| EngineError::Corruption {
                time: now,
                message: format!("repair of machine {mid} which is not down"),
            })?;
            state.accounting.repair_time += now - since;
            let m = &mut state.machines[mid.index()];
            m.last_renewal = now;
            match m.interrupted.take() {
                Some(Interrupted { next, remaining }) => {
                    m.status = match next {
                        EventKind::Finish => MachineStatus::Processing,
                        _ => MachineStatus::Setup,
                    };
                    let job = m.job.ok_or_else(|| EngineError::Corruption {
                        time: now,
                        message: format!("interrupted machine {mid} lost its job"),
                    })?;
                    let stage = state.jobs[job.index()].stage;
                    let cell = state.machines[mid.index()].cell;
                    set_pending(state, mid, now + remaining, next, Subject::job_at(job, stage, cell).with_machine(mid));
                }
                None => m.status = MachineStatus::Idle,
            }
            schedule_next_failure(state, mid);
            clear_holds(state);
        }
    }
    Ok(())
}

/// Translates validated decisions into state changes and induced events.
pub fn commit_decisions(state: &mut WorldState, joint: &JointAction) -> Result<(), EngineError> {
    state.accounting.decision_steps += joint.decisions;
    state.accounting.no_action_events += joint.no_actions;
    let now = state.clock;
    for action in &joint.actions {
        match *action {
            PhysicalAction::SelectBacklog { job } => {
                let js = &state.jobs[job.index()];
                if js.status != JobStatus::Backlog || !js.arrived || js.routing {
                    return Err(EngineError::ContractViolation(format!("job {job} is not selectable")));
                }
                if !js.started && !state.admissible_for_new_work() {
                    return Err(EngineError::ContractViolation(format!("selecting job {job} would exceed the WIP cap")));
                }
                let js = &mut state.jobs[job.index()];
                js.routing = true;
                js.started = true;
            }
            PhysicalAction::Release { job, cell } => {
                let eligible = state.current_stage(job).map(|s| s.eligible_cells.contains(&cell)).unwrap_or(false);
                let js = &state.jobs[job.index()];
                if !js.routing || !eligible {
                    return Err(EngineError::ContractViolation(format!("job {job} cannot be released to cell {cell}")));
                }
                let stage = js.stage;
                state.pending_events.schedule(now, EventKind::StageReleaseReady, Subject::job_at(job, stage, cell));
            }
            PhysicalAction::ReturnToBacklog { job } => {
                let js = &mut state.jobs[job.index()];
                if !js.routing {
                    return Err(EngineError::ContractViolation(format!("job {job} is not being routed")));
                }
                js.routing = false;
                js.hold = true;
            }
            PhysicalAction::Dispatch { job, machine } => {
                let m = &state.machines[machine.index()];
                let cell = m.cell;
                let js = &state.jobs[job.index()];
                if m.status != MachineStatus::Idle || js.status != JobStatus::Ready || js.location != Some(cell) {
                    return Err(EngineError::ContractViolation(format!(
                        "dispatch of job {job} to machine {machine} is infeasible"
                    )));
                }
                let family = state.current_stage(job).map(|s| s.setup_family);
                let needs_setup = m.family != family;
                let stage = js.stage;
                let buf = &mut state.cells[cell.index()];
                buf.ready.retain(|j| *j != job);
                buf.slots.retain(|j| *j != job);
                let admitted = buf.blocked.pop_front();
                if let Some(b) = admitted {
                    buf.slots.push(b);
                }
                let js = &mut state.jobs[job.index()];
                js.status = JobStatus::Processing;
                js.machine = Some(machine);
                js.waiting_since = None;
                let m = &mut state.machines[machine.index()];
                m.job = Some(job);
                let subject = Subject::job_at(job, stage, cell).with_machine(machine);
                if needs_setup {
                    m.status = MachineStatus::Setup;
                    set_pending(state, machine, now, EventKind::SetupStart, subject);
                } else {
                    m.status = MachineStatus::Processing;
                    let p = state.effective_processing_time(job, cell);
                    set_pending(state, machine, now + p, EventKind::Finish, subject);
                }
                if let Some(b) = admitted {
                    let bstage = state.jobs[b.index()].stage;
                    state.pending_events.schedule(now, EventKind::BufferAdmit, Subject::job_at(b, bstage, cell));
                }
            }
        }
    }
    Ok(())
}

/// Rolls the world forward until an agent must act or the episode ends.
pub fn advance(state: &mut WorldState, boundary: &mut dyn DecisionBoundary) -> Result<Advance, EngineError> {
    let mut realized = Vec::new();
    loop {
        while let Some(ev) = state.pending_events.pop_due(state.clock) {
            apply_event(state, &ev)?;
            boundary.observe(state, &ev);
            realized.push(ev);
        }
        if state.all_completed() {
            state.episode.status = EpisodeStatus::Done;
            state.episode.done = true;
            break;
        }
        if boundary.decision_required(state) {
            break;
        }
        if !state.pending_events.has_progress_capable() {
            // Held jobs become selectable again before giving up.
            if state.jobs.iter().any(|j| j.hold) {
                clear_holds(state);
                continue;
            }
            state.episode.status = EpisodeStatus::Deadlock;
            state.episode.deadlocked = true;
            break;
        }
        let next = state.pending_events.peek_time().expect("queue is non-empty");
        integrate_to(state, next);
    }
    Ok(Advance { epoch_time: state.clock, realized })
}

/// Limits consulted by [`check_termination`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub horizon_limit: u32,
    pub no_progress_window: u32,
}

impl From<&InstanceConfig> for Limits {
    fn from(c: &InstanceConfig) -> Self {
        Self { horizon_limit: c.horizon_limit, no_progress_window: c.no_progress_window }
    }
}

/// Applies the epoch-count stopping rules after a commit.
pub fn check_termination(state: &mut WorldState, limits: Limits) -> EpisodeStatus {
    if !state.episode.is_running() {
        return state.episode.status;
    }
    if state.all_completed() {
        state.episode.status = EpisodeStatus::Done;
        state.episode.done = true;
    } else if state.decision_epochs >= limits.horizon_limit
        || state.decision_epochs.saturating_sub(state.last_progress_epoch) >= limits.no_progress_window
    {
        state.episode.status = EpisodeStatus::Truncated;
        state.episode.truncated = true;
    }
    state.episode.status
}

/// Closes open ledgers and in-progress repairs at episode end.
pub fn finalize(state: &mut WorldState) {
    let now = state.clock;
    for m in &state.machines {
        if let Some(since) = m.down_since {
            state.accounting.repair_time += now - since;
        }
    }
    state.accounting.energy_overshoot.close();
    state.accounting.carbon_overshoot.close();
}

#[cfg(test)]
mod tests;
