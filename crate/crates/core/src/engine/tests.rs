use std::sync::Arc;

use super::*;
use crate::instance::{load_instance, load_shipped};

/// Test boundary: stop whenever any of `kinds` was realized since the last call.
struct StopOn {
    kinds: Vec<EventKind>,
    hit: bool,
}

impl StopOn {
    fn new(kinds: &[EventKind]) -> Self {
        Self { kinds: kinds.to_vec(), hit: false }
    }
}

impl DecisionBoundary for StopOn {
    fn observe(&mut self, _state: &WorldState, event: &Event) {
        if self.kinds.contains(&event.kind) {
            self.hit = true;
        }
    }
    fn decision_required(&self, _state: &WorldState) -> bool {
        self.hit
    }
}

fn toy(jobs: &str, cells: u32, machines: u32, extra: &str) -> Arc<InstanceConfig> {
    let doc = format!(
        r#"
schema_version = "desbench.instance/1"
id = "toy"
[hierarchy]
partition = [{cells}]
cell_count = {cells}
machines_per_cell = {machines}
{jobs}
[budgets]
energy_cap = 150.0
carbon_cap = 90.0
wip_cap = 4
[failure_profile]
kind = "exponential_nominal"
rate = 0.0
repair = {{ kind = "constant", value = 2.0 }}
[scenario]
name = "toy"
backlog_top_k = 2
transport_multiplier = 1.0
inbound_cap = 1
{extra}
"#
    );
    Arc::new(load_instance(&doc).unwrap())
}

fn one_stage_jobs(n: u32, cells: &str, p: f64) -> String {
    (0..n)
        .map(|j| {
            format!(
                "[[jobs_or_grammar.jobs]]\njob_id = {j}\nrelease_time = 0.0\n[[jobs_or_grammar.jobs.route]]\neligible_cells = {cells}\nbase_processing_time = {p}\nsetup_family = 0\n"
            )
        })
        .collect()
}

fn kinds(evs: &[Event]) -> Vec<EventKind> {
    evs.iter().map(|e| e.kind).collect()
}

#[test]
fn init_registers_full_backlog_with_zero_energy() {
    let cfg = Arc::new(load_shipped("a3c9_1").unwrap());
    let w = init_world(cfg.clone(), 4);
    assert_eq!(w.backlog_total(), 10);
    assert_eq!(w.accounting.energy_kwh, 0.0);
    assert_eq!(w.in_flight_jobs(), 0);
    let initial: Vec<_> = w.pending_events.iter().filter(|e| e.kind == EventKind::SharedBacklogArrival).collect();
    assert_eq!(initial.len(), 5);
    assert_eq!(initial[0].t, 0.0);
    assert_eq!(initial[0].subject.jobs.len(), 3);
    let a = serde_json::to_string(&w).unwrap();
    let b = serde_json::to_string(&init_world(cfg, 4)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn one_job_toy_has_single_backlog_arrival() {
    let cfg = toy(&one_stage_jobs(1, "[0]", 2.0), 1, 1, "");
    let w = init_world(cfg, 0);
    assert_eq!(w.pending_events.len(), 1);
    let e = w.pending_events.iter().next().unwrap();
    assert_eq!((e.kind, e.t), (EventKind::SharedBacklogArrival, 0.0));
}

fn route_and_dispatch(w: &mut WorldState, job: u32, cell: u32) {
    let job = JobId(job);
    commit_decisions(
        w,
        &JointAction {
            actions: vec![PhysicalAction::SelectBacklog { job }, PhysicalAction::Release { job, cell: CellId(cell) }],
            decisions: 2,
            no_actions: 0,
        },
    )
    .unwrap();
}

#[test]
fn setup_then_finish_realized_in_one_call() {
    let cfg = toy(&one_stage_jobs(1, "[0]", 3.5), 1, 1, "");
    let mut w = init_world(cfg, 0);
    advance(&mut w, &mut StopOn::new(&[EventKind::SharedBacklogArrival])).unwrap();
    route_and_dispatch(&mut w, 0, 0);
    let adv = advance(&mut w, &mut StopOn::new(&[EventKind::Arrival])).unwrap();
    assert_eq!(kinds(&adv.realized), vec![EventKind::StageReleaseReady, EventKind::TransportStart, EventKind::TransportComplete, EventKind::Arrival]);
    assert_eq!(adv.epoch_time, 1.0);
    let joint = JointAction {
        actions: vec![PhysicalAction::Dispatch { job: JobId(0), machine: MachineId(0) }],
        decisions: 1,
        no_actions: 0,
    };
    commit_decisions(&mut w, &joint).unwrap();
    let adv = advance(&mut w, &mut StopOn::new(&[EventKind::Finish])).unwrap();
    assert_eq!(kinds(&adv.realized), vec![EventKind::SetupStart, EventKind::SetupComplete, EventKind::Finish]);
    assert_eq!(adv.epoch_time, 1.0 + 0.5 + 3.5);
    assert_eq!(w.episode.status, EpisodeStatus::Done);
    assert_eq!(w.accounting.completed_jobs, 1);
    assert_eq!(w.machines[0].status, MachineStatus::Idle);
    // Makespan = transport + setup + processing for the toy.
    assert!((w.accounting.setup_energy - 6.0 * w.accounting.setup_time).abs() < 1e-12);
    assert!((w.accounting.transport_energy - 0.2).abs() < 1e-12);
}

#[test]
fn full_buffer_blocks_then_admits() {
    let cfg = toy(&one_stage_jobs(2, "[0]", 3.0), 1, 1, "");
    let mut w = init_world(cfg, 0);
    advance(&mut w, &mut StopOn::new(&[EventKind::SharedBacklogArrival])).unwrap();
    route_and_dispatch(&mut w, 0, 0);
    route_and_dispatch(&mut w, 1, 0);
    let adv = advance(&mut w, &mut StopOn::new(&[EventKind::Arrival])).unwrap();
    assert!(kinds(&adv.realized).contains(&EventKind::BlockingStart));
    assert_eq!(w.jobs[1].status, JobStatus::Blocked);
    assert_eq!(w.cells[0].blocked.len(), 1);
    assert_eq!(w.inbound_occupancy(CellId(0)), 1);
    let joint = JointAction {
        actions: vec![PhysicalAction::Dispatch { job: JobId(0), machine: MachineId(0) }],
        decisions: 1,
        no_actions: 0,
    };
    commit_decisions(&mut w, &joint).unwrap();
    let adv = advance(&mut w, &mut StopOn::new(&[EventKind::BlockingEnd])).unwrap();
    assert!(kinds(&adv.realized).starts_with(&[EventKind::SetupStart, EventKind::BufferAdmit, EventKind::BlockingEnd]));
    assert!((w.accounting.blocking_time - 1.0).abs() < 1e-12);
}

#[test]
fn breakdown_interrupts_and_resumes_residual_work() {
    let cfg = toy(&one_stage_jobs(1, "[0]", 4.0), 1, 1, "");
    let mut w = init_world(cfg, 0);
    advance(&mut w, &mut StopOn::new(&[EventKind::SharedBacklogArrival])).unwrap();
    route_and_dispatch(&mut w, 0, 0);
    advance(&mut w, &mut StopOn::new(&[EventKind::Arrival])).unwrap();
    let joint = JointAction {
        actions: vec![PhysicalAction::Dispatch { job: JobId(0), machine: MachineId(0) }],
        decisions: 1,
        no_actions: 0,
    };
    commit_decisions(&mut w, &joint).unwrap();
    // Processing runs over [1.5, 5.5]; break at 2.5 with 3.0 left.
    w.pending_events.schedule(2.5, EventKind::Breakdown, Subject::machine(MachineId(0), CellId(0)));
    let adv = advance(&mut w, &mut StopOn::new(&[EventKind::Finish])).unwrap();
    let k = kinds(&adv.realized);
    assert!(k.ends_with(&[EventKind::Breakdown, EventKind::Repair, EventKind::Finish]), "{k:?}");
    assert!((adv.epoch_time - 7.5).abs() < 1e-12);
    assert!((w.accounting.downtime - 2.0).abs() < 1e-12);
    finalize(&mut w);
    assert!((w.accounting.downtime - w.accounting.repair_time).abs() < 1e-12);
    assert_eq!(w.accounting.breakdown_count, 1);
}

#[test]
fn empty_queue_without_decisions_deadlocks() {
    let cfg = toy(&one_stage_jobs(1, "[0]", 1.0), 1, 1, "");
    let mut w = init_world(cfg, 0);
    let adv = advance(&mut w, &mut StopOn::new(&[])).unwrap();
    assert_eq!(adv.realized.len(), 1);
    assert_eq!(w.episode.status, EpisodeStatus::Deadlock);
    assert!(w.episode.deadlocked && !w.episode.truncated);
}

#[test]
fn termination_windows() {
    let cfg = toy(&one_stage_jobs(1, "[0]", 1.0), 1, 1, "");
    let limits = Limits { horizon_limit: 400, no_progress_window: 50 };
    let mut w = init_world(cfg.clone(), 0);
    w.decision_epochs = 49;
    assert_eq!(check_termination(&mut w, limits), EpisodeStatus::Running);
    w.decision_epochs = 50;
    assert_eq!(check_termination(&mut w, limits), EpisodeStatus::Truncated);
    let mut w = init_world(cfg, 0);
    w.decision_epochs = 1;
    w.last_progress_epoch = 1;
    assert_eq!(check_termination(&mut w, Limits { horizon_limit: 1, no_progress_window: 50 }), EpisodeStatus::Truncated);
}

#[test]
fn infeasible_commits_and_corrupt_events_are_faults() {
    let cfg = toy(&one_stage_jobs(1, "[0]", 1.0), 2, 1, "");
    let mut w = init_world(cfg, 0);
    let bad = JointAction {
        actions: vec![PhysicalAction::Dispatch { job: JobId(0), machine: MachineId(0) }],
        decisions: 1,
        no_actions: 0,
    };
    assert!(matches!(commit_decisions(&mut w, &bad), Err(EngineError::ContractViolation(_))));
    let ev = Event { t: 0.0, kind: EventKind::Finish, subject: Subject::job_at(JobId(0), 0, CellId(0)).with_machine(MachineId(0)), seq: 99 };
    assert!(matches!(apply_event(&mut w, &ev), Err(EngineError::Corruption { .. })));
}

#[test]
fn no_action_commit_only_bumps_counter() {
    let cfg = toy(&one_stage_jobs(1, "[0]", 1.0), 1, 1, "");
    let mut w = init_world(cfg, 0);
    let before = serde_json::to_value(&w).unwrap();
    commit_decisions(&mut w, &JointAction { actions: vec![], decisions: 0, no_actions: 1 }).unwrap();
    let mut after = serde_json::to_value(&w).unwrap();
    assert_eq!(after["accounting"]["no_action_events"], 1);
    after["accounting"]["no_action_events"] = 0.into();
    assert_eq!(before, after);
}

#[test]
fn overshoot_ledger_integrates_excess() {
    let mut l = OvershootLedger::default();
    l.step(0.0, 1.0, 5.0, 10.0);
    l.step(1.0, 3.0, 20.0, 10.0);
    l.step(3.0, 3.0, 0.0, 10.0);
    l.step(3.0, 4.0, 0.0, 10.0);
    l.close();
    assert_eq!(l.intervals, vec![OvershootInterval { start: 1.0, end: 3.0, excess: 20.0 }]);
}
