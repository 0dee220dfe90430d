//! Episode loop, suite execution and artifact files.
//!
//! One episode drives advance, interpret, decide and commit until the engine
//! reports a terminal status. Suites fan episodes out over seeds, either on a
//! rayon pool or sequentially, and persist traces plus the summary files.

mod artifacts;
mod suite;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use artifacts::{
    read_progress, read_summary_rows, read_trace, trace_path, write_trace, CaseStatus, ProgressEntry, Snapshot,
    SnapshotEntry, MANIFEST, PROGRESS_LOG, SNAPSHOT, SUITE_SUMMARY, SUMMARY, TRACE_KINDS,
};
pub use suite::{run_case, run_cases, run_suite, CaseResult, CaseSpec, RunSpec, SuiteReport};

use crate::controllers::{decide, runtime_fallback, Controller, ControllerBinding, DecisionAudit};
use crate::engine::{
    advance, check_termination, commit_decisions, finalize, init_world, EngineError, EpisodeStatus, JobStatus, JointAction, Limits,
    WorldState,
};
use crate::instance::{InstanceConfig, InstanceError};
use crate::interpreter::{interpret, Activation};
use crate::metrics::{compute_episode_metrics, EpisodeMeta, EpisodeTrace, FinalSnapshot, JobOutcome, MetricRecord, MetricsError};
use crate::protocol::{AuthorityMode, ProtocolError, ProtocolRuntime, RegistryError};

/// Consecutive rounds that only produce no-action records before the loop
/// is declared stuck.
const MAX_IDLE_ROUNDS: u32 = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("episode stalled at t={time}: {reason}")]
    Stalled { time: f64, reason: String },
    #[error("unknown case id `{0}`")]
    UnknownCase(String),
    #[error("invalid run spec: {0}")]
    InvalidSpec(String),
    #[error("controller could not be started: {0}")]
    Spawn(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed artifact {path}: {message}")]
    Artifact { path: String, message: String },
}

/// Per-run overrides of the instance stopping rules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LimitOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_limit: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_progress_window: Option<u32>,
}

impl LimitOverrides {
    pub fn apply(&self, config: &InstanceConfig) -> InstanceConfig {
        let mut c = config.clone();
        if let Some(h) = self.horizon_limit {
            c.horizon_limit = h;
        }
        if let Some(w) = self.no_progress_window {
            c.no_progress_window = w;
        }
        c
    }

    pub fn is_empty(&self) -> bool {
        self.horizon_limit.is_none() && self.no_progress_window.is_none()
    }
}

/// `<instance>__<mode>__<controller>__seed<k>`
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CaseId {
    pub instance: String,
    pub mode: String,
    pub controller: String,
    pub seed: u64,
}

impl CaseId {
    pub fn parse(s: &str) -> Option<Self> {
        let parts: Vec<&str> = s.split("__").collect();
        let [instance, mode, controller, seed] = parts.as_slice() else { return None };
        let seed = seed.strip_prefix("seed")?.parse().ok()?;
        if instance.is_empty() || mode.is_empty() || controller.is_empty() {
            return None;
        }
        Some(Self { instance: instance.to_string(), mode: mode.to_string(), controller: controller.to_string(), seed })
    }
}

impl std::fmt::Display for CaseId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}__{}__{}__seed{}", self.instance, self.mode, self.controller, self.seed)
    }
}

/// A finished episode as seen by the runner.
#[derive(Debug, Clone)]
pub struct EpisodeOutput {
    pub trace: EpisodeTrace,
    /// Includes wall-clock runtime.
    pub metrics: MetricRecord,
    pub audit: DecisionAudit,
    /// Distinct controller failure messages, in first-seen order.
    pub failures: Vec<String>,
}

/// Whether reruns of this binding can reproduce a trace.
pub fn reproducible(binding: &ControllerBinding) -> bool {
    matches!(binding, ControllerBinding::RuleGreedy | ControllerBinding::RuleFallback | ControllerBinding::RuleRandomSeeded { .. })
}

fn snapshot(state: &WorldState) -> FinalSnapshot {
    let jobs = state
        .jobs
        .iter()
        .zip(state.specs.iter())
        .map(|(js, spec)| {
            let stages = spec.route.len() as u32;
            let completed_stages = if js.status == JobStatus::Completed { stages } else { js.stage.min(stages) };
            JobOutcome {
                job: js.id,
                due_date: spec.due_date,
                completion_time: js.completion_time,
                stages,
                completed_stages,
            }
        })
        .collect();
    FinalSnapshot {
        end_time: state.clock,
        epochs: state.decision_epochs,
        flags: state.episode,
        accounting: state.accounting.clone(),
        jobs,
    }
}

/// Runs one seed to a terminal status.
pub fn run_episode(
    config: Arc<InstanceConfig>,
    mode: &AuthorityMode,
    controller: &mut dyn Controller,
    meta: EpisodeMeta,
) -> Result<EpisodeOutput, RunError> {
    run_episode_with(config, mode, controller, meta, &mut |_, _| {})
}

/// Like [`run_episode`], calling `inspect` with the pre-decision state for
/// every decided activation before it is applied.
pub fn run_episode_with(
    config: Arc<InstanceConfig>,
    mode: &AuthorityMode,
    controller: &mut dyn Controller,
    meta: EpisodeMeta,
    inspect: &mut dyn FnMut(&WorldState, &Activation),
) -> Result<EpisodeOutput, RunError> {
    let started = Instant::now();
    let limits = Limits::from(&*config);
    let mut state = init_world(config.clone(), meta.seed);
    let mut runtime = ProtocolRuntime::new(mode.clone(), &config);
    let mut world_events = Vec::new();
    let mut activations = Vec::new();
    let mut no_actions = Vec::new();
    let mut audit = DecisionAudit::default();
    let mut failures: Vec<String> = Vec::new();
    let mut idle = 0u32;

    loop {
        let adv = advance(&mut state, &mut runtime)?;
        world_events.extend(adv.realized.iter().cloned());
        if !state.episode.is_running() {
            break;
        }
        let mut interp = interpret(&adv.realized, &runtime, &state, mode);
        if interp.activations.is_empty() {
            if interp.no_actions.is_empty() {
                return Err(RunError::Stalled { time: state.clock, reason: "decision required but nobody can act".into() });
            }
            idle += 1;
            if idle > MAX_IDLE_ROUNDS {
                return Err(RunError::Stalled { time: state.clock, reason: "only no-action rounds".into() });
            }
            let actions = runtime.note_no_actions(&state, state.decision_epochs, &interp.no_actions)?;
            let joint = JointAction { actions, decisions: 0, no_actions: interp.no_actions.len() as u32 };
            commit_decisions(&mut state, &joint)?;
            audit.no_action_events += joint.no_actions;
            no_actions.append(&mut interp.no_actions);
            if check_termination(&mut state, limits) != EpisodeStatus::Running {
                break;
            }
            continue;
        }
        idle = 0;
        let epoch = state.decision_epochs + 1;
        for act in &mut interp.activations {
            let outcome = if act.record.ctx.runtime_fallback {
                runtime_fallback(&act.payload)
            } else {
                decide(controller, &act.payload, &act.mask)
            };
            if let Some(f) = &outcome.failure {
                if !failures.contains(f) {
                    failures.push(f.clone());
                }
            }
            audit.record(&outcome);
            act.record.decision = Some(outcome);
            inspect(&state, act);
        }
        for r in &mut interp.no_actions {
            r.epoch = epoch;
        }
        let mut actions = runtime.note_no_actions(&state, epoch, &interp.no_actions)?;
        actions.extend(runtime.apply(&state, epoch, &interp.activations)?);
        state.decision_epochs = epoch;
        let joint = JointAction {
            actions,
            decisions: interp.activations.len() as u32,
            no_actions: interp.no_actions.len() as u32,
        };
        commit_decisions(&mut state, &joint)?;
        audit.no_action_events += joint.no_actions;
        activations.extend(interp.activations.into_iter().map(|a| a.record));
        no_actions.append(&mut interp.no_actions);
        if check_termination(&mut state, limits) != EpisodeStatus::Running {
            break;
        }
    }
    finalize(&mut state);
    let trace = EpisodeTrace {
        meta,
        world_events,
        activations,
        no_actions,
        protocol: runtime.into_log(),
        last: snapshot(&state),
    };
    let mut metrics = compute_episode_metrics(&trace)?;
    metrics.wc = Some(started.elapsed().as_secs_f64());
    Ok(EpisodeOutput { trace, metrics, audit, failures })
}
