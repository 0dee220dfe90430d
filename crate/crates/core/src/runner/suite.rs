//! Seed fan-out, restart handling and the suite-level files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::artifacts::{
    append_progress, io_err, read_trace, trace_path, write_manifest, write_suite_summary, write_summary, write_trace,
    CaseStatus, ProgressEntry, Snapshot, SnapshotEntry, TRACE_KINDS,
};
use super::{reproducible, run_episode, CaseId, EpisodeOutput, LimitOverrides, RunError};
use crate::controllers::{ControllerBinding, ExternalProcess};
use crate::instance::{resolve_suite, InstanceConfig};
use crate::metrics::{aggregate_suite, compute_episode_metrics, EpisodeMeta, MetricRecord, SuiteSummary};
use crate::protocol::AuthorityMode;

/// Everything needed to run a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    /// Suite name, shipped instance name or path to an instance document.
    pub suite: String,
    pub mode: AuthorityMode,
    pub controller: ControllerBinding,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub limits: LimitOverrides,
    /// Concurrent episodes; defaults to min(cases, logical cores).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    /// Orchestration label recorded in metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub framework: Option<String>,
}

impl RunSpec {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.seeds.is_empty() {
            return Err(RunError::InvalidSpec("seed list is empty".into()));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(RunError::InvalidSpec("seed list has duplicates".into()));
        }
        if self.jobs == Some(0) {
            return Err(RunError::InvalidSpec("--jobs must be at least 1".into()));
        }
        Ok(())
    }

    fn configs(&self) -> Result<Vec<Arc<InstanceConfig>>, RunError> {
        Ok(resolve_suite(&self.suite)?.into_iter().map(|c| Arc::new(self.limits.apply(&c))).collect())
    }

    fn case(&self, config: &Arc<InstanceConfig>, seed: u64) -> CaseSpec {
        CaseSpec {
            config: config.clone(),
            mode: self.mode.clone(),
            controller: self.controller.clone(),
            seed,
            framework: self.framework.clone(),
        }
    }
}

/// One episode to run.
#[derive(Debug, Clone)]
pub struct CaseSpec {
    pub config: Arc<InstanceConfig>,
    pub mode: AuthorityMode,
    pub controller: ControllerBinding,
    pub seed: u64,
    pub framework: Option<String>,
}

impl CaseSpec {
    pub fn case_id(&self) -> String {
        CaseId {
            instance: self.config.id.clone(),
            mode: self.mode.mode_id.clone(),
            controller: self.controller.label(),
            seed: self.seed,
        }
        .to_string()
    }

    pub fn meta(&self) -> EpisodeMeta {
        EpisodeMeta {
            case_id: self.case_id(),
            instance: self.config.id.clone(),
            mode: self.mode.mode_id.clone(),
            controller: self.controller.label(),
            seed: self.seed,
            framework: self.framework.clone(),
        }
    }

    pub fn run(&self) -> Result<EpisodeOutput, RunError> {
        let mut controller = self.controller.instantiate();
        run_episode(self.config.clone(), &self.mode, controller.as_mut(), self.meta())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub case_id: String,
    pub status: CaseStatus,
    /// Present for completed and skipped cases.
    pub metrics: Option<MetricRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    /// Cases of this invocation, in spec order.
    pub cases: Vec<CaseResult>,
    /// One entry per (instance, mode, controller) completed in the output
    /// directory.
    pub summaries: Vec<SuiteSummary>,
}

impl SuiteReport {
    pub fn failed(&self) -> impl Iterator<Item = &CaseResult> {
        self.cases.iter().filter(|c| c.status == CaseStatus::Failed)
    }

    pub fn all_ok(&self) -> bool {
        self.failed().next().is_none()
    }
}

fn default_jobs(cases: usize) -> usize {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    cases.clamp(1, cores)
}

#[cfg(feature = "parallel")]
fn fan_out<T: Send>(cases: &[CaseSpec], jobs: usize, f: impl Fn(&CaseSpec) -> T + Sync) -> Vec<T> {
    use rayon::prelude::*;
    if jobs <= 1 || cases.len() <= 1 {
        return cases.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| cases.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); running sequentially");
            cases.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn fan_out<T: Send>(cases: &[CaseSpec], _jobs: usize, f: impl Fn(&CaseSpec) -> T + Sync) -> Vec<T> {
    cases.iter().map(f).collect()
}

/// Runs cases without touching the filesystem. Results come back in input
/// order whatever the degree of parallelism.
pub fn run_cases(cases: &[CaseSpec], jobs: usize) -> Vec<Result<EpisodeOutput, RunError>> {
    fan_out(cases, jobs, CaseSpec::run)
}

fn probe(binding: &ControllerBinding) -> Result<(), RunError> {
    if let ControllerBinding::ExternalProcess { command, .. } = binding {
        ExternalProcess::probe(command).map_err(RunError::Spawn)?;
    }
    Ok(())
}

fn progress_of(case_id: &str, binding: &ControllerBinding, status: CaseStatus) -> ProgressEntry {
    ProgressEntry {
        case_id: case_id.to_string(),
        status,
        runtime_seconds: None,
        decisions: 0,
        controller_decisions: 0,
        fallback_decisions: 0,
        no_action_events: 0,
        reproducible: reproducible(binding),
        failures: Vec::new(),
        error: None,
    }
}

struct Shared<'a> {
    out: &'a Path,
    snapshot: Mutex<Snapshot>,
}

impl Shared<'_> {
    /// Persists one finished case; returns its result row.
    fn finish(&self, case: &CaseSpec, result: Result<EpisodeOutput, RunError>) -> CaseResult {
        let id = case.case_id();
        let persisted = result.and_then(|o| write_trace(self.out, &o.trace).map(|_| o));
        let mut entry = progress_of(&id, &case.controller, CaseStatus::Completed);
        let snap = match &persisted {
            Ok(o) => {
                entry.runtime_seconds = o.metrics.wc;
                entry.decisions = o.audit.total();
                entry.controller_decisions = o.audit.controller_decisions;
                entry.fallback_decisions = o.audit.fallback_decisions;
                entry.no_action_events = o.audit.no_action_events;
                entry.failures = o.failures.clone();
                SnapshotEntry { meta: case.meta(), completed: true, runtime_seconds: o.metrics.wc, error: None }
            }
            Err(e) => {
                log::error!("case {id} failed: {e}");
                entry.status = CaseStatus::Failed;
                entry.error = Some(e.to_string());
                SnapshotEntry { meta: case.meta(), completed: false, runtime_seconds: None, error: Some(e.to_string()) }
            }
        };
        let mut lock = self.snapshot.lock().unwrap_or_else(|p| p.into_inner());
        lock.cases.insert(id.clone(), snap);
        let saved = lock.save(self.out).and_then(|_| append_progress(self.out, &entry));
        drop(lock);
        match (persisted, saved) {
            (Ok(o), Ok(())) => CaseResult { case_id: id, status: CaseStatus::Completed, metrics: Some(o.metrics), error: None },
            (Err(e), _) | (_, Err(e)) => {
                CaseResult { case_id: id, status: CaseStatus::Failed, metrics: None, error: Some(e.to_string()) }
            }
        }
    }
}

fn traces_present(out: &Path, case_id: &str) -> bool {
    TRACE_KINDS.iter().all(|k| out.join(trace_path(case_id, k)).exists())
}

fn execute(spec: &RunSpec, cases: Vec<CaseSpec>, force: bool) -> Result<SuiteReport, RunError> {
    probe(&spec.controller)?;
    let out = spec.output_dir.as_path();
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let snapshot = Snapshot::load(out)?;

    let mut results: Vec<Option<CaseResult>> = vec![None; cases.len()];
    let mut pending = Vec::new();
    let mut fresh: BTreeMap<String, MetricRecord> = BTreeMap::new();
    for (i, case) in cases.iter().enumerate() {
        let id = case.case_id();
        if !force && snapshot.is_completed(&id) && traces_present(out, &id) {
            append_progress(out, &progress_of(&id, &case.controller, CaseStatus::Skipped))?;
            results[i] = Some(CaseResult { case_id: id, status: CaseStatus::Skipped, metrics: None, error: None });
        } else {
            pending.push(i);
        }
    }
    let todo: Vec<CaseSpec> = pending.iter().map(|&i| cases[i].clone()).collect();
    let jobs = spec.jobs.unwrap_or_else(|| default_jobs(todo.len()));
    let shared = Shared { out, snapshot: Mutex::new(snapshot) };
    let done = fan_out(&todo, jobs, |c| shared.finish(c, c.run()));
    for (i, r) in pending.into_iter().zip(done) {
        if let Some(m) = &r.metrics {
            fresh.insert(r.case_id.clone(), m.clone());
        }
        results[i] = Some(r);
    }
    let snapshot = shared.snapshot.into_inner().unwrap_or_else(|p| p.into_inner());
    let finished = write_outputs(out, &snapshot, &fresh)?;
    let cases = results
        .into_iter()
        .map(|r| {
            let mut r = r.expect("every case has a result");
            if r.status == CaseStatus::Skipped {
                r.metrics = finished.get(&r.case_id).cloned();
            }
            r
        })
        .collect();
    let summaries = group_summaries(&snapshot, &finished)?;
    Ok(SuiteReport { cases, summaries })
}

fn group_summaries(snapshot: &Snapshot, finished: &BTreeMap<String, MetricRecord>) -> Result<Vec<SuiteSummary>, RunError> {
    let mut groups: BTreeMap<(String, String, String), Vec<(EpisodeMeta, MetricRecord)>> = BTreeMap::new();
    for e in snapshot.completed() {
        let m = &e.meta;
        if let Some(rec) = finished.get(&m.case_id) {
            groups.entry((m.instance.clone(), m.mode.clone(), m.controller.clone())).or_default().push((m.clone(), rec.clone()));
        }
    }
    groups.values().map(|rows| aggregate_suite(rows).map_err(RunError::from)).collect()
}

/// Rewrites summary.csv, artifacts.csv and suite_summary.csv from every
/// completed case in the directory. Cases not run in this invocation are
/// recomputed from their traces.
fn write_outputs(
    out: &Path,
    snapshot: &Snapshot,
    fresh: &BTreeMap<String, MetricRecord>,
) -> Result<BTreeMap<String, MetricRecord>, RunError> {
    let mut rows = Vec::new();
    let mut manifest = Vec::new();
    let mut finished = BTreeMap::new();
    for e in snapshot.completed() {
        let id = &e.meta.case_id;
        let rec = match fresh.get(id) {
            Some(r) => r.clone(),
            None => {
                let mut r = compute_episode_metrics(&read_trace(out, id)?)?;
                r.wc = e.runtime_seconds;
                r
            }
        };
        for kind in TRACE_KINDS {
            manifest.push((id.clone(), kind.to_string(), trace_path(id, kind)));
        }
        rows.push((e.meta.clone(), rec.clone()));
        finished.insert(id.clone(), rec);
    }
    write_summary(out, &rows)?;
    write_manifest(out, &manifest)?;
    let groups = group_summaries(snapshot, &finished)?;
    write_suite_summary(out, &groups)?;
    Ok(finished)
}

/// Runs every seed of every instance in the suite, skipping cases that a
/// previous run in the same directory already completed.
pub fn run_suite(spec: &RunSpec) -> Result<SuiteReport, RunError> {
    spec.validate()?;
    let configs = spec.configs()?;
    let cases = configs.iter().flat_map(|c| spec.seeds.iter().map(move |s| (c, *s))).map(|(c, s)| spec.case(c, s)).collect();
    execute(spec, cases, false)
}

/// Reruns one case. The instance, mode and seed come from `case_id`; the
/// controller comes from `spec`, so a different controller yields a new
/// case id next to the original.
pub fn run_case(spec: &RunSpec, case_id: &str) -> Result<SuiteReport, RunError> {
    let parsed = CaseId::parse(case_id).ok_or_else(|| RunError::UnknownCase(case_id.to_string()))?;
    if parsed.mode != spec.mode.mode_id {
        return Err(RunError::UnknownCase(format!("{case_id} (mode is {})", spec.mode.mode_id)));
    }
    let configs = spec.configs()?;
    let config = configs
        .iter()
        .find(|c| c.id == parsed.instance)
        .ok_or_else(|| RunError::UnknownCase(format!("{case_id} (instance not in suite {})", spec.suite)))?;
    let case = spec.case(config, parsed.seed);
    execute(spec, vec![case], true)
}
