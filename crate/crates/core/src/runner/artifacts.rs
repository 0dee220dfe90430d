//! Trace files, progress log, restart snapshot and the CSV summaries.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::engine::Event;
use crate::interpreter::{ActivationRecord, NoActionRecord};
use crate::metrics::{EpisodeMeta, EpisodeTrace, FinalSnapshot, MetricRecord, SuiteSummary, METRICS};
use crate::protocol::{Contract, ProtocolLog, ProtocolObject, SettlementRecord};

/// Per-case trace file kinds, in manifest order.
pub const TRACE_KINDS: [&str; 4] = ["world_event", "activation", "settlement", "protocol"];

pub const SUMMARY: &str = "summary.csv";
pub const SUITE_SUMMARY: &str = "suite_summary.csv";
pub const MANIFEST: &str = "artifacts.csv";
pub const PROGRESS_LOG: &str = "progress_log.jsonl";
pub const SNAPSHOT: &str = "progress_snapshot.json";

/// Columns of the per-case summary ahead of the metrics.
const CASE_COLUMNS: [&str; 7] = ["case_id", "instance", "mode", "controller", "seed", "framework", "status"];

pub(super) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.display().to_string(), source }
}

#[derive(Serialize, Deserialize)]
struct WorldEventFile {
    meta: EpisodeMeta,
    events: Vec<Event>,
    #[serde(rename = "final")]
    last: FinalSnapshot,
}

#[derive(Serialize, Deserialize)]
struct ActivationFile {
    case_id: String,
    activations: Vec<ActivationRecord>,
    no_actions: Vec<NoActionRecord>,
}

#[derive(Serialize, Deserialize)]
struct SettlementFile {
    case_id: String,
    contracts: Vec<Contract>,
    settlements: Vec<SettlementRecord>,
}

#[derive(Serialize, Deserialize)]
struct ProtocolFile {
    case_id: String,
    objects: Vec<ProtocolObject>,
}

/// Path of one trace file relative to the output directory.
pub fn trace_path(case_id: &str, kind: &str) -> PathBuf {
    Path::new("traces").join(format!("{case_id}_{kind}_trace.json"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).expect("trace types serialize");
    write_atomic(path, text.as_bytes())
}

/// Writes via a sibling temp file so readers never see a partial file.
pub(super) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| RunError::Artifact { path: path.display().to_string(), message: e.to_string() })
}

/// Persists the four trace files and returns (kind, relative path) rows.
pub fn write_trace(out: &Path, trace: &EpisodeTrace) -> Result<Vec<(String, PathBuf)>, RunError> {
    let id = trace.meta.case_id.as_str();
    let mut rows = Vec::new();
    for kind in TRACE_KINDS {
        let rel = trace_path(id, kind);
        let path = out.join(&rel);
        match kind {
            "world_event" => write_json(
                &path,
                &WorldEventFile { meta: trace.meta.clone(), events: trace.world_events.clone(), last: trace.last.clone() },
            )?,
            "activation" => write_json(
                &path,
                &ActivationFile {
                    case_id: id.to_string(),
                    activations: trace.activations.clone(),
                    no_actions: trace.no_actions.clone(),
                },
            )?,
            "settlement" => write_json(
                &path,
                &SettlementFile {
                    case_id: id.to_string(),
                    contracts: trace.protocol.contracts.clone(),
                    settlements: trace.protocol.settlements.clone(),
                },
            )?,
            _ => write_json(&path, &ProtocolFile { case_id: id.to_string(), objects: trace.protocol.objects.clone() })?,
        }
        rows.push((kind.to_string(), rel));
    }
    Ok(rows)
}

/// Reassembles an episode trace from its files.
pub fn read_trace(out: &Path, case_id: &str) -> Result<EpisodeTrace, RunError> {
    let w: WorldEventFile = read_json(&out.join(trace_path(case_id, "world_event")))?;
    let a: ActivationFile = read_json(&out.join(trace_path(case_id, "activation")))?;
    let s: SettlementFile = read_json(&out.join(trace_path(case_id, "settlement")))?;
    let p: ProtocolFile = read_json(&out.join(trace_path(case_id, "protocol")))?;
    for (kind, other) in [("activation", &a.case_id), ("settlement", &s.case_id), ("protocol", &p.case_id)] {
        if other != case_id || w.meta.case_id != case_id {
            return Err(RunError::Artifact {
                path: trace_path(case_id, kind).display().to_string(),
                message: format!("belongs to case {other}"),
            });
        }
    }
    Ok(EpisodeTrace {
        meta: w.meta,
        world_events: w.events,
        activations: a.activations,
        no_actions: a.no_actions,
        protocol: ProtocolLog { objects: p.objects, settlements: s.settlements, contracts: s.contracts },
        last: w.last,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Completed,
    Skipped,
    Failed,
}

/// One line of `progress_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressEntry {
    pub case_id: String,
    pub status: CaseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
    #[serde(default)]
    pub decisions: u32,
    #[serde(default)]
    pub controller_decisions: u32,
    #[serde(default)]
    pub fallback_decisions: u32,
    #[serde(default)]
    pub no_action_events: u32,
    /// False for controllers whose replies a rerun cannot reproduce.
    pub reproducible: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub meta: EpisodeMeta,
    pub completed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Restart state: every case that reached an outcome in this directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub cases: BTreeMap<String, SnapshotEntry>,
}

impl Snapshot {
    pub fn load(out: &Path) -> Result<Self, RunError> {
        let path = out.join(SNAPSHOT);
        if !path.exists() {
            return Ok(Self::default());
        }
        read_json(&path)
    }

    pub fn save(&self, out: &Path) -> Result<(), RunError> {
        write_json(&out.join(SNAPSHOT), self)
    }

    pub fn is_completed(&self, case_id: &str) -> bool {
        self.cases.get(case_id).is_some_and(|e| e.completed)
    }

    /// Completed entries ordered by (instance, mode, controller, seed).
    pub fn completed(&self) -> Vec<&SnapshotEntry> {
        let mut v: Vec<_> = self.cases.values().filter(|e| e.completed).collect();
        v.sort_by(|a, b| {
            (&a.meta.instance, &a.meta.mode, &a.meta.controller, a.meta.seed)
                .cmp(&(&b.meta.instance, &b.meta.mode, &b.meta.controller, b.meta.seed))
        });
        v
    }
}

pub(super) fn append_progress(out: &Path, entry: &ProgressEntry) -> Result<(), RunError> {
    let path = out.join(PROGRESS_LOG);
    let mut f = fs::OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
    let mut line = serde_json::to_string(entry).expect("progress entries serialize");
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(io_err(&path))
}

pub fn read_progress(out: &Path) -> Result<Vec<ProgressEntry>, RunError> {
    let path = out.join(PROGRESS_LOG);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| RunError::Artifact { path: path.display().to_string(), message: e.to_string() })
        })
        .collect()
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> RunError + '_ {
    move |e| RunError::Artifact { path: path.display().to_string(), message: e.to_string() }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Metric columns of the per-case summary. Wall-clock runtime is left to the
/// progress log and the suite summary so that case rows stay reproducible.
fn case_metric_columns() -> impl Iterator<Item = (usize, &'static str)> {
    METRICS.iter().enumerate().filter(|(_, (sym, _))| *sym != "wc").map(|(i, (_, name))| (i, *name))
}

pub(super) fn write_summary(out: &Path, rows: &[(EpisodeMeta, MetricRecord)]) -> Result<(), RunError> {
    let path = out.join(SUMMARY);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    let mut header: Vec<&str> = CASE_COLUMNS.to_vec();
    header.extend(case_metric_columns().map(|(_, n)| n));
    w.write_record(&header).map_err(csv_err(&path))?;
    for (meta, rec) in rows {
        let values = rec.values();
        let mut row = vec![
            meta.case_id.clone(),
            meta.instance.clone(),
            meta.mode.clone(),
            meta.controller.clone(),
            meta.seed.to_string(),
            meta.framework.clone().unwrap_or_default(),
            "completed".to_string(),
        ];
        row.extend(case_metric_columns().map(|(i, _)| cell(values[i])));
        w.write_record(&row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))
}

/// Long format: one row per (group, metric).
pub(super) fn write_suite_summary(out: &Path, groups: &[SuiteSummary]) -> Result<(), RunError> {
    let path = out.join(SUITE_SUMMARY);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["instance", "mode", "controller", "seeds", "metric", "symbol", "value"]).map_err(csv_err(&path))?;
    for g in groups {
        for ((sym, name), v) in METRICS.iter().zip(g.metrics.values()) {
            let seeds = g.seeds.to_string();
            w.write_record([g.instance.as_str(), &g.mode, &g.controller, &seeds, name, sym, &cell(v)])
                .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))
}

pub(super) fn write_manifest(out: &Path, rows: &[(String, String, PathBuf)]) -> Result<(), RunError> {
    let path = out.join(MANIFEST);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["case_id", "kind", "path"]).map_err(csv_err(&path))?;
    for (case, kind, rel) in rows {
        w.write_record([case.as_str(), kind.as_str(), &rel.display().to_string()]).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))
}

/// Reads `summary.csv` back into (case id, raw row) pairs.
pub fn read_summary_rows(out: &Path) -> Result<BTreeMap<String, Vec<String>>, RunError> {
    let path = out.join(SUMMARY);
    let mut r = csv::Reader::from_path(&path).map_err(csv_err(&path))?;
    let mut rows = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(&path))?;
        let fields: Vec<String> = rec.iter().map(str::to_string).collect();
        rows.insert(fields[0].clone(), fields);
    }
    Ok(rows)
}
