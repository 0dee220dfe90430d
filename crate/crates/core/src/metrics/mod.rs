//! Metric catalog computed from episode traces, and suite aggregation.

mod trace;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use trace::{EpisodeMeta, EpisodeTrace, FinalSnapshot, JobOutcome};

use crate::engine::{EpisodeStatus, EventKind, OvershootLedger};
use crate::interpreter::{DecisionKind, DecisionSource};
use crate::protocol::ContractState;
use crate::ids::AgentId;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("trace of {0} has not reached a terminal status")]
    Incomplete(String),
    #[error("{ledger} ledger is corrupt: {message}")]
    LedgerCorruption { ledger: &'static str, message: String },
    #[error("cannot aggregate records from different configurations: {0}")]
    Mixed(String),
    #[error("no records to aggregate")]
    Empty,
}

trait Slot {
    fn get(&self) -> Option<f64>;
    fn put(v: Option<f64>) -> Self;
}

impl Slot for f64 {
    fn get(&self) -> Option<f64> {
        Some(*self)
    }
    fn put(v: Option<f64>) -> Self {
        v.unwrap_or(0.0)
    }
}

impl Slot for Option<f64> {
    fn get(&self) -> Option<f64> {
        *self
    }
    fn put(v: Option<f64>) -> Self {
        v
    }
}

macro_rules! metric_record {
    ($( $field:ident : $ty:ty => $sym:literal, $name:literal; )*) => {
        /// One value per catalog entry; optional entries are absent when
        /// undefined for the episode.
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        pub struct MetricRecord {
            $( pub $field: $ty, )*
        }

        /// (symbol, column name) in catalog order.
        pub const METRICS: &[(&str, &str)] = &[ $( ($sym, $name), )* ];

        impl MetricRecord {
            pub fn values(&self) -> Vec<Option<f64>> {
                vec![ $( Slot::get(&self.$field), )* ]
            }

            pub fn from_values(v: &[Option<f64>]) -> Self {
                let mut it = v.iter().copied();
                Self { $( $field: <$ty as Slot>::put(it.next().flatten()), )* }
            }
        }
    };
}

metric_record! {
    sr: f64 => "sr", "success_rate";
    mk: f64 => "mk", "makespan_mean";
    mk_std: Option<f64> => "mk_std", "makespan_std";
    td: f64 => "td", "tardiness";
    tcd: f64 => "tcd", "tardiness_with_completion_debt";
    cj: f64 => "cj", "completed_jobs";
    th: Option<f64> => "th", "throughput";
    en: f64 => "en", "energy";
    co: f64 => "co", "carbon";
    vc: f64 => "vc", "violation_count";
    eo: f64 => "eo", "energy_overshoot_magnitude";
    com: f64 => "com", "carbon_overshoot_magnitude";
    ed: f64 => "ed", "energy_overshoot_duration";
    cod: f64 => "cod", "carbon_overshoot_duration";
    eof: f64 => "eof", "energy_overshoot_frequency";
    cof: f64 => "cof", "carbon_overshoot_frequency";
    vb: f64 => "vb", "backlog_branching_width";
    bc: f64 => "bc", "backlog_decision_frequency";
    pa: f64 => "pa", "plant_routing_width";
    ac: f64 => "ac", "area_routing_width";
    dw: f64 => "dw", "local_dispatch_width";
    ba: f64 => "ba", "backlog_ambiguity_rate";
    pa_amb: f64 => "pa_amb", "plant_ambiguity_rate";
    aa: f64 => "aa", "area_ambiguity_rate";
    ca: f64 => "ca", "cell_ambiguity_rate";
    ds: f64 => "ds", "decision_steps";
    cm: f64 => "cm", "coordination_messages";
    as_load: f64 => "as", "active_agent_load";
    wc: Option<f64> => "wc", "runtime_mean_seconds";
    llm: f64 => "llm", "model_driven_decision_count";
    fb: f64 => "fb", "fallback_contract_decisions";
    dl: f64 => "dl", "deadlock_rate";
    tr: f64 => "tr", "truncation_rate";
    ut: f64 => "ut", "unfinished_overdue_tardiness";
    dj: f64 => "dj", "completion_debt_jobs";
    do_ops: f64 => "do", "completion_debt_operations";
    st: f64 => "st", "setup_time";
    su: f64 => "su", "setup_energy";
    tt: f64 => "tt", "transport_time";
    te: f64 => "te", "transport_energy";
    tm: f64 => "tm", "transport_moves";
    bt: f64 => "bt", "blocking_time";
    bw: f64 => "bw", "buffer_wait_time";
    ae: f64 => "ae", "arrival_events";
    aj: f64 => "aj", "arrived_jobs";
    ab: Option<f64> => "ab", "arrival_batch_size";
    bd: f64 => "bd", "breakdown_count";
    dt: f64 => "dt", "downtime";
    rt: f64 => "rt", "repair_time";
    vm: f64 => "vm", "mixed_violation_magnitude";
    ic: f64 => "ic", "inter_cell_moves";
    ar: f64 => "ar", "activation_records";
    sv: f64 => "sv", "settlement_events";
    sc: f64 => "sc", "settled_contracts";
    oc: f64 => "oc", "open_contracts";
    uc: f64 => "uc", "unsettled_completed_contracts";
    p1: Option<f64> => "p1", "framework_pass_at_1_mean";
    na: f64 => "na", "no_action_events";
}

impl MetricRecord {
    pub fn get(&self, symbol: &str) -> Option<f64> {
        METRICS.iter().position(|(s, _)| *s == symbol).and_then(|i| self.values()[i])
    }
}

/// (integrated excess, total duration, interval count).
fn ledger_totals(ledger: &OvershootLedger, name: &'static str) -> Result<(f64, f64, f64), MetricsError> {
    let mut prev_end = f64::NEG_INFINITY;
    let (mut excess, mut duration) = (0.0, 0.0);
    for iv in &ledger.intervals {
        if iv.end < iv.start || iv.start < prev_end {
            return Err(MetricsError::LedgerCorruption {
                ledger: name,
                message: format!("interval [{}, {}] overlaps or is reversed", iv.start, iv.end),
            });
        }
        prev_end = iv.end;
        excess += iv.excess;
        duration += iv.end - iv.start;
    }
    Ok((excess, duration, ledger.intervals.len() as f64))
}

/// (mean legal width, fraction with two or more legal actions, count).
fn widths(legal: impl Iterator<Item = usize>) -> (f64, f64, f64) {
    let (mut n, mut sum, mut multi) = (0usize, 0usize, 0usize);
    for k in legal {
        n += 1;
        sum += k;
        if k >= 2 {
            multi += 1;
        }
    }
    if n == 0 {
        (0.0, 0.0, 0.0)
    } else {
        (sum as f64 / n as f64, multi as f64 / n as f64, n as f64)
    }
}

/// Computes every catalog entry except wall-clock time, which the runner
/// measures around the episode loop.
pub fn compute_episode_metrics(trace: &EpisodeTrace) -> Result<MetricRecord, MetricsError> {
    let last = &trace.last;
    if last.flags.status == EpisodeStatus::Running {
        return Err(MetricsError::Incomplete(trace.meta.case_id.clone()));
    }
    let acc = &last.accounting;
    let mut r = MetricRecord::default();

    let end = last.end_time;
    r.mk = end;
    for j in &last.jobs {
        match (j.completion_time, j.due_date) {
            (Some(c), Some(d)) => r.td += (c - d).max(0.0),
            (None, Some(d)) => r.ut += (end - d).max(0.0),
            _ => {}
        }
    }
    r.tcd = r.td + r.ut;
    r.cj = last.jobs.iter().filter(|j| j.completion_time.is_some()).count() as f64;
    r.dj = last.jobs.len() as f64 - r.cj;
    r.do_ops = last.jobs.iter().map(|j| (j.stages - j.completed_stages) as f64).sum();
    r.th = (end > 0.0).then(|| r.cj / end);
    let f = last.flags;
    r.sr = if f.done && !f.deadlocked && !f.truncated { 1.0 } else { 0.0 };
    r.dl = if f.deadlocked { 1.0 } else { 0.0 };
    r.tr = if f.truncated { 1.0 } else { 0.0 };

    r.en = acc.energy_kwh;
    r.co = acc.carbon_kg;
    let (eo, ed, eof) = ledger_totals(&acc.energy_overshoot, "energy")?;
    let (com, cod, cof) = ledger_totals(&acc.carbon_overshoot, "carbon")?;
    (r.eo, r.ed, r.eof, r.com, r.cod, r.cof) = (eo, ed, eof, com, cod, cof);
    r.vc = eof + cof;
    r.vm = eo + com;

    let acts = &trace.activations;
    let of = |kind: DecisionKind, plant: Option<bool>| {
        acts.iter()
            .filter(move |a| a.kind == kind && plant.is_none_or(|p| (a.agent == AgentId::Plant) == p))
            .map(|a| a.legal_actions.len())
    };
    (r.vb, r.ba, r.bc) = widths(of(DecisionKind::BacklogSelection, None));
    let (pa, pa_amb, _) = widths(of(DecisionKind::AreaSelection, Some(true)));
    (r.pa, r.pa_amb) = (pa, pa_amb);
    let area_level = acts.iter().filter(|a| matches!(a.agent, AgentId::Area(_))).map(|a| a.legal_actions.len());
    let (ac, aa, _) = widths(area_level);
    (r.ac, r.aa) = (ac, aa);
    let (dw, ca, _) = widths(of(DecisionKind::LocalDispatch, None));
    (r.dw, r.ca) = (dw, ca);

    r.ds = acts.len() as f64;
    r.cm = trace.protocol.objects.len() as f64;
    r.as_load = acts.len() as f64;
    r.llm = acts.iter().filter(|a| a.decision.as_ref().is_some_and(|d| d.source == DecisionSource::Controller)).count() as f64;
    r.fb = acts.iter().filter(|a| a.decision.as_ref().is_some_and(|d| d.source == DecisionSource::Fallback)).count() as f64;
    let facing: Vec<bool> = acts.iter().filter_map(|a| a.decision.as_ref().and_then(|d| d.first_pass)).collect();
    r.p1 = (!facing.is_empty()).then(|| facing.iter().filter(|x| **x).count() as f64 / facing.len() as f64);
    r.na = trace.no_actions.len() as f64;
    r.ar = (acts.len() + trace.no_actions.len()) as f64;

    r.st = acc.setup_time;
    r.su = acc.setup_energy;
    r.tt = acc.transport_time;
    r.te = acc.transport_energy;
    r.tm = acc.transport_moves as f64;
    r.ic = trace.world_events.iter().filter(|e| e.kind == EventKind::TransportStart).count() as f64;
    r.bt = acc.blocking_time;
    r.bw = acc.buffer_wait_time;
    r.ae = acc.arrival_events as f64;
    r.aj = acc.arrived_jobs as f64;
    r.ab = (acc.arrival_events > 0).then(|| r.aj / r.ae);
    r.bd = trace.world_events.iter().filter(|e| e.kind == EventKind::Breakdown).count() as f64;
    r.dt = acc.downtime;
    r.rt = acc.repair_time;

    let log = &trace.protocol;
    r.sv = log.settlements.len() as f64;
    r.sc = log.contracts.iter().filter(|c| c.state == ContractState::Settled).count() as f64;
    r.oc = log.contracts.iter().filter(|c| c.state == ContractState::Open).count() as f64;
    let finished: BTreeSet<(u32, u32)> = trace
        .world_events
        .iter()
        .filter(|e| e.kind == EventKind::Finish)
        .filter_map(|e| Some((e.subject.job?.0, e.subject.stage?)))
        .collect();
    r.uc = log
        .contracts
        .iter()
        .filter(|c| c.state == ContractState::Committed && finished.contains(&(c.item.job.0, c.item.stage)))
        .count() as f64;
    Ok(r)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Algebraic identities every record must satisfy; returns the violated ones.
pub fn identity_violations(r: &MetricRecord, tol: f64) -> Vec<String> {
    let mut pairs = vec![
        ("tcd = td + ut", r.tcd, r.td + r.ut),
        ("vm = eo + com", r.vm, r.eo + r.com),
        ("vc = eof + cof", r.vc, r.eof + r.cof),
        ("ed = cod", r.ed, r.cod),
        ("ic = tm", r.ic, r.tm),
        ("dt = rt", r.dt, r.rt),
    ];
    let mut out = Vec::new();
    if r.ae > 0.0 {
        pairs.push(("ab = aj / ae", r.ab.unwrap_or(f64::NAN), r.aj / r.ae));
    } else if r.ab.is_some() {
        out.push("ab present without arrival events".to_string());
    }
    if r.mk > 0.0 {
        pairs.push(("th = cj / mk", r.th.unwrap_or(f64::NAN), r.cj / r.mk));
    }
    for (name, a, b) in pairs {
        if !close(a, b, tol) {
            out.push(format!("{name}: {a} != {b}"));
        }
    }
    let success = r.dl == 0.0 && r.tr == 0.0 && r.dj == 0.0;
    if (r.sr == 1.0) != success {
        out.push(format!("sr {} inconsistent with dl {} tr {} dj {}", r.sr, r.dl, r.tr, r.dj));
    }
    out
}

/// Seed-averaged summary for one (instance, mode, controller) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub instance: String,
    pub mode: String,
    pub controller: String,
    pub seeds: usize,
    pub metrics: MetricRecord,
}

/// Means over seeds; optional entries are absent if absent anywhere.
/// `mk_std` is the population standard deviation of makespan.
pub fn aggregate_suite(records: &[(EpisodeMeta, MetricRecord)]) -> Result<SuiteSummary, MetricsError> {
    let (first, _) = records.first().ok_or(MetricsError::Empty)?;
    for (m, _) in records {
        if (m.instance.as_str(), m.mode.as_str(), m.controller.as_str())
            != (first.instance.as_str(), first.mode.as_str(), first.controller.as_str())
        {
            return Err(MetricsError::Mixed(format!("{} vs {}", first.case_id, m.case_id)));
        }
    }
    let n = records.len() as f64;
    let rows: Vec<Vec<Option<f64>>> = records.iter().map(|(_, r)| r.values()).collect();
    let mean: Vec<Option<f64>> = (0..METRICS.len())
        .map(|i| {
            let col: Option<Vec<f64>> = rows.iter().map(|r| r[i]).collect();
            col.map(|c| c.iter().sum::<f64>() / n)
        })
        .collect();
    let mut metrics = MetricRecord::from_values(&mean);
    let mk_mean = metrics.mk;
    let var = records.iter().map(|(_, r)| (r.mk - mk_mean).powi(2)).sum::<f64>() / n;
    metrics.mk_std = Some(var.sqrt());
    Ok(SuiteSummary {
        instance: first.instance.clone(),
        mode: first.mode.clone(),
        controller: first.controller.clone(),
        seeds: records.len(),
        metrics,
    })
}

#[cfg(test)]
mod tests;
