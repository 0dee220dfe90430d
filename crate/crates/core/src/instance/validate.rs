// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeSet;
use std::fmt;

use super::{FailureProfile, InstanceConfig, JobSource, RepairDistribution};

/// One violated invariant, named after the type it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub subject: &'static str,
    pub message: String,
}

impl Violation {
    pub fn new(subject: &'static str, message: impl Into<String>) -> Self {
        Self { subject, message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

fn check_repair(r: &RepairDistribution, out: &mut Vec<Violation>) {
    let ok = match *r {
        RepairDistribution::Constant { value } => value > 0.0,
        RepairDistribution::Exponential { mean } => mean > 0.0,
        RepairDistribution::Uniform { low, high } => low > 0.0 && high >= low,
    };
    if !ok {
        out.push(Violation::new("FailureProfile", format!("repair distribution {r:?} needs positive support")));
    }
}

/// Lists every violated invariant; an empty report means the config is runnable.
pub fn validate_instance(config: &InstanceConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let h = &config.hierarchy;
    let n_cells = h.cells.len();

    if h.areas.is_empty() || h.partition.contains(&0) {
        out.push(Violation::new("Hierarchy", "every area needs at least one cell"));
    }
    if h.partition.iter().sum::<u32>() as usize != n_cells {
        out.push(Violation::new("Hierarchy", format!("partition {:?} does not sum to {n_cells} cells", h.partition)));
    }
    for c in &h.cells {
        if h.machines_in(c.id).next().is_none() {
            out.push(Violation::new("Hierarchy", format!("cell {} has no machines", c.id)));
        }
    }

    let job_count = config.job_count();
    match &config.jobs {
        JobSource::Explicit(jobs) => {
            for (i, j) in jobs.iter().enumerate() {
                if j.job_id.index() != i {
                    out.push(Violation::new("JobSpec", format!("job ids must be 0..n in order, found {} at {i}", j.job_id)));
                }
                if j.route.is_empty() {
                    out.push(Violation::new("JobSpec", format!("job {} has an empty route", j.job_id)));
                }
                if !(j.release_time >= 0.0) {
                    out.push(Violation::new("JobSpec", format!("job {} has negative release time", j.job_id)));
                }
                if let Some(d) = j.due_date {
                    if !(d > j.release_time) {
                        out.push(Violation::new("JobSpec", format!("job {} due date {d} not after release", j.job_id)));
                    }
                }
                for st in &j.route {
                    if st.eligible_cells.is_empty() {
                        out.push(Violation::new("RouteStage", format!("job {} stage {} has no eligible cell", j.job_id, st.stage_index)));
                    }
                    for c in &st.eligible_cells {
                        if c.index() >= n_cells {
                            out.push(Violation::new(
                                "InstanceConfig",
                                format!("job {} stage {} references cell {c} outside the {n_cells}-cell topology", j.job_id, st.stage_index),
                            ));
                        }
                    }
                    if !(st.base_processing_time > 0.0) {
                        out.push(Violation::new("RouteStage", format!("job {} stage {} needs positive processing time", j.job_id, st.stage_index)));
                    }
                }
                let batch = config.scenario.arrival_plan.iter().find(|b| b.jobs.contains(&j.job_id));
                let expected = batch.map(|b| b.time).unwrap_or(0.0);
                if j.release_time != expected {
                    out.push(Violation::new(
                        "ScenarioProfile",
                        format!("job {} releases at {} but the arrival plan says {expected}", j.job_id, j.release_time),
                    ));
                }
            }
        }
        JobSource::Grammar(g) => {
            let n_areas = h.areas.len() as u32;
            if g.job_count == 0 || g.stages == 0 {
                out.push(Violation::new("RouteGrammar", "job_count and stages must be positive"));
            }
            if g.areas_per_stage == 0 || g.areas_per_stage > n_areas {
                out.push(Violation::new("RouteGrammar", format!("areas_per_stage must lie in 1..={n_areas}")));
            }
            if n_areas >= 2 && g.areas_per_stage < 2 {
                out.push(Violation::new("RouteGrammar", "stages must span at least two areas"));
            }
            if g.min_cells_per_area == 0 {
                out.push(Violation::new("RouteGrammar", "min_cells_per_area must be positive"));
            }
            if !(0.0..=1.0).contains(&g.extra_cell_probability) {
                out.push(Violation::new("RouteGrammar", "extra_cell_probability must lie in [0, 1]"));
            }
            let [lo, hi] = g.processing_time;
            if !(lo > 0.0 && hi >= lo) {
                out.push(Violation::new("RouteGrammar", "processing_time range must be positive and ordered"));
            }
            if g.setup_families == 0 || !(g.due_slack_factor > 0.0) {
                out.push(Violation::new("RouteGrammar", "setup_families and due_slack_factor must be positive"));
            }
        }
    }

    match &config.failure_profile {
        FailureProfile::WeibullAging { shape, scale, repair } => {
            if !(*shape > 0.0 && *scale > 0.0) {
                out.push(Violation::new("FailureProfile", "weibull shape and scale must be positive"));
            }
            check_repair(repair, &mut out);
        }
        FailureProfile::ExponentialNominal { rate, repair } => {
            if !(*rate >= 0.0) {
                out.push(Violation::new("FailureProfile", "exponential rate must be non-negative"));
            }
            check_repair(repair, &mut out);
        }
        FailureProfile::LoadDependent { base_rate, load_coefficient, repair } => {
            if !(*base_rate > 0.0 && *load_coefficient >= 0.0) {
                out.push(Violation::new("FailureProfile", "load-dependent base rate must be positive"));
            }
            check_repair(repair, &mut out);
        }
    }

    let b = &config.budgets;
    if !(b.energy_cap > 0.0 && b.carbon_intensity > 0.0) {
        out.push(Violation::new("Budgets", "energy_cap and carbon_intensity must be positive"));
    }
    let expected = b.carbon_intensity * b.energy_cap;
    if (b.carbon_cap - expected).abs() > 1e-9 * expected.abs().max(1.0) {
        out.push(Violation::new(
            "Budgets",
            format!("carbon_cap {} must equal carbon_intensity x energy_cap = {expected}", b.carbon_cap),
        ));
    }
    if b.wip_cap == 0 {
        out.push(Violation::new("Budgets", "wip_cap must be at least 1"));
    }

    let s = &config.scenario;
    if s.backlog_top_k == 0 || s.inbound_cap == 0 {
        out.push(Violation::new("ScenarioProfile", "backlog_top_k and inbound_cap must be at least 1"));
    }
    if !(s.transport_multiplier >= 1.0) {
        out.push(Violation::new("ScenarioProfile", "transport_multiplier must be >= 1"));
    }
    for (c, f) in &s.speed_modifiers {
        if c.index() >= n_cells {
            out.push(Violation::new("ScenarioProfile", format!("speed modifier for unknown cell {c}")));
        }
        if !(*f > 0.0) {
            out.push(Violation::new("ScenarioProfile", format!("speed modifier for cell {c} must be positive")));
        }
    }
    let mut seen = BTreeSet::new();
    for batch in &s.arrival_plan {
        if !(batch.time >= 0.0) || batch.jobs.is_empty() {
            out.push(Violation::new("ScenarioProfile", "arrival batches need a non-negative time and at least one job"));
        }
        for j in &batch.jobs {
            if j.index() >= job_count || !seen.insert(*j) {
                out.push(Violation::new("ScenarioProfile", format!("arrival plan job {j} is unknown or repeated")));
            }
        }
    }
    let p = &s.physics;
    if !(p.processing_power >= 0.0 && p.setup_power_factor >= 0.0 && p.transport_power_factor >= 0.0 && p.setup_time >= 0.0)
        || !(p.transport_time_per_hop > 0.0)
    {
        out.push(Violation::new("ScenarioProfile", "physics coefficients must be non-negative, hop time positive"));
    }

    if config.horizon_limit == 0 || config.no_progress_window == 0 {
        out.push(Violation::new("InstanceConfig", "horizon_limit and no_progress_window must be positive"));
    }
    out
}
