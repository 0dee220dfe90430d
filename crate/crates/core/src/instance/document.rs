//! TOML instance documents.

use std::collections::BTreeMap;

use serde::Deserialize;

use super::{
    validate_instance, ArrivalBatch, Budgets, FailureProfile, Hierarchy, InstanceConfig, InstanceError, JobSource,
    JobSpec, Physics, RouteGrammar, ScenarioProfile,
};
use crate::ids::CellId;

pub const SCHEMA_VERSION: &str = "desbench.instance/1";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    schema_version: String,
    id: String,
    #[serde(default)]
    source_id: Option<String>,
    hierarchy: HierarchyDoc,
    jobs_or_grammar: JobsDoc,
    budgets: Budgets,
    failure_profile: FailureProfile,
    scenario: ScenarioDoc,
    #[serde(default)]
    limits: LimitsDoc,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HierarchyDoc {
    #[serde(default = "default_plant")]
    plant_id: String,
    partition: Vec<u32>,
    cell_count: u32,
    machines_per_cell: u32,
}

fn default_plant() -> String {
    "plant".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JobsDoc {
    #[serde(default)]
    grammar: Option<RouteGrammar>,
    #[serde(default)]
    jobs: Option<Vec<JobSpec>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    name: String,
    backlog_top_k: u32,
    transport_multiplier: f64,
    inbound_cap: u32,
    #[serde(default)]
    speed_modifiers: BTreeMap<String, f64>,
    #[serde(default)]
    arrival_plan: Vec<ArrivalBatch>,
    #[serde(default)]
    physics: Physics,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsDoc {
    #[serde(default = "default_horizon")]
    horizon_limit: u32,
    #[serde(default = "default_window")]
    no_progress_window: u32,
}

impl Default for LimitsDoc {
    fn default() -> Self {
        Self { horizon_limit: default_horizon(), no_progress_window: default_window() }
    }
}

fn default_horizon() -> u32 {
    400
}

fn default_window() -> u32 {
    50
}

/// Parses and validates an instance document.
pub fn load_instance(document: &str) -> Result<InstanceConfig, InstanceError> {
    // Check the version first so an old document gets a precise error.
    let raw: toml::Table = toml::from_str(document).map_err(|e| InstanceError::Schema(e.to_string()))?;
    match raw.get("schema_version").and_then(|v| v.as_str()) {
        Some(SCHEMA_VERSION) => {}
        Some(other) => return Err(InstanceError::SchemaVersion(other.to_string())),
        None => return Err(InstanceError::Schema("missing field `schema_version`".into())),
    }
    let mut doc: Document = toml::from_str(document).map_err(|e| InstanceError::Schema(e.to_string()))?;
    let _ = doc.schema_version;

    let h = doc.hierarchy;
    let partition_sum: u32 = h.partition.iter().sum();
    if partition_sum != h.cell_count {
        return Err(InstanceError::Invalid(vec![super::Violation::new(
            "Hierarchy",
            format!("partition {:?} sums to {partition_sum}, cell_count is {}", h.partition, h.cell_count),
        )]));
    }
    let hierarchy = Hierarchy::from_partition(&h.plant_id, &h.partition, h.machines_per_cell);

    let jobs = match (doc.jobs_or_grammar.grammar, doc.jobs_or_grammar.jobs) {
        (Some(g), None) => JobSource::Grammar(g),
        (None, Some(mut j)) => {
            for job in &mut j {
                for (i, st) in job.route.iter_mut().enumerate() {
                    st.stage_index = i as u32;
                }
            }
            JobSource::Explicit(j)
        }
        _ => {
            return Err(InstanceError::Schema(
                "jobs_or_grammar: exactly one of `grammar` or `jobs` must be given".into(),
            ))
        }
    };

    let mut speed_modifiers = BTreeMap::new();
    for (k, v) in std::mem::take(&mut doc.scenario.speed_modifiers) {
        let id: u32 = k
            .parse()
            .map_err(|_| InstanceError::Schema(format!("scenario.speed_modifiers: key `{k}` is not a cell id")))?;
        speed_modifiers.insert(CellId(id), v);
    }
    let s = doc.scenario;
    let config = InstanceConfig {
        id: doc.id,
        source_id: doc.source_id,
        hierarchy,
        jobs,
        budgets: doc.budgets,
        failure_profile: doc.failure_profile,
        scenario: ScenarioProfile {
            name: s.name,
            backlog_top_k: s.backlog_top_k,
            transport_multiplier: s.transport_multiplier,
            inbound_cap: s.inbound_cap,
            speed_modifiers,
            arrival_plan: s.arrival_plan,
            physics: s.physics,
        },
        horizon_limit: doc.limits.horizon_limit,
        no_progress_window: doc.limits.no_progress_window,
    };
    let report = validate_instance(&config);
    if report.is_empty() {
        Ok(config)
    } else {
        Err(InstanceError::Invalid(report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::shipped_document;

    #[test]
    fn unknown_fields_are_rejected_by_name() {
        let doc = shipped_document("a3c9_1").unwrap().replace("wip_cap = 4", "wip_cap = 4\nwip_limit = 9");
        match load_instance(&doc) {
            Err(InstanceError::Schema(m)) => assert!(m.contains("wip_limit"), "{m}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_version_is_reported() {
        let doc = shipped_document("a3c9_1").unwrap().replace(SCHEMA_VERSION, "desbench.instance/0");
        assert!(matches!(load_instance(&doc), Err(InstanceError::SchemaVersion(_))));
    }

    #[test]
    fn dangling_cell_reference_is_an_error() {
        let doc = r#"
schema_version = "desbench.instance/1"
id = "toy"
[hierarchy]
partition = [4, 3, 2, 2, 1]
cell_count = 12
machines_per_cell = 1
[[jobs_or_grammar.jobs]]
job_id = 0
release_time = 0.0
[[jobs_or_grammar.jobs.route]]
eligible_cells = [99]
base_processing_time = 1.0
setup_family = 0
[budgets]
energy_cap = 100.0
carbon_cap = 60.0
wip_cap = 1
[failure_profile]
kind = "exponential_nominal"
rate = 0.0
repair = { kind = "constant", value = 1.0 }
[scenario]
name = "toy"
backlog_top_k = 1
transport_multiplier = 1.0
inbound_cap = 1
"#;
        match load_instance(doc) {
            Err(InstanceError::Invalid(v)) => assert!(v.iter().any(|x| x.message.contains("99")), "{v:?}"),
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn partition_sum_mismatch_is_an_error() {
        let doc = shipped_document("a5c12_1").unwrap().replace("partition = [4, 3, 2, 2, 1]", "partition = [4, 3, 2, 2, 2]");
        match load_instance(&doc) {
            Err(InstanceError::Invalid(v)) => assert_eq!(v[0].subject, "Hierarchy"),
            other => panic!("expected partition error, got {other:?}"),
        }
    }
}
