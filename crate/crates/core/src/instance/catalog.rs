//! Shipped instance documents, addressable by file stem, id or source id.

use super::{load_instance, InstanceConfig, InstanceError};

/// (file stem, instance id, source id, document)
pub const SHIPPED: &[(&str, &str, &str, &str)] = &[
    ("a3c9_1", "A3C9-1", "intercell_a3c9_cross_area_tradeoff", include_str!("../../instances/a3c9_1.toml")),
    ("a5c12_1", "A5C12-1", "intercell_a5c12_branch_pressure", include_str!("../../instances/a5c12_1.toml")),
    ("a5c12_2", "A5C12-2", "intercell_a5c12_cluster_pull", include_str!("../../instances/a5c12_2.toml")),
    ("a5c12_3", "A5C12-3", "intercell_a5c12_late_commit", include_str!("../../instances/a5c12_3.toml")),
];

/// Named suites grouping shipped instances.
pub const SUITES: &[(&str, &[&str])] = &[
    ("intercell_a3c9_wide", &["a3c9_1"]),
    ("intercell_a5c12_harder", &["a5c12_1", "a5c12_2", "a5c12_3"]),
];

pub fn shipped_document(name: &str) -> Option<&'static str> {
    SHIPPED
        .iter()
        .find(|(stem, id, source, _)| *stem == name || id.eq_ignore_ascii_case(name) || *source == name)
        .map(|s| s.3)
}

pub fn load_shipped(name: &str) -> Result<InstanceConfig, InstanceError> {
    let doc = shipped_document(name).ok_or_else(|| InstanceError::Unknown(name.to_string()))?;
    load_instance(doc)
}

/// Resolves a suite name, a single shipped instance name, or a path to an
/// instance document.
pub fn resolve_suite(name: &str) -> Result<Vec<InstanceConfig>, InstanceError> {
    if let Some((_, members)) = SUITES.iter().find(|(s, _)| *s == name) {
        return members.iter().map(|m| load_shipped(m)).collect();
    }
    if shipped_document(name).is_some() {
        return Ok(vec![load_shipped(name)?]);
    }
    let path = std::path::Path::new(name);
    if path.extension().is_some_and(|e| e == "toml") && path.exists() {
        return Ok(vec![load_instance(&std::fs::read_to_string(path)?)?]);
    }
    Err(InstanceError::Unknown(name.to_string()))
}
