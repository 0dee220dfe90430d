//! Authority modes and their registry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingAuthority {
    /// The plant awards cells directly.
    PlantDirect,
    /// Plant picks an area, the area picks a cell.
    FixedChain,
    /// Plant picks an area, cells inside it bid.
    MediatedCnp,
    /// Chain assignment with downstream autonomy.
    Holarchy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitActions {
    AcceptOnly,
    AcceptReject,
}

/// Protocol switches (q, u, p, h) bound to a routing authority.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthorityMode {
    pub mode_id: String,
    pub routing_authority: RoutingAuthority,
    pub q: CommitActions,
    /// Area-local reroute after a failed commitment.
    pub u: bool,
    /// Plant-level reroute required on a failed commitment.
    pub p: bool,
    /// Mediated bid round before assignment.
    pub h: bool,
}

impl AuthorityMode {
    pub fn new(mode_id: &str, routing_authority: RoutingAuthority, q: CommitActions, u: bool, p: bool, h: bool) -> Self {
        Self { mode_id: mode_id.to_string(), routing_authority, q, u, p, h }
    }

    pub fn centralized() -> Self {
        Self::new("centralized", RoutingAuthority::PlantDirect, CommitActions::AcceptOnly, false, false, false)
    }

    pub fn hierarchical() -> Self {
        Self::new("hierarchical", RoutingAuthority::FixedChain, CommitActions::AcceptOnly, false, true, false)
    }

    pub fn heterarchical_cnp() -> Self {
        Self::new("heterarchical_cnp", RoutingAuthority::MediatedCnp, CommitActions::AcceptReject, false, false, true)
    }

    pub fn holonic_hybrid() -> Self {
        Self::new("holonic_hybrid", RoutingAuthority::Holarchy, CommitActions::AcceptReject, true, false, false)
    }

    pub fn builtins() -> [Self; 4] {
        [Self::centralized(), Self::hierarchical(), Self::heterarchical_cnp(), Self::holonic_hybrid()]
    }

    pub fn can_reject(&self) -> bool {
        self.q == CommitActions::AcceptReject
    }

    /// Whether assignment passes through an area before reaching a cell.
    pub fn uses_areas(&self) -> bool {
        self.routing_authority != RoutingAuthority::PlantDirect
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RegistryError {
    #[error("authority mode `{0}` is already registered")]
    Duplicate(String),
    #[error("unknown authority mode `{0}`")]
    Unknown(String),
    #[error("invalid mode definition: {0}")]
    Invalid(String),
}

/// Selectable modes; built-ins are present from construction.
#[derive(Debug, Clone)]
pub struct ModeRegistry {
    modes: BTreeMap<String, AuthorityMode>,
    order: Vec<String>,
}

impl Default for ModeRegistry {
    fn default() -> Self {
        let mut r = Self { modes: BTreeMap::new(), order: Vec::new() };
        for m in AuthorityMode::builtins() {
            r.register(m).expect("built-ins are distinct");
        }
        r
    }
}

impl ModeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, mode: AuthorityMode) -> Result<(), RegistryError> {
        if mode.mode_id.is_empty() || mode.mode_id.contains("__") || mode.mode_id.contains('/') {
            return Err(RegistryError::Invalid(format!("mode id `{}` is not a plain identifier", mode.mode_id)));
        }
        if self.modes.contains_key(&mode.mode_id) {
            return Err(RegistryError::Duplicate(mode.mode_id));
        }
        self.order.push(mode.mode_id.clone());
        self.modes.insert(mode.mode_id.clone(), mode);
        Ok(())
    }

    /// Parses a TOML mode definition and registers it.
    pub fn register_toml(&mut self, text: &str) -> Result<AuthorityMode, RegistryError> {
        let mode: AuthorityMode = toml::from_str(text).map_err(|e| RegistryError::Invalid(e.to_string()))?;
        self.register(mode.clone())?;
        Ok(mode)
    }

    pub fn get(&self, id: &str) -> Result<&AuthorityMode, RegistryError> {
        self.modes.get(id).ok_or_else(|| RegistryError::Unknown(id.to_string()))
    }

    /// Modes in registration order.
    pub fn list(&self) -> impl Iterator<Item = &AuthorityMode> {
        self.order.iter().map(|id| &self.modes[id])
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}
