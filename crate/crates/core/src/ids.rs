//! Identifier newtypes shared by every layer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(JobId);
id_type!(AreaId);
id_type!(CellId);
id_type!(
    /// Global machine index, unique across cells.
    MachineId
);

/// Agent address in the plant/area/cell hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentId {
    Plant,
    Area(AreaId),
    Cell(CellId),
}

impl AgentId {
    pub fn role(self) -> &'static str {
        match self {
            AgentId::Plant => "plant",
            AgentId::Area(_) => "area",
            AgentId::Cell(_) => "cell",
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentId::Plant => f.write_str("plant"),
            AgentId::Area(a) => write!(f, "area_{a}"),
            AgentId::Cell(c) => write!(f, "cell_{c}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("malformed agent id `{0}`")]
pub struct AgentIdError(String);

impl FromStr for AgentId {
    type Err = AgentIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "plant" {
            return Ok(AgentId::Plant);
        }
        let bad = || AgentIdError(s.to_string());
        if let Some(rest) = s.strip_prefix("area_") {
            return rest.parse().map(|n| AgentId::Area(AreaId(n))).map_err(|_| bad());
        }
        if let Some(rest) = s.strip_prefix("cell_") {
            return rest.parse().map(|n| AgentId::Cell(CellId(n))).map_err(|_| bad());
        }
        Err(bad())
    }
}

impl Serialize for AgentId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One stage of one job: the unit that is routed, committed and settled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WorkItem {
    pub job: JobId,
    pub stage: u32,
}

impl WorkItem {
    pub fn new(job: JobId, stage: u32) -> Self {
        Self { job, stage }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_ids_round_trip_through_strings() {
        for a in [AgentId::Plant, AgentId::Area(AreaId(3)), AgentId::Cell(CellId(11))] {
            let s = serde_json::to_string(&a).unwrap();
            let back: AgentId = serde_json::from_str(&s).unwrap();
            assert_eq!(a, back);
        }
        assert!("cell_x".parse::<AgentId>().is_err());
        assert!("robot".parse::<AgentId>().is_err());
    }

    #[test]
    fn agent_order_is_plant_then_areas_then_cells() {
        let mut v = [AgentId::Cell(CellId(0)), AgentId::Area(AreaId(1)), AgentId::Plant, AgentId::Area(AreaId(0))];
        v.sort();
        assert_eq!(v[0], AgentId::Plant);
        assert_eq!(v[1], AgentId::Area(AreaId(0)));
        assert_eq!(v[3], AgentId::Cell(CellId(0)));
    }
}
