//! Vessel type and navigational status normalization.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_TABLES: &str = include_str!("../../config/ais_codes.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VesselCategory {
    Cargo,
    Tanker,
    Passenger,
    Fishing,
    Tug,
    Pleasure,
    Military,
    Other,
    Unknown,
}

impl VesselCategory {
    pub const ALL: [VesselCategory; 9] = [
        Self::Cargo,
        Self::Tanker,
        Self::Passenger,
        Self::Fishing,
        Self::Tug,
        Self::Pleasure,
        Self::Military,
        Self::Other,
        Self::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cargo => "cargo",
            Self::Tanker => "tanker",
            Self::Passenger => "passenger",
            Self::Fishing => "fishing",
            Self::Tug => "tug",
            Self::Pleasure => "pleasure",
            Self::Military => "military",
            Self::Other => "other",
            Self::Unknown => "unknown",
        }
    }

    /// A code that the default table maps back onto this category.
    pub fn representative_code(self) -> i32 {
        match self {
            Self::Cargo => 70,
            Self::Tanker => 80,
            Self::Passenger => 60,
            Self::Fishing => 30,
            Self::Tug => 52,
            Self::Pleasure => 37,
            Self::Military => 35,
            Self::Other => 90,
            Self::Unknown => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusCategory {
    Underway,
    Anchored,
    Moored,
    Restricted,
    Aground,
    Fishing,
    Sailing,
    Unknown,
}

impl StatusCategory {
    pub const ALL: [StatusCategory; 8] = [
        Self::Underway,
        Self::Anchored,
        Self::Moored,
        Self::Restricted,
        Self::Aground,
        Self::Fishing,
        Self::Sailing,
        Self::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Underway => "underway",
            Self::Anchored => "anchored",
            Self::Moored => "moored",
            Self::Restricted => "restricted",
            Self::Aground => "aground",
            Self::Fishing => "fishing",
            Self::Sailing => "sailing",
            Self::Unknown => "unknown",
        }
    }

    pub fn representative_code(self) -> i32 {
        match self {
            Self::Underway => 0,
            Self::Anchored => 1,
            Self::Restricted => 3,
            Self::Moored => 5,
            Self::Aground => 6,
            Self::Fishing => 7,
            Self::Sailing => 8,
            Self::Unknown => 15,
        }
    }
}

macro_rules! str_enum_impls {
    ($ty:ty) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|c| c.as_str() == s)
                    .ok_or_else(|| Error::invalid(format!("unknown {} `{s}`", stringify!($ty))))
            }
        }
    };
}

str_enum_impls!(VesselCategory);
str_enum_impls!(StatusCategory);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeRange<C> {
    from: i32,
    to: i32,
    category: C,
}

/// Versioned code tables, loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeTables {
    pub version: u32,
    vessel_types: Vec<CodeRange<VesselCategory>>,
    statuses: Vec<CodeRange<StatusCategory>>,
}

impl CodeTables {
    pub fn from_toml(text: &str) -> Result<Self> {
        let tables: CodeTables =
            toml::from_str(text).map_err(|e| Error::Config(format!("code tables: {e}")))?;
        check_ranges(&tables.vessel_types, "vessel_types")?;
        check_ranges(&tables.statuses, "statuses")?;
        Ok(tables)
    }

    /// Tables shipped with the crate.
    pub fn builtin() -> &'static CodeTables {
        static TABLES: OnceLock<CodeTables> = OnceLock::new();
        TABLES.get_or_init(|| CodeTables::from_toml(DEFAULT_TABLES).expect("bundled code tables"))
    }

    pub fn vessel_category(&self, code: i32) -> VesselCategory {
        lookup(&self.vessel_types, code).unwrap_or(VesselCategory::Unknown)
    }

    pub fn status_category(&self, code: i32) -> StatusCategory {
        lookup(&self.statuses, code).unwrap_or(StatusCategory::Unknown)
    }
}

fn lookup<C: Copy>(ranges: &[CodeRange<C>], code: i32) -> Option<C> {
    ranges
        .iter()
        .find(|r| (r.from..=r.to).contains(&code))
        .map(|r| r.category)
}

fn check_ranges<C>(ranges: &[CodeRange<C>], name: &str) -> Result<()> {
    let mut spans: Vec<(i32, i32)> = ranges.iter().map(|r| (r.from, r.to)).collect();
    spans.sort_unstable();
    for (i, &(from, to)) in spans.iter().enumerate() {
        if from > to {
            return Err(Error::Config(format!("{name}: empty range {from}..={to}")));
        }
        if i > 0 && spans[i - 1].1 >= from {
            return Err(Error::Config(format!("{name}: overlapping range at {from}")));
        }
    }
    Ok(())
}

/// Map an AIS ship-type code onto a category using the bundled table.
pub fn normalize_vessel_type(code: i32) -> VesselCategory {
    CodeTables::builtin().vessel_category(code)
}

/// Map an AIS navigational-status code onto a category using the bundled table.
pub fn normalize_status(code: i32) -> StatusCategory {
    CodeTables::builtin().status_category(code)
}
