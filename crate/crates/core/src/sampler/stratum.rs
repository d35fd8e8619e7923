use std::fmt;

use chrono::{DateTime, Datelike, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::ais::AisRecord;
use crate::error::{Error, Result};
use crate::geo::{haversine_nm, BoundingBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    EastCoast,
    WestCoast,
    GulfOfMexico,
    GreatLakes,
}

impl Region {
    pub const ALL: [Region; 4] = [
        Region::EastCoast,
        Region::WestCoast,
        Region::GulfOfMexico,
        Region::GreatLakes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::EastCoast => "east_coast",
            Region::WestCoast => "west_coast",
            Region::GulfOfMexico => "gulf_of_mexico",
            Region::GreatLakes => "great_lakes",
        }
    }

    /// Human-readable name, as used in questions and query text.
    pub fn display_name(self) -> &'static str {
        match self {
            Region::EastCoast => "East Coast",
            Region::WestCoast => "West Coast",
            Region::GulfOfMexico => "Gulf of Mexico",
            Region::GreatLakes => "Great Lakes",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaType {
    Port,
    OpenWater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeBucket {
    Peak,
    OffPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Season {
    Q1,
    Q2,
    Q3,
    Q4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityTier {
    Low,
    Medium,
    High,
}

/// The selection axes of a stratum; density is measured, not selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StratumCell {
    pub region: Region,
    pub area_type: AreaType,
    pub time_bucket: TimeBucket,
    pub season: Season,
}

impl fmt::Display for StratumCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{:?}/{:?}/{:?}",
            self.region.as_str(),
            self.area_type,
            self.time_bucket,
            self.season
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Stratum {
    pub region: Region,
    pub area_type: AreaType,
    pub time_bucket: TimeBucket,
    pub season: Season,
    pub density_tier: DensityTier,
}

impl Stratum {
    pub fn new(cell: StratumCell, density_tier: DensityTier) -> Self {
        Self {
            region: cell.region,
            area_type: cell.area_type,
            time_bucket: cell.time_bucket,
            season: cell.season,
            density_tier,
        }
    }

    pub fn cell(&self) -> StratumCell {
        StratumCell {
            region: self.region,
            area_type: self.area_type,
            time_bucket: self.time_bucket,
            season: self.season,
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{:?}", self.cell(), self.density_tier)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionDef {
    pub name: Region,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    /// Nominal standard-time offset used for peak/off-peak and season.
    pub utc_offset_hours: i32,
}

impl RegionDef {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::new(self.lat_min, self.lat_max, self.lon_min, self.lon_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Port {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

/// Region boxes, port list and the time/density rules that classify records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geography {
    pub regions: Vec<RegionDef>,
    pub ports: Vec<Port>,
    pub port_radius_nm: f64,
    /// Local hour (inclusive) at which peak starts.
    pub peak_start_hour: u32,
    /// Local hour (exclusive) at which peak ends.
    pub peak_end_hour: u32,
    /// Qualifying vessel counts below this are `low`.
    pub density_medium_from: usize,
    /// Counts above this are `high`.
    pub density_high_above: usize,
}

impl Geography {
    pub fn validate(&self) -> Result<()> {
        for r in Region::ALL {
            let n = self.regions.iter().filter(|d| d.name == r).count();
            if n != 1 {
                return Err(Error::Config(format!("region {} defined {n} times", r.as_str())));
            }
        }
        for d in &self.regions {
            if !d.bbox().is_well_formed() {
                return Err(Error::Config(format!("region {} box is inverted", d.name.as_str())));
            }
        }
        if self.peak_start_hour >= self.peak_end_hour || self.peak_end_hour > 24 {
            return Err(Error::Config("peak hours must satisfy start < end <= 24".into()));
        }
        if !(self.port_radius_nm > 0.0) {
            return Err(Error::Config("port_radius_nm must be positive".into()));
        }
        if self.density_medium_from > self.density_high_above {
            return Err(Error::Config("density thresholds out of order".into()));
        }
        Ok(())
    }

    pub fn region(&self, region: Region) -> &RegionDef {
        self.regions
            .iter()
            .find(|d| d.name == region)
            .expect("validated geography defines every region")
    }

    pub fn region_box(&self, region: Region) -> BoundingBox {
        self.region(region).bbox()
    }

    pub fn area_type(&self, lat: f64, lon: f64) -> AreaType {
        if self.nearest_port_within(lat, lon).is_some() {
            AreaType::Port
        } else {
            AreaType::OpenWater
        }
    }

    fn nearest_port_within(&self, lat: f64, lon: f64) -> Option<&Port> {
        self.ports
            .iter()
            .find(|p| haversine_nm(lat, lon, p.lat, p.lon) <= self.port_radius_nm)
    }

    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name.eq_ignore_ascii_case(name))
    }

    fn local(&self, region: Region, t: DateTime<Utc>) -> DateTime<Utc> {
        t + Duration::hours(self.region(region).utc_offset_hours as i64)
    }

    pub fn time_bucket(&self, region: Region, t: DateTime<Utc>) -> TimeBucket {
        let hour = self.local(region, t).hour();
        if hour >= self.peak_start_hour && hour < self.peak_end_hour {
            TimeBucket::Peak
        } else {
            TimeBucket::OffPeak
        }
    }

    pub fn season(&self, region: Region, t: DateTime<Utc>) -> Season {
        match self.local(region, t).month() {
            1..=3 => Season::Q1,
            4..=6 => Season::Q2,
            7..=9 => Season::Q3,
            _ => Season::Q4,
        }
    }

    pub fn density_tier(&self, qualifying_vessels: usize) -> DensityTier {
        if qualifying_vessels < self.density_medium_from {
            DensityTier::Low
        } else if qualifying_vessels > self.density_high_above {
            DensityTier::High
        } else {
            DensityTier::Medium
        }
    }

    /// Every cell a record belongs to (one per region box that contains it).
    pub fn cells_of(&self, r: &AisRecord) -> impl Iterator<Item = StratumCell> + '_ {
        let area_type = self.area_type(r.lat, r.lon);
        let (lat, lon, t) = (r.lat, r.lon, r.timestamp);
        self.regions
            .iter()
            .filter(move |d| d.bbox().contains(lat, lon))
            .map(move |d| StratumCell {
                region: d.name,
                area_type,
                time_bucket: self.time_bucket(d.name, t),
                season: self.season(d.name, t),
            })
    }

    /// Whether a record satisfies every selection axis of a cell.
    pub fn matches(&self, cell: &StratumCell, r: &AisRecord) -> bool {
        self.region_box(cell.region).contains(r.lat, r.lon)
            && self.time_bucket(cell.region, r.timestamp) == cell.time_bucket
            && self.season(cell.region, r.timestamp) == cell.season
            && self.area_type(r.lat, r.lon) == cell.area_type
    }
}
