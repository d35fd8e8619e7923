use std::fmt;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::codes::{normalize_status, normalize_vessel_type, StatusCategory, VesselCategory};
use crate::error::{Error, Result};

/// Timestamp layout used by the NOAA files and everywhere we print times.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Highest valid speed over ground; 102.3 means "not available".
pub const SOG_MAX: f64 = 102.2;
const SOG_UNAVAILABLE: f64 = 102.3;
const HEADING_UNAVAILABLE: f64 = 511.0;
const COG_UNAVAILABLE: f64 = 360.0;

/// Maritime Mobile Service Identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mmsi(u32);

impl Mmsi {
    pub fn new(value: u32) -> Result<Self> {
        if value > 999_999_999 {
            return Err(Error::field("mmsi", format!("{value} has more than 9 digits")));
        }
        Ok(Self(value))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t.len() != 9 || !t.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::field("mmsi", format!("`{t}` is not 9 decimal digits")));
        }
        Ok(Self(t.parse().expect("nine ascii digits fit in u32")))
    }
}

impl fmt::Display for Mmsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:09}", self.0)
    }
}

impl Serialize for Mmsi {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u32(self.0)
    }
}

impl<'de> Deserialize<'de> for Mmsi {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u32::deserialize(d)?;
        Mmsi::new(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransceiverClass {
    A,
    B,
}

/// One normalized AIS position report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisRecord {
    pub mmsi: Mmsi,
    #[serde(with = "timestamp_format")]
    pub timestamp: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub sog: Option<f64>,
    pub cog: Option<f64>,
    /// `None` when the transmitter reports 511 ("not available").
    pub heading: Option<f64>,
    pub vessel_name: Option<String>,
    pub imo: Option<String>,
    pub call_sign: Option<String>,
    pub vessel_type_code: i32,
    pub vessel_category: VesselCategory,
    pub status_code: i32,
    pub status_category: StatusCategory,
    pub length_m: Option<f64>,
    pub width_m: Option<f64>,
    pub draft_m: Option<f64>,
    pub cargo_code: Option<i32>,
    pub transceiver_class: Option<TransceiverClass>,
}

impl AisRecord {
    /// Minimal record with the positional fields set; codes default to "unknown".
    pub fn new(mmsi: Mmsi, timestamp: DateTime<Utc>, lat: f64, lon: f64) -> Self {
        Self {
            mmsi,
            timestamp,
            lat,
            lon,
            sog: None,
            cog: None,
            heading: None,
            vessel_name: None,
            imo: None,
            call_sign: None,
            vessel_type_code: 0,
            vessel_category: VesselCategory::Unknown,
            status_code: 15,
            status_category: StatusCategory::Unknown,
            length_m: None,
            width_m: None,
            draft_m: None,
            cargo_code: None,
            transceiver_class: None,
        }
    }

    pub fn with_kinematics(mut self, sog: f64, cog: f64) -> Self {
        self.sog = Some(sog);
        self.cog = Some(cog);
        self
    }

    pub fn with_type_code(mut self, code: i32) -> Self {
        self.vessel_type_code = code;
        self.vessel_category = normalize_vessel_type(code);
        self
    }

    pub fn with_status_code(mut self, code: i32) -> Self {
        self.status_code = code;
        self.status_category = normalize_status(code);
        self
    }

    /// Latitude, longitude, SOG and COG all present.
    pub fn has_complete_position(&self) -> bool {
        self.sog.is_some() && self.cog.is_some()
    }

    /// Check every range invariant; used by the parser and by invariant tests.
    pub fn validate(&self) -> Result<()> {
        check_range("lat", self.lat, -90.0, 90.0)?;
        check_range("lon", self.lon, -180.0, 180.0)?;
        if let Some(sog) = self.sog {
            check_range("sog", sog, 0.0, SOG_MAX)?;
        }
        if let Some(cog) = self.cog {
            check_half_open("cog", cog)?;
        }
        if let Some(h) = self.heading {
            check_half_open("heading", h)?;
        }
        for (name, v) in [
            ("length", self.length_m),
            ("width", self.width_m),
            ("draft", self.draft_m),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0) {
                    return Err(Error::field(name, format!("{v} is negative")));
                }
            }
        }
        Ok(())
    }

    /// Same record reduced to what a vessel-JSON line carries.
    pub fn projected(&self) -> AisRecord {
        let mut r = AisRecord::new(self.mmsi, self.timestamp, round_to(self.lat, 4), round_to(self.lon, 4));
        r.sog = self.sog.map(|v| round_to(v, 1));
        r.cog = self.cog.map(|v| round_to(v, 1).rem_euclid(360.0));
        r.heading = self.heading.map(|v| round_to(v, 1).rem_euclid(360.0));
        r.vessel_category = self.vessel_category;
        r.vessel_type_code = self.vessel_category.representative_code();
        r.status_category = self.status_category;
        r.status_code = self.status_category.representative_code();
        r
    }

    pub fn to_vessel_line(&self) -> VesselLine {
        let p = self.projected();
        VesselLine {
            lat: p.lat,
            lon: p.lon,
            sog: p.sog,
            cog: p.cog,
            heading: match p.heading {
                Some(h) => HeadingValue::Degrees(h),
                None => HeadingValue::Unavailable,
            },
            mmsi: p.mmsi,
            timestamp: p.timestamp,
            vessel_type: p.vessel_category,
            status: p.status_category,
        }
    }

    /// Canonical vessel-JSON text for prompts.
    pub fn to_vessel_json(&self) -> String {
        serde_json::to_string(&self.to_vessel_line()).expect("vessel line serializes")
    }
}

pub(crate) fn round_to(v: f64, places: i32) -> f64 {
    let scale = 10f64.powi(places);
    let r = (v * scale).round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn check_range(field: &'static str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::field(field, format!("{v} outside [{lo}, {hi}]")))
    }
}

fn check_half_open(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..360.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::field(field, format!("{v} outside [0, 360)")))
    }
}

pub(crate) fn normalize_sog(v: f64) -> Result<Option<f64>> {
    if (v - SOG_UNAVAILABLE).abs() < 1e-9 {
        return Ok(None);
    }
    check_range("sog", v, 0.0, SOG_MAX)?;
    Ok(Some(v))
}

pub(crate) fn normalize_cog(v: f64) -> Result<Option<f64>> {
    if (v - COG_UNAVAILABLE).abs() < 1e-9 {
        return Ok(None);
    }
    check_half_open("cog", v)?;
    Ok(Some(v))
}

pub(crate) fn normalize_heading(v: f64) -> Result<Option<f64>> {
    if (v - HEADING_UNAVAILABLE).abs() < 1e-9 {
        return Ok(None);
    }
    check_half_open("heading", v)?;
    Ok(Some(v))
}

pub fn parse_timestamp(text: &str) -> Result<DateTime<Utc>> {
    let t = text.trim();
    NaiveDateTime::parse_from_str(t, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(t, "%Y-%m-%d %H:%M:%S"))
        .map(|n| n.and_utc())
        .map_err(|e| Error::field("timestamp", format!("`{t}`: {e}")))
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

pub(crate) mod timestamp_format {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_timestamp(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_timestamp(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadingValue {
    Degrees(f64),
    Unavailable,
}

impl Serialize for HeadingValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            HeadingValue::Degrees(d) => s.serialize_f64(*d),
            HeadingValue::Unavailable => s.serialize_str("unavailable"),
        }
    }
}

impl<'de> Deserialize<'de> for HeadingValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(HeadingValue::Degrees(v)),
            Raw::Text(t) if t == "unavailable" => Ok(HeadingValue::Unavailable),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad heading `{t}`"))),
        }
    }
}

/// One vessel-JSON line as it appears in prompts and context files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselLine {
    pub lat: f64,
    pub lon: f64,
    pub sog: Option<f64>,
    pub cog: Option<f64>,
    pub heading: HeadingValue,
    pub mmsi: Mmsi,
    #[serde(with = "timestamp_format")]
    pub timestamp: DateTime<Utc>,
    #[serde(rename = "type")]
    pub vessel_type: VesselCategory,
    pub status: StatusCategory,
}

impl VesselLine {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn into_record(self) -> Result<AisRecord> {
        let mut r = AisRecord::new(self.mmsi, self.timestamp, self.lat, self.lon);
        r.sog = self.sog;
        r.cog = self.cog;
        r.heading = match self.heading {
            HeadingValue::Degrees(d) => Some(d),
            HeadingValue::Unavailable => None,
        };
        r.vessel_category = self.vessel_type;
        r.vessel_type_code = self.vessel_type.representative_code();
        r.status_category = self.status;
        r.status_code = self.status.representative_code();
        r.validate()?;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mmsi_requires_nine_digits() {
        assert!(Mmsi::parse("367000123").is_ok());
        assert!(Mmsi::parse("36700012X").is_err());
        assert!(Mmsi::parse("12345678").is_err());
        assert_eq!(Mmsi::parse("012345678").unwrap().to_string(), "012345678");
    }

    #[test]
    fn vessel_json_key_order_and_shape() {
        let r = AisRecord::new(
            Mmsi::parse("367000123").unwrap(),
            parse_timestamp("2024-03-01T18:00:00").unwrap(),
            23.70221,
            -120.96334,
        )
        .with_kinematics(12.3, 45.0)
        .with_type_code(71)
        .with_status_code(0);
        assert_eq!(
            r.to_vessel_json(),
            r#"{"lat":23.7022,"lon":-120.9633,"sog":12.3,"cog":45.0,"heading":"unavailable","mmsi":367000123,"timestamp":"2024-03-01T18:00:00","type":"cargo","status":"underway"}"#
        );
    }

    fn arb_record() -> impl Strategy<Value = AisRecord> {
        (
            1u32..999_999_999,
            0i64..400_000_000,
            -90.0f64..=90.0,
            -180.0f64..=180.0,
            proptest::option::of(0.0f64..102.2),
            proptest::option::of(0.0f64..359.9),
            proptest::option::of(0.0f64..359.9),
            0usize..9,
            0usize..8,
        )
            .prop_map(|(m, secs, lat, lon, sog, cog, hdg, cat, st)| {
                let mut r = AisRecord::new(
                    Mmsi::new(m).unwrap(),
                    DateTime::from_timestamp(1_600_000_000 + secs, 0).unwrap(),
                    lat,
                    lon,
                );
                r.sog = sog;
                r.cog = cog;
                r.heading = hdg;
                r.vessel_category = VesselCategory::ALL[cat];
                r.status_category = StatusCategory::ALL[st];
                r
            })
    }

    proptest! {
        #[test]
        fn vessel_json_round_trip(r in arb_record()) {
            let projected = r.projected();
            let text = r.to_vessel_json();
            let back = VesselLine::parse(&text).unwrap().into_record().unwrap();
            prop_assert_eq!(&back, &projected);
            // Projection is idempotent, so a projected record round-trips exactly.
            prop_assert_eq!(back.to_vessel_json(), text);
        }
    }
}
