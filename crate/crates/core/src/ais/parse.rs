//! NOAA-layout CSV row parsing.

use std::collections::HashMap;

use csv::StringRecord;

use super::codes::CodeTables;
use super::record::{
    normalize_cog, normalize_heading, normalize_sog, parse_timestamp, AisRecord, Mmsi,
    TransceiverClass,
};
use crate::error::{Error, Result};

/// Column names of the NOAA AIS export, in their published order.
pub const NOAA_COLUMNS: [&str; 17] = [
    "MMSI",
    "BaseDateTime",
    "LAT",
    "LON",
    "SOG",
    "COG",
    "Heading",
    "VesselName",
    "IMO",
    "CallSign",
    "VesselType",
    "Status",
    "Length",
    "Width",
    "Draft",
    "Cargo",
    "TransceiverClass",
];

const REQUIRED: [&str; 6] = ["MMSI", "BaseDateTime", "LAT", "LON", "SOG", "COG"];

/// Column-name to position map built from a header row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: HashMap<String, usize>,
}

impl Schema {
    pub fn from_header<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let columns: HashMap<String, usize> = names
            .into_iter()
            .enumerate()
            .map(|(i, n)| (n.trim().trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        for name in REQUIRED {
            if !columns.contains_key(name) {
                return Err(Error::MissingColumn(name));
            }
        }
        Ok(Self { columns })
    }

    pub fn noaa() -> Self {
        Self::from_header(NOAA_COLUMNS).expect("NOAA header has all required columns")
    }

    fn get<'r>(&self, row: &'r StringRecord, name: &str) -> Option<&'r str> {
        self.columns
            .get(name)
            .and_then(|&i| row.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
    }

    fn required<'r>(&self, row: &'r StringRecord, name: &'static str) -> Result<&'r str> {
        self.get(row, name).ok_or(Error::MissingColumn(name))
    }
}

/// Parse one CSV data line against a schema.
pub fn parse_csv_record(line: &str, schema: &Schema) -> Result<AisRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(line.as_bytes());
    let row = match reader.records().next() {
        Some(row) => row?,
        None => return Err(Error::invalid("empty line")),
    };
    parse_row(&row, schema, CodeTables::builtin())
}

pub(crate) fn parse_row(row: &StringRecord, schema: &Schema, codes: &CodeTables) -> Result<AisRecord> {
    let mmsi = Mmsi::parse(schema.required(row, "MMSI")?)?;
    let timestamp = parse_timestamp(schema.required(row, "BaseDateTime")?)?;
    let lat = number("lat", schema.required(row, "LAT")?)?;
    let lon = number("lon", schema.required(row, "LON")?)?;

    let mut rec = AisRecord::new(mmsi, timestamp, lat, lon);
    rec.sog = normalize_sog(number("sog", schema.required(row, "SOG")?)?)?;
    rec.cog = normalize_cog(number("cog", schema.required(row, "COG")?)?)?;
    rec.heading = match schema.get(row, "Heading") {
        Some(h) => normalize_heading(number("heading", h)?)?,
        None => None,
    };
    rec.vessel_name = schema.get(row, "VesselName").map(String::from);
    rec.imo = schema.get(row, "IMO").map(String::from);
    rec.call_sign = schema.get(row, "CallSign").map(String::from);

    rec.vessel_type_code = match schema.get(row, "VesselType") {
        Some(t) => integer("vessel_type", t)?,
        None => 0,
    };
    rec.vessel_category = codes.vessel_category(rec.vessel_type_code);
    rec.status_code = match schema.get(row, "Status") {
        Some(s) => integer("status", s)?,
        None => 15,
    };
    rec.status_category = codes.status_category(rec.status_code);

    rec.length_m = optional_number(schema, row, "Length", "length")?;
    rec.width_m = optional_number(schema, row, "Width", "width")?;
    rec.draft_m = optional_number(schema, row, "Draft", "draft")?;
    rec.cargo_code = schema
        .get(row, "Cargo")
        .map(|c| integer("cargo", c))
        .transpose()?;
    rec.transceiver_class = match schema.get(row, "TransceiverClass") {
        Some("A") => Some(TransceiverClass::A),
        Some("B") => Some(TransceiverClass::B),
        Some(other) => {
            return Err(Error::field("transceiver_class", format!("`{other}` is not A or B")))
        }
        None => None,
    };

    rec.validate()?;
    Ok(rec)
}

fn number(field: &'static str, text: &str) -> Result<f64> {
    let v: f64 = text
        .parse()
        .map_err(|_| Error::field(field, format!("`{text}` is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::field(field, format!("`{text}` is not finite")))
    }
}

fn integer(field: &'static str, text: &str) -> Result<i32> {
    // Some exports write integer codes as "70.0".
    if let Ok(v) = text.parse::<i32>() {
        return Ok(v);
    }
    match text.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < i32::MAX as f64 => Ok(v as i32),
        _ => Err(Error::field(field, format!("`{text}` is not an integer"))),
    }
}

fn optional_number(
    schema: &Schema,
    row: &StringRecord,
    column: &str,
    field: &'static str,
) -> Result<Option<f64>> {
    schema.get(row, column).map(|t| number(field, t)).transpose()
}

/// Write a record back out in NOAA column order.
pub(crate) fn to_noaa_row(r: &AisRecord) -> [String; 17] {
    fn opt<T: ToString>(v: &Option<T>) -> String {
        v.as_ref().map(ToString::to_string).unwrap_or_default()
    }
    [
        r.mmsi.to_string(),
        super::record::format_timestamp(&r.timestamp),
        r.lat.to_string(),
        r.lon.to_string(),
        r.sog.map(|v| v.to_string()).unwrap_or_else(|| "102.3".into()),
        r.cog.map(|v| v.to_string()).unwrap_or_else(|| "360".into()),
        r.heading.map(|v| v.to_string()).unwrap_or_else(|| "511".into()),
        opt(&r.vessel_name),
        opt(&r.imo),
        opt(&r.call_sign),
        r.vessel_type_code.to_string(),
        r.status_code.to_string(),
        opt(&r.length_m),
        opt(&r.width_m),
        opt(&r.draft_m),
        opt(&r.cargo_code),
        match r.transceiver_class {
            Some(TransceiverClass::A) => "A".into(),
            Some(TransceiverClass::B) => "B".into(),
            None => String::new(),
        },
    ]
}
