//! Deterministic synthetic AIS traffic for tests and demos.
//!
//! 260 vessels around one port in each region, five reports apiece inside one
//! two-hour window. Every track stays within the port radius so the whole
//! fleet lands in a single port stratum. A few vessels loiter, circle, or
//! misbehave so every question category has something to find.

use chrono::Duration;

use crate::ais::record::parse_timestamp;
use crate::ais::{AisRecord, Mmsi, RecordStore};
use crate::error::Result;
use crate::geo::{destination, METERS_PER_NM};

/// Path of the committed fixture, relative to the core crate root.
pub const FIXTURE_CSV: &str = "fixtures/ais_fixture.csv";

pub const VESSELS_PER_REGION: usize = 260;
pub const REPORTS_PER_VESSEL: usize = 5;
const START: &str = "2024-03-01T18:00:00";
const STEP_MIN: i64 = 10;

const PORTS: [(&str, f64, f64, u32); 4] = [
    ("New York", 40.6840, -74.0440, 367_100_000),
    ("Houston", 29.7300, -95.2700, 367_200_000),
    ("Los Angeles", 33.7400, -118.2600, 367_300_000),
    ("Chicago", 41.8800, -87.6100, 367_400_000),
];

/// Type codes cycled over vessels: cargo, tanker, passenger, fishing, tug, pleasure.
const TYPE_CODES: [i32; 6] = [70, 80, 60, 30, 52, 37];

#[derive(Clone, Copy)]
enum Behaviour {
    Transit,
    Loiter,
    Circle,
    Speeding,
    Jump,
}

fn behaviour(v: usize) -> Behaviour {
    match v % 52 {
        0 | 26 => Behaviour::Loiter,
        13 => Behaviour::Circle,
        39 => Behaviour::Speeding,
        51 => Behaviour::Jump,
        _ => Behaviour::Transit,
    }
}

/// Simple deterministic hash to spread start positions and courses.
fn mix(a: u64) -> u64 {
    let mut z = a.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit(a: u64) -> f64 {
    (mix(a) >> 11) as f64 / (1u64 << 53) as f64
}

pub fn fixture_records() -> Vec<AisRecord> {
    let t0 = parse_timestamp(START).expect("fixture start");
    let mut out = Vec::with_capacity(PORTS.len() * VESSELS_PER_REGION * REPORTS_PER_VESSEL);
    for (pi, &(_, plat, plon, base)) in PORTS.iter().enumerate() {
        for v in 0..VESSELS_PER_REGION {
            let seed = (pi * 10_000 + v) as u64;
            let mmsi = Mmsi::new(base + v as u32).expect("nine-digit mmsi");
            let (lat0, lon0) = destination(plat, plon, unit(seed) * 360.0, unit(seed ^ 0xA5) * 2.5 * METERS_PER_NM);
            let code = TYPE_CODES[v % TYPE_CODES.len()];
            let course = (unit(seed ^ 0x5A) * 360.0 * 10.0).round() / 10.0;
            let kind = behaviour(v);
            let (mut lat, mut lon) = (lat0, lon0);
            for k in 0..REPORTS_PER_VESSEL {
                let mut minute = k as i64 * STEP_MIN;
                let (sog, cog, status) = match kind {
                    Behaviour::Transit => (5.0 + (v % 4) as f64 * 0.5, course, 0),
                    Behaviour::Loiter => (0.2, course, 1),
                    Behaviour::Circle => (3.0, (course + 90.0 * k as f64) % 360.0, 0),
                    Behaviour::Speeding => (45.0, course, 0),
                    Behaviour::Jump => (5.0, course, 0),
                };
                if k > 0 {
                    // Loiterers drift a few metres; everyone else advances along their last course.
                    let (dist_m, bearing) = match kind {
                        Behaviour::Loiter => (15.0, course),
                        Behaviour::Speeding => (6.0 * STEP_MIN as f64 / 60.0 * METERS_PER_NM, course),
                        Behaviour::Circle => (sog * STEP_MIN as f64 / 60.0 * METERS_PER_NM, (course + 90.0 * (k - 1) as f64) % 360.0),
                        _ => (sog * STEP_MIN as f64 / 60.0 * METERS_PER_NM, course),
                    };
                    (lat, lon) = destination(lat, lon, bearing, dist_m);
                }
                if let (Behaviour::Jump, 3) = (kind, k) {
                    // One minute after the previous report, three miles away.
                    minute = 2 * STEP_MIN + 1;
                    (lat, lon) = destination(lat, lon, (course + 90.0) % 360.0, 3.0 * METERS_PER_NM);
                }
                out.push(
                    AisRecord::new(mmsi, t0 + Duration::minutes(minute), lat, lon)
                        .with_kinematics(sog, cog)
                        .with_type_code(code)
                        .with_status_code(status),
                );
            }
        }
    }
    out
}

pub fn fixture_store() -> RecordStore {
    let mut s = RecordStore::new();
    for r in fixture_records() {
        s.insert(r);
    }
    s.finalize();
    s
}

/// The fixture as NOAA-layout CSV text.
pub fn fixture_csv() -> Result<String> {
    let mut buf = Vec::new();
    fixture_store().write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}
