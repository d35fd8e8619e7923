use serde::{Deserialize, Serialize};

use super::behavior::{detect_anomalies, detect_patterns, Anomaly, Pattern};
use super::census::{aggregate_stats, count_vessels, VesselFilter};
use super::kinematics::{movement_summary, predict_position};
use super::{Category, OracleConfig};
use crate::ais::record::{format_timestamp, round_to};
use crate::ais::{Mmsi, VesselCategory};
use crate::error::{Error, Result};
use crate::geo::BoundingBox;
use crate::sampler::VesselContext;

/// Unit attached to an oracle value (shared with the number extractor).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Knots,
    Degrees,
    Nm,
    Count,
    KnotsPerMinute,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
    pub unit: Unit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordRef {
    pub mmsi: Mmsi,
    pub timestamp: String,
}

/// A reference answer computed from the context data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub category: Category,
    pub numeric_values: Vec<NamedValue>,
    /// Canonical answer text; its numbers are exactly `numeric_values`.
    pub narrative: String,
    pub provenance: Vec<RecordRef>,
}

/// A concrete question the oracle can answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleQuery {
    Trajectory { mmsi: Mmsi, minutes_ahead: u32 },
    Movement { mmsi: Mmsi },
    Count { filter: VesselFilter },
    /// Statistics over every record, or over one vessel category.
    DataAnalysis {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        category: Option<VesselCategory>,
    },
    Pattern,
    Anomaly,
}

impl OracleQuery {
    pub fn category(&self) -> Category {
        match self {
            OracleQuery::Trajectory { .. } => Category::Trajectory,
            OracleQuery::Movement { .. } => Category::Movement,
            OracleQuery::Count { .. } => Category::Count,
            OracleQuery::DataAnalysis { .. } => Category::DataAnalysis,
            OracleQuery::Pattern => Category::Pattern,
            OracleQuery::Anomaly => Category::Anomaly,
        }
    }

    /// A reasonable default query per category, for inspection tools.
    pub fn default_for(context: &VesselContext, category: Category) -> Result<Self> {
        Ok(match category {
            Category::Trajectory => OracleQuery::Trajectory {
                mmsi: moving_vessel(context, 1)?,
                minutes_ahead: 30,
            },
            Category::Movement => OracleQuery::Movement {
                mmsi: moving_vessel(context, 2)?,
            },
            Category::Count => OracleQuery::Count {
                filter: VesselFilter {
                    category: Some(most_common_category(context)),
                    ..Default::default()
                },
            },
            Category::DataAnalysis => OracleQuery::DataAnalysis { category: None },
            Category::Pattern => OracleQuery::Pattern,
            Category::Anomaly => OracleQuery::Anomaly,
        })
    }
}

/// First vessel (mmsi order) with at least `min_records` reports, preferring moving ones.
pub(crate) fn moving_vessel(context: &VesselContext, min_records: usize) -> Result<Mmsi> {
    let eligible = || context.vessels.iter().filter(|v| v.records.len() >= min_records);
    eligible()
        .find(|v| v.records.last().and_then(|r| r.sog).is_some_and(|s| s > 0.0))
        .or_else(|| eligible().next())
        .map(|v| v.mmsi)
        .ok_or_else(|| Error::invalid(format!("no vessel with {min_records}+ records")))
}

pub(crate) fn most_common_category(context: &VesselContext) -> VesselCategory {
    let mut counts = std::collections::BTreeMap::new();
    for v in &context.vessels {
        if let Some(r) = v.records.first() {
            *counts.entry(r.vessel_category).or_insert(0usize) += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(c, _)| c)
        .unwrap_or(VesselCategory::Unknown)
}

fn value(name: &str, value: f64, unit: Unit) -> NamedValue {
    NamedValue {
        name: name.to_string(),
        value,
        unit,
    }
}

fn fmt_num(v: f64, places: usize) -> String {
    let s = format!("{v:.places$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Answer one query against a context.
pub fn answer(context: &VesselContext, query: &OracleQuery, cfg: &OracleConfig) -> Result<OracleAnswer> {
    let track_of = |mmsi: Mmsi| {
        context
            .vessels
            .iter()
            .find(|v| v.mmsi == mmsi)
            .ok_or_else(|| Error::invalid(format!("vessel {mmsi} not in context {}", context.context_id)))
    };
    let refs = |recs: &mut dyn Iterator<Item = &crate::ais::AisRecord>| -> Vec<RecordRef> {
        recs.map(|r| RecordRef {
            mmsi: r.mmsi,
            timestamp: format_timestamp(&r.timestamp),
        })
        .collect()
    };

    let (values, narrative, provenance) = match query {
        OracleQuery::Trajectory { mmsi, minutes_ahead } => {
            let track = track_of(*mmsi)?;
            let last = track.records.last().expect("tracks are non-empty");
            let (lat, lon) = predict_position(last, *minutes_ahead as f64 * 60.0)?;
            let (lat, lon) = (round_to(lat, 4), round_to(lon, 4));
            (
                vec![value("latitude", lat, Unit::Degrees), value("longitude", lon, Unit::Degrees)],
                format!(
                    "Projected position: latitude {}°, longitude {}°.",
                    fmt_num(lat, 4),
                    fmt_num(lon, 4)
                ),
                refs(&mut std::iter::once(last)),
            )
        }
        OracleQuery::Movement { mmsi } => {
            let track = track_of(*mmsi)?;
            let m = movement_summary(&track.records)?;
            let mean = round_to(m.mean_sog, 2);
            let max = round_to(m.max_sog, 2);
            let turn = round_to(m.total_heading_change_deg, 1);
            let accel = round_to(m.max_acceleration_kn_per_min, 3);
            (
                vec![
                    value("mean_sog", mean, Unit::Knots),
                    value("max_sog", max, Unit::Knots),
                    value("total_heading_change", turn, Unit::Degrees),
                    value("max_acceleration", accel, Unit::KnotsPerMinute),
                ],
                format!(
                    "Mean speed {} knots, maximum speed {} knots, total heading change {} degrees, maximum acceleration {} knots per minute.",
                    fmt_num(mean, 2),
                    fmt_num(max, 2),
                    fmt_num(turn, 1),
                    fmt_num(accel, 3)
                ),
                refs(&mut track.records.iter()),
            )
        }
        OracleQuery::Count { filter } => {
            let bbox = context.extent().unwrap_or_else(BoundingBox::world);
            let n = count_vessels(context, &bbox, &context.window, filter);
            let matched = context
                .vessels
                .iter()
                .filter_map(|v| v.records.iter().find(|r| filter.matches(r)));
            (
                vec![value("vessel_count", n as f64, Unit::Count)],
                format!("{n} vessels match."),
                refs(&mut matched.into_iter()),
            )
        }
        OracleQuery::DataAnalysis { category } => {
            let s = match category {
                None => aggregate_stats(context)?,
                Some(c) => {
                    let mut subset = context.clone();
                    for v in &mut subset.vessels {
                        v.records.retain(|r| r.vessel_category == *c);
                    }
                    subset.vessels.retain(|v| !v.records.is_empty());
                    aggregate_stats(&subset)?
                }
            };
            let mean = round_to(s.mean_sog, 2);
            let median = round_to(s.median_sog, 2);
            let max = round_to(s.max_sog, 2);
            (
                vec![
                    value("mean_sog", mean, Unit::Knots),
                    value("median_sog", median, Unit::Knots),
                    value("max_sog", max, Unit::Knots),
                    value("record_count", s.record_count as f64, Unit::Count),
                ],
                format!(
                    "Mean speed {} knots, median speed {} knots, maximum speed {} knots across {} records.",
                    fmt_num(mean, 2),
                    fmt_num(median, 2),
                    fmt_num(max, 2),
                    s.record_count
                ),
                vec![],
            )
        }
        OracleQuery::Pattern => {
            let hits = detect_patterns(context, cfg);
            let count = |p: Pattern| hits.iter().filter(|h| h.pattern == p).count();
            let (l, t, c) = (count(Pattern::Loitering), count(Pattern::Transit), count(Pattern::Circling));
            (
                vec![
                    value("loitering", l as f64, Unit::Count),
                    value("transit", t as f64, Unit::Count),
                    value("circling", c as f64, Unit::Count),
                ],
                format!("{l} vessels loitering, {t} vessels in transit, {c} vessels circling."),
                hits.iter()
                    .map(|h| RecordRef {
                        mmsi: h.mmsi,
                        timestamp: format_timestamp(&h.window.start),
                    })
                    .collect(),
            )
        }
        OracleQuery::Anomaly => {
            let hits = detect_anomalies(context, cfg);
            let count = |a: Anomaly| hits.iter().filter(|h| h.anomaly == a).count();
            let (s, j, d) = (
                count(Anomaly::SpeedViolation),
                count(Anomaly::ImpossibleJump),
                count(Anomaly::DarkGap),
            );
            (
                vec![
                    value("speed_violations", s as f64, Unit::Count),
                    value("impossible_jumps", j as f64, Unit::Count),
                    value("dark_gaps", d as f64, Unit::Count),
                ],
                format!("{s} speed violations, {j} impossible position jumps, {d} dark gaps."),
                hits.iter()
                    .map(|h| RecordRef {
                        mmsi: h.mmsi,
                        timestamp: String::new(),
                    })
                    .collect(),
            )
        }
    };
    Ok(OracleAnswer {
        category: query.category(),
        numeric_values: values,
        narrative,
        provenance,
    })
}
