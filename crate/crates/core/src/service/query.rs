use std::sync::OnceLock;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use regex::Regex;
use serde::Serialize;

use crate::ais::{Mmsi, StatusCategory, TimeWindow, VesselCategory};
use crate::error::{Error, Result};
use crate::geo::BoundingBox;
use crate::oracle::VesselFilter;
use crate::sampler::{Geography, Region};

/// Constraints recovered from a natural-language query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryConstraints {
    pub time_window: Option<TimeWindow>,
    pub bbox: Option<BoundingBox>,
    pub region: Option<Region>,
    /// Port named in a "near <port>" phrase, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub near_port: Option<String>,
    pub filter: VesselFilter,
    pub raw_question: String,
}

macro_rules! re {
    ($name:ident, $pat:expr) => {
        fn $name() -> &'static Regex {
            static RE: OnceLock<Regex> = OnceLock::new();
            RE.get_or_init(|| Regex::new($pat).expect("query regex"))
        }
    };
}

re!(iso_date, r"\b(\d{4}-\d{2}-\d{2})\b");
re!(last_span, r"(?i)\b(?:last|past)\s+(\d+)\s+(minute|hour|day)s?\b");
re!(
    latlon_box,
    r"(?i)\blat(?:itude)?\s+(-?\d+(?:\.\d+)?)\s+to\s+(-?\d+(?:\.\d+)?)\s*,?\s*(?:and\s+)?lon(?:gitude)?\s+(-?\d+(?:\.\d+)?)\s+to\s+(-?\d+(?:\.\d+)?)"
);
re!(mmsi_ref, r"(?i)\bmmsi\s*:?\s*(\d{9})\b");

const CATEGORY_WORDS: [(&str, VesselCategory); 8] = [
    ("cargo", VesselCategory::Cargo),
    ("tanker", VesselCategory::Tanker),
    ("passenger", VesselCategory::Passenger),
    ("fishing vessel", VesselCategory::Fishing),
    ("fishing boat", VesselCategory::Fishing),
    ("tug", VesselCategory::Tug),
    ("pleasure", VesselCategory::Pleasure),
    ("military", VesselCategory::Military),
];

const STATUS_WORDS: [(&str, StatusCategory); 5] = [
    ("underway", StatusCategory::Underway),
    ("under way", StatusCategory::Underway),
    ("at anchor", StatusCategory::Anchored),
    ("anchored", StatusCategory::Anchored),
    ("moored", StatusCategory::Moored),
];

fn has_word(haystack: &str, word: &str) -> bool {
    haystack.match_indices(word).any(|(i, _)| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + word.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(|c| c.is_alphanumeric() && c != 's')
    })
}

/// Parse a query against the geography's region and port lists.
///
/// Relative spans ("last 6 hours") end at `anchor`, normally the store's latest record.
/// A query needs a time window, a box or a region; otherwise it is rejected.
pub fn parse_query(text: &str, geo: &Geography, anchor: DateTime<Utc>) -> Result<QueryConstraints> {
    let raw = text.trim();
    if raw.is_empty() {
        return Err(Error::invalid("empty query"));
    }
    let lower = raw.to_lowercase();

    let dates: Vec<NaiveDate> = iso_date()
        .captures_iter(raw)
        .filter_map(|c| NaiveDate::parse_from_str(&c[1], "%Y-%m-%d").ok())
        .collect();
    let mut time_window = match (dates.iter().min(), dates.iter().max()) {
        (Some(a), Some(b)) => {
            let start = a.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
            let end = b.and_hms_opt(0, 0, 0).expect("midnight").and_utc() + Duration::days(1);
            Some(TimeWindow::new(start, end)?)
        }
        _ => None,
    };
    if let Some(c) = last_span().captures(raw) {
        let n: i64 = c[1].parse().map_err(|_| Error::invalid("span too large"))?;
        let span = match c[2].to_lowercase().as_str() {
            "minute" => Duration::minutes(n),
            "hour" => Duration::hours(n),
            _ => Duration::days(n),
        };
        // End bound is exclusive; nudge it so the anchor record itself is included.
        time_window = Some(TimeWindow::new(anchor - span, anchor + Duration::seconds(1))?);
    }

    let region = Region::ALL.into_iter().find(|r| {
        lower.contains(&r.display_name().to_lowercase()) || lower.contains(r.as_str())
    });

    let mut bbox = None;
    let mut near_port = None;
    if let Some(i) = lower.find("near ") {
        let rest = &lower[i + 5..];
        let rest = rest.strip_prefix("the port of ").or_else(|| rest.strip_prefix("port of ")).unwrap_or(rest);
        if let Some(p) = geo
            .ports
            .iter()
            .filter(|p| rest.starts_with(&p.name.to_lowercase()))
            .max_by_key(|p| p.name.len())
        {
            bbox = Some(BoundingBox::around(p.lat, p.lon, geo.port_radius_nm));
            near_port = Some(p.name.clone());
        }
    }
    if let Some(c) = latlon_box().captures(raw) {
        let v: Vec<f64> = (1..=4).map(|i| c[i].parse().expect("regex guarantees a number")).collect();
        let b = BoundingBox::new(v[0].min(v[1]), v[0].max(v[1]), v[2].min(v[3]), v[2].max(v[3]));
        bbox = Some(b);
    }

    let mut filter = VesselFilter::default();
    filter.category = CATEGORY_WORDS.iter().find(|(w, _)| has_word(&lower, w)).map(|&(_, c)| c);
    filter.status = STATUS_WORDS.iter().find(|(w, _)| has_word(&lower, w)).map(|&(_, s)| s);
    if let Some(c) = mmsi_ref().captures(raw) {
        filter.mmsi = Some(Mmsi::parse(&c[1])?);
    }

    if time_window.is_none() && bbox.is_none() && region.is_none() {
        return Err(Error::UnresolvableQuery {
            missing: vec!["time".into(), "space".into()],
        });
    }
    Ok(QueryConstraints {
        time_window,
        bbox,
        region,
        near_port,
        filter,
        raw_question: raw.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ais::record::parse_timestamp;
    use crate::config::PipelineConfig;

    fn geo() -> Geography {
        PipelineConfig::builtin().geography.clone()
    }

    fn anchor() -> DateTime<Utc> {
        parse_timestamp("2024-03-01T20:00:00").unwrap()
    }

    #[test]
    fn gulf_cargo_on_a_day() {
        let q = parse_query("How many cargo vessels in the Gulf of Mexico on 2024-03-01?", &geo(), anchor()).unwrap();
        assert_eq!(q.region, Some(Region::GulfOfMexico));
        assert_eq!(q.filter.category, Some(VesselCategory::Cargo));
        let w = q.time_window.unwrap();
        assert_eq!(w.start, parse_timestamp("2024-03-01T00:00:00").unwrap());
        assert_eq!(w.end, parse_timestamp("2024-03-02T00:00:00").unwrap());
        assert!(q.bbox.is_none());
    }

    #[test]
    fn relative_span_near_port() {
        let g = geo();
        let q = parse_query("vessels last 6 hours near Miami", &g, anchor()).unwrap();
        let w = q.time_window.unwrap();
        assert_eq!(w.start, parse_timestamp("2024-03-01T14:00:00").unwrap());
        assert!(w.contains(anchor()));
        let p = g.port("Miami").unwrap();
        assert_eq!(q.bbox.unwrap(), BoundingBox::around(p.lat, p.lon, g.port_radius_nm));
        assert_eq!(q.near_port.as_deref(), Some("Miami"));
    }

    #[test]
    fn explicit_box_and_filters() {
        let q = parse_query(
            "moored tankers lat 29 to 30.5, lon -96 to -94 mmsi 367000001",
            &geo(),
            anchor(),
        )
        .unwrap();
        assert_eq!(q.bbox.unwrap(), BoundingBox::new(29.0, 30.5, -96.0, -94.0));
        assert_eq!(q.filter.status, Some(StatusCategory::Moored));
        assert_eq!(q.filter.category, Some(VesselCategory::Tanker));
        assert_eq!(q.filter.mmsi.unwrap().get(), 367_000_001);
    }

    #[test]
    fn unresolvable_lists_missing() {
        match parse_query("tell me about ships", &geo(), anchor()) {
            Err(Error::UnresolvableQuery { missing }) => assert_eq!(missing, ["time", "space"]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_query("  ", &geo(), anchor()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn word_boundaries() {
        assert!(has_word("two tugs nearby", "tug"));
        assert!(!has_word("tugboat", "tug"));
        assert!(!has_word("discargo", "cargo"));
    }
}
