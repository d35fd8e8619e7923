//! Ground-truth oracle: deterministic answers for every question category.

mod answer;
mod behavior;
mod census;
mod kinematics;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use answer::{answer, NamedValue, OracleAnswer, OracleQuery, RecordRef, Unit};
pub use behavior::{detect_anomalies, detect_patterns, Anomaly, AnomalyHit, Pattern, PatternHit};
pub use census::{aggregate_stats, count_vessels, vessel_ids, AggregateStats, VesselFilter};
pub use kinematics::{movement_summary, predict_position, MovementSummary};

use crate::ais::{AisRecord, VesselCategory};
use crate::error::{Error, Result};

/// Question categories, in prompt order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Trajectory,
    Movement,
    Count,
    DataAnalysis,
    Pattern,
    Anomaly,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Trajectory,
        Category::Movement,
        Category::Count,
        Category::DataAnalysis,
        Category::Pattern,
        Category::Anomaly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Trajectory => "trajectory",
            Category::Movement => "movement",
            Category::Count => "count",
            Category::DataAnalysis => "data_analysis",
            Category::Pattern => "pattern",
            Category::Anomaly => "anomaly",
        }
    }

    /// Questions of this category in every context.
    pub fn questions_per_context(self) -> usize {
        match self {
            Category::Trajectory => 3,
            Category::Anomaly => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown category {s:?}")))
    }
}

/// Per-category speed limits in knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedCaps {
    pub cargo: f64,
    pub tanker: f64,
    pub passenger: f64,
    pub fishing: f64,
    pub tug: f64,
    pub pleasure: f64,
    pub military: f64,
    pub other: f64,
    pub unknown: f64,
}

impl SpeedCaps {
    pub fn for_category(&self, c: VesselCategory) -> f64 {
        match c {
            VesselCategory::Cargo => self.cargo,
            VesselCategory::Tanker => self.tanker,
            VesselCategory::Passenger => self.passenger,
            VesselCategory::Fishing => self.fishing,
            VesselCategory::Tug => self.tug,
            VesselCategory::Pleasure => self.pleasure,
            VesselCategory::Military => self.military,
            VesselCategory::Other => self.other,
            VesselCategory::Unknown => self.unknown,
        }
    }

    pub fn cap(&self, r: &AisRecord) -> f64 {
        self.for_category(r.vessel_category)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub impossible_jump_kn: f64,
    pub dark_gap_hours: f64,
    pub dark_gap_cadence_minutes: f64,
    pub loiter_max_sog: f64,
    pub loiter_min_minutes: f64,
    pub loiter_max_radius_nm: f64,
    pub transit_min_sog: f64,
    pub transit_max_cog_std: f64,
    pub transit_min_minutes: f64,
    pub circling_min_turn_deg: f64,
    pub circling_window_minutes: f64,
    pub speed_caps: SpeedCaps,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        let caps = VesselCategory::ALL.map(|c| self.speed_caps.for_category(c));
        let values = [
            self.impossible_jump_kn,
            self.dark_gap_hours,
            self.dark_gap_cadence_minutes,
            self.loiter_max_sog,
            self.loiter_min_minutes,
            self.loiter_max_radius_nm,
            self.transit_min_sog,
            self.transit_max_cog_std,
            self.transit_min_minutes,
            self.circling_min_turn_deg,
            self.circling_window_minutes,
        ];
        if values.iter().chain(caps.iter()).any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Config("oracle thresholds must be positive and finite".into()));
        }
        if self.dark_gap_cadence_minutes >= self.dark_gap_hours * 60.0 {
            return Err(Error::Config("dark_gap_cadence_minutes must be below dark_gap_hours".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ais::{Mmsi, StatusCategory, TimeWindow};
    use crate::config::PipelineConfig;
    use crate::sampler::{AreaType, DensityTier, Region, Season, Stratum, StratumCell, TimeBucket, VesselContext};
    use chrono::{DateTime, Duration, Utc};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn t0() -> DateTime<Utc> {
        DateTime::from_timestamp(1_709_316_000, 0).unwrap()
    }

    fn stratum() -> Stratum {
        Stratum::new(
            StratumCell {
                region: Region::EastCoast,
                area_type: AreaType::Port,
                time_bucket: TimeBucket::Peak,
                season: Season::Q1,
            },
            DensityTier::Low,
        )
    }

    fn ctx(records: Vec<AisRecord>) -> VesselContext {
        let window = TimeWindow::new(t0() - Duration::hours(12), t0() + Duration::hours(12)).unwrap();
        VesselContext::from_records(0, stratum(), window, records)
    }

    /// (minute, lat, lon, sog, cog)
    fn track(mmsi: u32, type_code: i32, points: &[(i64, f64, f64, f64, f64)]) -> Vec<AisRecord> {
        points
            .iter()
            .map(|&(m, lat, lon, sog, cog)| {
                AisRecord::new(Mmsi::new(mmsi).unwrap(), t0() + Duration::minutes(m), lat, lon)
                    .with_kinematics(sog, cog)
                    .with_type_code(type_code)
                    .with_status_code(0)
            })
            .collect()
    }

    fn cfg() -> OracleConfig {
        PipelineConfig::builtin().oracle.clone()
    }

    fn mixed_context(n: u32) -> VesselContext {
        let mut recs = Vec::new();
        for i in 0..n {
            let code = [70, 80, 60, 30, 52][(i % 5) as usize];
            let status = [0, 1, 5][(i % 3) as usize];
            for k in 0..3 {
                recs.push(
                    AisRecord::new(
                        Mmsi::new(366_000_000 + i).unwrap(),
                        t0() + Duration::minutes(10 * k as i64),
                        40.0 + i as f64 * 0.01,
                        -74.0 + k as f64 * 0.01,
                    )
                    .with_kinematics((i % 10) as f64 + k as f64, 90.0)
                    .with_type_code(code)
                    .with_status_code(status),
                );
            }
        }
        ctx(recs)
    }

    #[test]
    fn builtin_caps() {
        let c = cfg();
        assert_eq!(c.speed_caps.cargo, 25.0);
        assert_eq!(c.speed_caps.tug, 15.0);
        assert_eq!(c.speed_caps.unknown, 80.0);
        c.validate().unwrap();
        let mut bad = c.clone();
        bad.loiter_max_sog = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn category_names_round_trip() {
        for c in Category::ALL {
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
        }
        assert_eq!(Category::ALL.iter().map(|c| c.questions_per_context()).sum::<usize>(), 12);
    }

    #[test]
    fn count_matches_brute_force() {
        let c = mixed_context(60);
        let everything = crate::geo::BoundingBox::world();
        assert_eq!(count_vessels(&c, &everything, &c.window, &VesselFilter::default()), 60);

        let cargo = VesselFilter {
            category: Some(VesselCategory::Cargo),
            ..Default::default()
        };
        let brute: BTreeSet<Mmsi> = c
            .records()
            .filter(|r| r.vessel_category == VesselCategory::Cargo)
            .map(|r| r.mmsi)
            .collect();
        assert_eq!(count_vessels(&c, &everything, &c.window, &cargo), brute.len());

        let moored_tankers = VesselFilter {
            category: Some(VesselCategory::Tanker),
            status: Some(StatusCategory::Moored),
            mmsi: None,
        };
        let brute: BTreeSet<Mmsi> = c
            .records()
            .filter(|r| r.vessel_category == VesselCategory::Tanker && r.status_category == StatusCategory::Moored)
            .map(|r| r.mmsi)
            .collect();
        assert_eq!(count_vessels(&c, &everything, &c.window, &moored_tankers), brute.len());

        let military = VesselFilter {
            category: Some(VesselCategory::Military),
            ..Default::default()
        };
        assert_eq!(count_vessels(&c, &everything, &c.window, &military), 0);
    }

    #[test]
    fn count_respects_box_and_window() {
        let c = mixed_context(20);
        let b = crate::geo::BoundingBox::new(40.0, 40.095, -75.0, -73.0);
        let w = TimeWindow::new(t0() + Duration::minutes(5), t0() + Duration::minutes(15)).unwrap();
        let brute: BTreeSet<Mmsi> = c
            .records()
            .filter(|r| b.contains(r.lat, r.lon) && w.contains(r.timestamp))
            .map(|r| r.mmsi)
            .collect();
        assert_eq!(count_vessels(&c, &b, &w, &VesselFilter::default()), brute.len());
        assert_eq!(brute.len(), 10);
    }

    #[test]
    fn aggregate_stats_rules() {
        let one = ctx(track(367_000_001, 70, &[(0, 40.0, -74.0, 7.0, 0.0)]));
        let s = aggregate_stats(&one).unwrap();
        assert_eq!((s.mean_sog, s.median_sog, s.max_sog), (7.0, 7.0, 7.0));

        let mut recs = Vec::new();
        for (i, sog) in [8.0, 2.0, 6.0, 4.0].into_iter().enumerate() {
            recs.extend(track(367_000_010 + i as u32, 70, &[(0, 40.0, -74.0, sog, 0.0)]));
        }
        let s = aggregate_stats(&ctx(recs)).unwrap();
        assert_eq!(s.median_sog, 4.0);
        assert_eq!(s.mean_sog, 5.0);

        let c = mixed_context(30);
        let s = aggregate_stats(&c).unwrap();
        assert_eq!(s.category_histogram.values().sum::<usize>(), c.record_count());
        assert_eq!(s.status_histogram.values().sum::<usize>(), c.record_count());
        assert!(aggregate_stats(&ctx(vec![])).is_err());
    }

    #[test]
    fn stationary_vessel_loiters() {
        let pts: Vec<_> = (0..=15).map(|k| (3 * k, 40.0, -74.0, 0.2, 0.0)).collect();
        let hits = detect_patterns(&ctx(track(367_000_001, 70, &pts)), &cfg());
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].pattern, Pattern::Loitering);
    }

    #[test]
    fn straight_fast_track_transits() {
        // 15 kn due east for an hour: 0.25 nm per minute.
        let pts: Vec<_> = (0..=20)
            .map(|k| {
                let (lat, lon) = crate::geo::destination(40.0, -74.0, 90.0, 15.0 * 1852.0 * 3.0 * k as f64 / 60.0);
                (3 * k, lat, lon, 15.0, 90.0)
            })
            .collect();
        let hits = detect_patterns(&ctx(track(367_000_002, 70, &pts)), &cfg());
        assert_eq!(hits.iter().map(|h| h.pattern).collect::<Vec<_>>(), vec![Pattern::Transit]);
    }

    #[test]
    fn turning_vessel_circles() {
        let pts: Vec<_> = (0..=12).map(|k| (5 * k, 40.0, -74.0, 4.0, (k * 40 % 360) as f64)).collect();
        let hits = detect_patterns(&ctx(track(367_000_003, 52, &pts)), &cfg());
        assert!(hits.iter().any(|h| h.pattern == Pattern::Circling));
    }

    #[test]
    fn short_track_has_no_patterns() {
        let pts = [(0, 40.0, -74.0, 0.0, 0.0), (3, 40.0, -74.0, 0.0, 0.0), (9, 40.0, -74.0, 0.0, 0.0)];
        assert!(detect_patterns(&ctx(track(367_000_004, 70, &pts)), &cfg()).is_empty());
    }

    #[test]
    fn anomalies() {
        let fast_cargo = track(367_000_005, 70, &[(0, 40.0, -74.0, 45.0, 90.0)]);
        let hits = detect_anomalies(&ctx(fast_cargo), &cfg());
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].anomaly, Anomaly::SpeedViolation);

        // 60 nm north in 10 minutes.
        let (lat2, _) = crate::geo::destination(40.0, -74.0, 0.0, 60.0 * 1852.0);
        let jump = track(367_000_006, 70, &[(0, 40.0, -74.0, 10.0, 0.0), (10, lat2, -74.0, 10.0, 0.0)]);
        let hits = detect_anomalies(&ctx(jump), &cfg());
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].anomaly, Anomaly::ImpossibleJump);
        assert!(hits[0].evidence.contains("360 kn"), "{}", hits[0].evidence);

        let mut pts: Vec<_> = (0..10).map(|k| (2 * k, 40.0, -74.0, 0.0, 0.0)).collect();
        pts.push((18 + 7 * 60, 40.0, -74.0, 0.0, 0.0));
        let hits = detect_anomalies(&ctx(track(367_000_007, 70, &pts)), &cfg());
        assert_eq!(hits.iter().map(|h| h.anomaly).collect::<Vec<_>>(), vec![Anomaly::DarkGap]);

        assert!(detect_anomalies(&mixed_context(40), &cfg()).is_empty());
    }

    #[test]
    fn answers_embed_their_values() {
        let c = mixed_context(25);
        for cat in Category::ALL {
            let q = OracleQuery::default_for(&c, cat).unwrap();
            let a = answer(&c, &q, &cfg()).unwrap();
            assert_eq!(a.category, cat);
            assert!(!a.numeric_values.is_empty());
            let nums = crate::eval::extract_numbers(&a.narrative);
            let got: Vec<f64> = nums.iter().map(|n| n.value).collect();
            let want: Vec<f64> = a.numeric_values.iter().map(|v| v.value).collect();
            assert_eq!(got, want, "{}", a.narrative);
        }
    }

    fn arb_track() -> impl Strategy<Value = Vec<AisRecord>> {
        proptest::collection::vec((1i64..40, -0.02f64..0.02, -0.02f64..0.02, 0.0f64..30.0, 0.0f64..360.0), 2..14)
            .prop_map(|steps| {
                let mut minute = 0;
                let pts: Vec<_> = steps
                    .into_iter()
                    .map(|(dt, dlat, dlon, sog, cog)| {
                        minute += dt;
                        (minute, 40.0 + dlat, -74.0 + dlon, sog, cog)
                    })
                    .collect();
                track(367_000_100, 70, &pts)
            })
    }

    proptest! {
        #[test]
        fn loosening_thresholds_never_removes_detections(
            recs in arb_track(),
            loosen in proptest::collection::vec(1.0f64..3.0, 12),
        ) {
            let c = ctx(recs);
            let tight = cfg();
            let mut loose = tight.clone();
            loose.loiter_max_sog *= loosen[0];
            loose.loiter_min_minutes /= loosen[1];
            loose.loiter_max_radius_nm *= loosen[2];
            loose.transit_min_sog /= loosen[3];
            loose.transit_max_cog_std *= loosen[4];
            loose.transit_min_minutes /= loosen[5];
            loose.circling_min_turn_deg /= loosen[6];
            loose.circling_window_minutes *= loosen[7];
            loose.impossible_jump_kn /= loosen[8];
            loose.speed_caps.cargo /= loosen[9];
            // Kept above the cadence limit so "otherwise fast" stays meaningful.
            loose.dark_gap_hours /= loosen[10];
            loose.dark_gap_cadence_minutes *= loosen[11];

            let key = |p: &PatternHit| (p.mmsi, p.pattern);
            let tight_p: BTreeSet<_> = detect_patterns(&c, &tight).iter().map(key).collect();
            let loose_p: BTreeSet<_> = detect_patterns(&c, &loose).iter().map(key).collect();
            prop_assert!(tight_p.is_subset(&loose_p));

            let key = |a: &AnomalyHit| (a.mmsi, a.anomaly);
            let tight_a: BTreeSet<_> = detect_anomalies(&c, &tight).iter().map(key).collect();
            let loose_a: BTreeSet<_> = detect_anomalies(&c, &loose).iter().map(key).collect();
            prop_assert!(tight_a.is_subset(&loose_a));
        }
    }
}
