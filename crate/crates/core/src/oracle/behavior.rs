//! Behavioral pattern and anomaly detectors.

use serde::{Deserialize, Serialize};

use super::census::lower_median;
use super::OracleConfig;
use crate::ais::{AisRecord, Mmsi, TimeWindow};
use crate::geo::{haversine_nm, signed_angle_diff};
use crate::sampler::{VesselContext, VesselTrack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Loitering,
    Transit,
    Circling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternHit {
    pub mmsi: Mmsi,
    pub pattern: Pattern,
    /// Span of the first qualifying sub-track (end is the last report + 1 s).
    pub window: TimeWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anomaly {
    SpeedViolation,
    ImpossibleJump,
    DarkGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyHit {
    pub mmsi: Mmsi,
    pub anomaly: Anomaly,
    pub evidence: String,
}

/// At most one hit per (vessel, pattern), in vessel order.
pub fn detect_patterns(context: &VesselContext, cfg: &OracleConfig) -> Vec<PatternHit> {
    let mut hits = Vec::new();
    for track in &context.vessels {
        let t = TrackView::new(track);
        if t.len() < 2 {
            continue;
        }
        let checks: [(Pattern, &dyn Fn(usize, usize) -> bool); 3] = [
            (Pattern::Loitering, &|i, j| t.loiters(i, j, cfg)),
            (Pattern::Transit, &|i, j| t.transits(i, j, cfg)),
            (Pattern::Circling, &|i, j| t.circles(i, j, cfg)),
        ];
        for (pattern, check) in checks {
            if let Some((i, j)) = t.first_span(check) {
                hits.push(PatternHit {
                    mmsi: track.mmsi,
                    pattern,
                    window: t.window(i, j),
                });
            }
        }
    }
    hits
}

/// At most one hit per (vessel, anomaly), in vessel order.
pub fn detect_anomalies(context: &VesselContext, cfg: &OracleConfig) -> Vec<AnomalyHit> {
    let mut hits = Vec::new();
    for track in &context.vessels {
        let recs = &track.records;
        if let Some(r) = recs.iter().find(|r| r.sog.is_some_and(|s| s > cfg.speed_caps.cap(r))) {
            hits.push(AnomalyHit {
                mmsi: track.mmsi,
                anomaly: Anomaly::SpeedViolation,
                evidence: format!(
                    "sog {} kn exceeds the {} cap of {} kn at {}",
                    r.sog.unwrap_or_default(),
                    r.vessel_category,
                    cfg.speed_caps.cap(r),
                    crate::ais::record::format_timestamp(&r.timestamp)
                ),
            });
        }
        if let Some((a, b, speed)) = recs.windows(2).find_map(|w| {
            let s = implied_speed_kn(&w[0], &w[1]);
            (s > cfg.impossible_jump_kn).then_some((&w[0], &w[1], s))
        }) {
            hits.push(AnomalyHit {
                mmsi: track.mmsi,
                anomaly: Anomaly::ImpossibleJump,
                evidence: format!(
                    "{:.1} nm in {} s between {} and {} (implied {:.0} kn)",
                    haversine_nm(a.lat, a.lon, b.lat, b.lon),
                    (b.timestamp - a.timestamp).num_seconds(),
                    crate::ais::record::format_timestamp(&a.timestamp),
                    crate::ais::record::format_timestamp(&b.timestamp),
                    speed
                ),
            });
        }
        if let Some(gap) = dark_gap(recs, &context.window, cfg) {
            hits.push(AnomalyHit {
                mmsi: track.mmsi,
                anomaly: Anomaly::DarkGap,
                evidence: format!("silent for {:.1} h", gap / 3600.0),
            });
        }
    }
    hits
}

fn implied_speed_kn(a: &AisRecord, b: &AisRecord) -> f64 {
    let nm = haversine_nm(a.lat, a.lon, b.lat, b.lon);
    let hours = (b.timestamp - a.timestamp).num_seconds() as f64 / 3600.0;
    if hours <= 0.0 {
        if nm > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        nm / hours
    }
}

/// Longest silence above the threshold, if the vessel otherwise reports at a fast cadence.
fn dark_gap(recs: &[AisRecord], window: &TimeWindow, cfg: &OracleConfig) -> Option<f64> {
    let gaps: Vec<f64> = recs
        .windows(2)
        .filter(|w| window.contains(w[0].timestamp) && window.contains(w[1].timestamp))
        .map(|w| (w[1].timestamp - w[0].timestamp).num_seconds() as f64)
        .collect();
    let threshold = cfg.dark_gap_hours * 3600.0;
    let (mut dark, mut normal): (Vec<f64>, Vec<f64>) = gaps.into_iter().partition(|&g| g > threshold);
    if dark.is_empty() || normal.is_empty() {
        return None;
    }
    normal.sort_by(f64::total_cmp);
    if lower_median(&normal) > cfg.dark_gap_cadence_minutes * 60.0 {
        return None;
    }
    dark.sort_by(f64::total_cmp);
    dark.last().copied()
}

/// Prefix sums over one track for O(1) span statistics.
struct TrackView<'a> {
    recs: &'a [AisRecord],
    secs: Vec<i64>,
    sog_sum: Vec<f64>,
    sin_sum: Vec<f64>,
    cos_sum: Vec<f64>,
    /// Cumulative signed course change up to each record.
    turn: Vec<f64>,
}

impl<'a> TrackView<'a> {
    fn new(track: &'a VesselTrack) -> Self {
        let recs = &track.records[..];
        let n = recs.len();
        let mut v = TrackView {
            recs,
            secs: Vec::with_capacity(n),
            sog_sum: vec![0.0; n + 1],
            sin_sum: vec![0.0; n + 1],
            cos_sum: vec![0.0; n + 1],
            turn: vec![0.0; n],
        };
        for (i, r) in recs.iter().enumerate() {
            v.secs.push(r.timestamp.timestamp());
            let sog = r.sog.unwrap_or(0.0);
            let cog = r.cog.unwrap_or(0.0).to_radians();
            v.sog_sum[i + 1] = v.sog_sum[i] + sog;
            v.sin_sum[i + 1] = v.sin_sum[i] + cog.sin();
            v.cos_sum[i + 1] = v.cos_sum[i] + cog.cos();
            if i > 0 {
                let d = signed_angle_diff(recs[i - 1].cog.unwrap_or(0.0), r.cog.unwrap_or(0.0));
                v.turn[i] = v.turn[i - 1] + d;
            }
        }
        v
    }

    fn len(&self) -> usize {
        self.recs.len()
    }

    fn minutes(&self, i: usize, j: usize) -> f64 {
        (self.secs[j] - self.secs[i]) as f64 / 60.0
    }

    fn mean_sog(&self, i: usize, j: usize) -> f64 {
        (self.sog_sum[j + 1] - self.sog_sum[i]) / (j + 1 - i) as f64
    }

    /// Circular standard deviation of course, degrees.
    fn cog_std(&self, i: usize, j: usize) -> f64 {
        let n = (j + 1 - i) as f64;
        let s = (self.sin_sum[j + 1] - self.sin_sum[i]) / n;
        let c = (self.cos_sum[j + 1] - self.cos_sum[i]) / n;
        let r = (s * s + c * c).sqrt().min(1.0);
        if r <= 0.0 {
            return f64::INFINITY;
        }
        (-2.0 * r.ln()).max(0.0).sqrt().to_degrees()
    }

    /// Largest distance from the span centroid, nm.
    fn radius_nm(&self, i: usize, j: usize) -> f64 {
        let span = &self.recs[i..=j];
        let n = span.len() as f64;
        let lat = span.iter().map(|r| r.lat).sum::<f64>() / n;
        let lon = span.iter().map(|r| r.lon).sum::<f64>() / n;
        span.iter()
            .map(|r| haversine_nm(lat, lon, r.lat, r.lon))
            .fold(0.0, f64::max)
    }

    fn loiters(&self, i: usize, j: usize, cfg: &OracleConfig) -> bool {
        self.minutes(i, j) >= cfg.loiter_min_minutes
            && self.mean_sog(i, j) < cfg.loiter_max_sog
            && self.radius_nm(i, j) < cfg.loiter_max_radius_nm
    }

    fn transits(&self, i: usize, j: usize, cfg: &OracleConfig) -> bool {
        self.minutes(i, j) >= cfg.transit_min_minutes
            && self.mean_sog(i, j) > cfg.transit_min_sog
            && self.cog_std(i, j) < cfg.transit_max_cog_std
    }

    fn circles(&self, i: usize, j: usize, cfg: &OracleConfig) -> bool {
        self.minutes(i, j) <= cfg.circling_window_minutes
            && (self.turn[j] - self.turn[i]).abs() >= cfg.circling_min_turn_deg
    }

    /// First (i, j) in lexicographic order satisfying `check`.
    fn first_span(&self, check: &dyn Fn(usize, usize) -> bool) -> Option<(usize, usize)> {
        let n = self.len();
        (0..n).find_map(|i| ((i + 1)..n).find(|&j| check(i, j)).map(|j| (i, j)))
    }

    fn window(&self, i: usize, j: usize) -> TimeWindow {
        TimeWindow {
            start: self.recs[i].timestamp,
            end: self.recs[j].timestamp + chrono::Duration::seconds(1),
        }
    }
}
