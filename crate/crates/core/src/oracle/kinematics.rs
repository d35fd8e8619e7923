use serde::{Deserialize, Serialize};

use crate::ais::AisRecord;
use crate::error::{Error, Result};
use crate::geo::{destination, signed_angle_diff, METERS_PER_NM};

const MAX_PROJECTION_SECS: f64 = 24.0 * 3600.0;

/// Dead-reckon a position `delta_t_secs` ahead along the last reported course.
pub fn predict_position(last: &AisRecord, delta_t_secs: f64) -> Result<(f64, f64)> {
    let sog = last.sog.ok_or_else(|| Error::field("sog", "required for projection"))?;
    let cog = last.cog.ok_or_else(|| Error::field("cog", "required for projection"))?;
    if !(0.0..=MAX_PROJECTION_SECS).contains(&delta_t_secs) {
        return Err(Error::invalid(format!(
            "delta_t {delta_t_secs}s outside [0, 24h]"
        )));
    }
    let distance_m = sog * METERS_PER_NM * delta_t_secs / 3600.0;
    Ok(destination(last.lat, last.lon, cog, distance_m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovementSummary {
    pub mean_sog: f64,
    pub max_sog: f64,
    /// Sum of absolute minimal course changes between consecutive reports.
    pub total_heading_change_deg: f64,
    /// Largest |Δsog| per elapsed minute between consecutive reports.
    pub max_acceleration_kn_per_min: f64,
}

pub fn movement_summary(track: &[AisRecord]) -> Result<MovementSummary> {
    if track.len() < 2 {
        return Err(Error::invalid(format!(
            "movement summary needs at least 2 records, got {}",
            track.len()
        )));
    }
    let mut sogs = Vec::with_capacity(track.len());
    let mut cogs = Vec::with_capacity(track.len());
    for (i, r) in track.iter().enumerate() {
        if i > 0 && r.timestamp < track[i - 1].timestamp {
            return Err(Error::invalid("track is not time-sorted"));
        }
        sogs.push(r.sog.ok_or_else(|| Error::field("sog", format!("missing for {}", r.mmsi)))?);
        cogs.push(r.cog.ok_or_else(|| Error::field("cog", format!("missing for {}", r.mmsi)))?);
    }
    let mean_sog = sogs.iter().sum::<f64>() / sogs.len() as f64;
    let max_sog = sogs.iter().copied().fold(f64::MIN, f64::max);
    let total_heading_change_deg = cogs
        .windows(2)
        .map(|w| signed_angle_diff(w[0], w[1]).abs())
        .sum();
    let max_acceleration_kn_per_min = track
        .windows(2)
        .zip(sogs.windows(2))
        .filter_map(|(r, s)| {
            let minutes = (r[1].timestamp - r[0].timestamp).num_seconds() as f64 / 60.0;
            (minutes > 0.0).then(|| (s[1] - s[0]).abs() / minutes)
        })
        .fold(0.0, f64::max);
    Ok(MovementSummary {
        mean_sog,
        max_sog,
        total_heading_change_deg,
        max_acceleration_kn_per_min,
    })
}
