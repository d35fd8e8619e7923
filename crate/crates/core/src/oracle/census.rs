use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ais::{AisRecord, Mmsi, StatusCategory, TimeWindow, VesselCategory};
use crate::error::{Error, Result};
use crate::geo::BoundingBox;
use crate::sampler::VesselContext;

/// Optional vessel predicates for counting questions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VesselFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<VesselCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<StatusCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mmsi: Option<Mmsi>,
}

impl VesselFilter {
    pub fn matches(&self, r: &AisRecord) -> bool {
        self.category.is_none_or(|c| r.vessel_category == c)
            && self.status.is_none_or(|s| r.status_category == s)
            && self.mmsi.is_none_or(|m| r.mmsi == m)
    }

    pub fn is_empty(&self) -> bool {
        self.category.is_none() && self.status.is_none() && self.mmsi.is_none()
    }
}

/// Distinct vessels with at least one record inside the box, window and filter.
pub fn count_vessels(
    context: &VesselContext,
    bbox: &BoundingBox,
    window: &TimeWindow,
    filter: &VesselFilter,
) -> usize {
    context
        .vessels
        .iter()
        .filter(|v| {
            v.records.iter().any(|r| {
                bbox.contains(r.lat, r.lon) && window.contains(r.timestamp) && filter.matches(r)
            })
        })
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub record_count: usize,
    pub mean_sog: f64,
    /// Lower-middle element for even counts.
    pub median_sog: f64,
    pub max_sog: f64,
    pub category_histogram: BTreeMap<VesselCategory, usize>,
    pub status_histogram: BTreeMap<StatusCategory, usize>,
}

/// Speed statistics and category/status histograms over every record.
pub fn aggregate_stats(context: &VesselContext) -> Result<AggregateStats> {
    let mut sogs: Vec<f64> = Vec::with_capacity(context.record_count());
    let mut category_histogram = BTreeMap::new();
    let mut status_histogram = BTreeMap::new();
    for r in context.records() {
        sogs.push(r.sog.ok_or_else(|| Error::field("sog", format!("missing for {}", r.mmsi)))?);
        *category_histogram.entry(r.vessel_category).or_insert(0) += 1;
        *status_histogram.entry(r.status_category).or_insert(0) += 1;
    }
    if sogs.is_empty() {
        return Err(Error::invalid("aggregate statistics need a non-empty context"));
    }
    let n = sogs.len();
    let mean_sog = sogs.iter().sum::<f64>() / n as f64;
    sogs.sort_by(f64::total_cmp);
    Ok(AggregateStats {
        record_count: n,
        mean_sog,
        median_sog: lower_median(&sogs),
        max_sog: sogs[n - 1],
        category_histogram,
        status_histogram,
    })
}

/// Lower-middle element of an ascending slice.
pub(crate) fn lower_median(sorted: &[f64]) -> f64 {
    sorted[(sorted.len() - 1) / 2]
}

/// Distinct vessel ids in a context (handy for brute-force checks).
pub fn vessel_ids(context: &VesselContext) -> BTreeSet<Mmsi> {
    context.vessels.iter().map(|v| v.mmsi).collect()
}
