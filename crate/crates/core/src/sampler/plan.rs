use std::collections::{BTreeMap, HashSet};

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use super::stratum::{Geography, Region, Stratum, StratumCell};
use super::SamplingConfig;
use crate::ais::{Mmsi, RecordStore, TimeWindow};
use crate::error::{Error, Result};

/// Contexts allotted to one stratum, with the windows that can host them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub stratum: Stratum,
    pub count: usize,
    pub windows: Vec<TimeWindow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsufficientCell {
    pub cell: StratumCell,
    /// Largest qualifying vessel count seen in any window.
    pub best_window_vessels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifyPlan {
    pub entries: Vec<PlanEntry>,
    /// Regions with no usable stratum.
    pub coverage_warnings: Vec<String>,
    /// Cells that have data but never enough vessels for a context.
    pub insufficient: Vec<InsufficientCell>,
}

impl StratifyPlan {
    pub fn total(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }

    /// (stratum, count) pairs, as planned.
    pub fn allocations(&self) -> Vec<(Stratum, usize)> {
        self.entries.iter().map(|e| (e.stratum, e.count)).collect()
    }
}

/// Allocate `target_contexts` over the strata present in the store.
///
/// Regions are visited round-robin so every region with usable data gets a
/// context before any region gets a second; inside a region the strata rotate.
pub fn stratify_plan(
    store: &RecordStore,
    geo: &Geography,
    cfg: &SamplingConfig,
    target_contexts: usize,
) -> Result<StratifyPlan> {
    if target_contexts == 0 {
        return Err(Error::invalid("target_contexts must be at least 1"));
    }
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let window_secs = cfg.window_minutes as i64 * 60;

    // (cell, window index) -> vessels
    let mut occupancy: BTreeMap<(StratumCell, i64), HashSet<Mmsi>> = BTreeMap::new();
    for r in store.records() {
        if !r.has_complete_position() {
            continue;
        }
        let w = r.timestamp.timestamp().div_euclid(window_secs);
        let p = r.projected();
        for cell in geo.cells_of(&p) {
            occupancy.entry((cell, w)).or_default().insert(r.mmsi);
        }
    }

    let mut usable: BTreeMap<Stratum, Vec<TimeWindow>> = BTreeMap::new();
    let mut best: BTreeMap<StratumCell, usize> = BTreeMap::new();
    for ((cell, w), vessels) in &occupancy {
        let n = vessels.len();
        let b = best.entry(*cell).or_default();
        *b = (*b).max(n);
        if n >= cfg.min_vessels {
            let start = DateTime::from_timestamp(w * window_secs, 0).expect("window in range");
            let end = DateTime::from_timestamp((w + 1) * window_secs, 0).expect("window in range");
            usable
                .entry(Stratum::new(*cell, geo.density_tier(n)))
                .or_default()
                .push(TimeWindow { start, end });
        }
    }
    let usable_cells: HashSet<StratumCell> = usable.keys().map(|s| s.cell()).collect();
    let insufficient = best
        .into_iter()
        .filter(|(cell, _)| !usable_cells.contains(cell))
        .map(|(cell, best_window_vessels)| InsufficientCell {
            cell,
            best_window_vessels,
        })
        .collect();

    let mut by_region: BTreeMap<Region, Vec<(Stratum, Vec<TimeWindow>)>> = BTreeMap::new();
    for (stratum, windows) in usable {
        by_region.entry(stratum.region).or_default().push((stratum, windows));
    }
    let coverage_warnings: Vec<String> = Region::ALL
        .iter()
        .filter(|r| !by_region.contains_key(r))
        .map(|r| format!("no usable data for region {}", r.as_str()))
        .collect();
    if by_region.is_empty() {
        return Err(Error::InsufficientVessels {
            stratum: "every stratum".into(),
            found: 0,
            required: cfg.min_vessels,
        });
    }

    // Round-robin: region order, then stratum rotation inside each region.
    let regions: Vec<Region> = by_region.keys().copied().collect();
    let mut counts: BTreeMap<Stratum, usize> = BTreeMap::new();
    let mut cursor: BTreeMap<Region, usize> = BTreeMap::new();
    let mut order: Vec<Stratum> = Vec::new();
    for i in 0..target_contexts {
        let region = regions[i % regions.len()];
        let strata = &by_region[&region];
        let c = cursor.entry(region).or_default();
        let stratum = strata[*c % strata.len()].0;
        *c += 1;
        let n = counts.entry(stratum).or_default();
        if *n == 0 {
            order.push(stratum);
        }
        *n += 1;
    }

    let entries = order
        .into_iter()
        .map(|stratum| {
            let windows = by_region[&stratum.region]
                .iter()
                .find(|(s, _)| *s == stratum)
                .map(|(_, w)| w.clone())
                .unwrap_or_default();
            PlanEntry {
                stratum,
                count: counts[&stratum],
                windows,
            }
        })
        .collect();

    Ok(StratifyPlan {
        entries,
        coverage_warnings,
        insufficient,
    })
}
