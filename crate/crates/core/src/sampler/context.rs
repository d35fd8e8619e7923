use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stratum::{Geography, Stratum, StratumCell};
use super::{assign_generator, Generator, SamplingConfig};
use crate::ais::{AisRecord, Mmsi, RecordStore, TimeWindow, VesselLine};
use crate::error::{Error, Result};
use crate::geo::BoundingBox;

/// One vessel's records inside a context, time-ordered.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselTrack {
    pub mmsi: Mmsi,
    pub records: Vec<AisRecord>,
}

fn group_tracks(records: Vec<AisRecord>) -> Vec<VesselTrack> {
    let mut by_vessel: BTreeMap<Mmsi, Vec<AisRecord>> = BTreeMap::new();
    for r in records {
        by_vessel.entry(r.mmsi).or_default().push(r);
    }
    by_vessel
        .into_iter()
        .map(|(mmsi, mut records)| {
            records.sort_by_key(|r| r.timestamp);
            VesselTrack { mmsi, records }
        })
        .collect()
}

/// A stratified bundle of vessels used as the evidence block of a prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselContext {
    pub context_id: usize,
    pub stratum: Stratum,
    pub window: TimeWindow,
    pub vessels: Vec<VesselTrack>,
    pub generator: Generator,
    /// Qualifying vessels before the cap was applied.
    pub qualifying_vessels: usize,
}

impl VesselContext {
    pub fn vessel_count(&self) -> usize {
        self.vessels.len()
    }

    pub fn records(&self) -> impl Iterator<Item = &AisRecord> {
        self.vessels.iter().flat_map(|v| v.records.iter())
    }

    pub fn record_count(&self) -> usize {
        self.vessels.iter().map(|v| v.records.len()).sum()
    }

    /// Context over arbitrary records, grouped by vessel; qualifying = vessel count.
    pub fn from_records(
        context_id: usize,
        stratum: Stratum,
        window: TimeWindow,
        records: Vec<AisRecord>,
    ) -> Self {
        let vessels = group_tracks(records);
        Self {
            context_id,
            stratum,
            window,
            qualifying_vessels: vessels.len(),
            vessels,
            generator: assign_generator(context_id),
        }
    }

    pub fn with_id(mut self, context_id: usize) -> Self {
        self.context_id = context_id;
        self.generator = assign_generator(context_id);
        self
    }

    /// Vessel-JSON lines, vessel by vessel in mmsi order.
    pub fn vessel_lines(&self) -> impl Iterator<Item = String> + '_ {
        self.records().map(AisRecord::to_vessel_json)
    }

    /// Approximate prompt tokens (characters / 4).
    pub fn token_estimate(&self) -> usize {
        let chars: usize = self.vessel_lines().map(|l| l.len() + 1).sum();
        chars.div_ceil(4)
    }

    /// Bounding box over every record.
    pub fn extent(&self) -> Option<BoundingBox> {
        let mut it = self.records();
        let first = it.next()?;
        let mut b = BoundingBox::new(first.lat, first.lat, first.lon, first.lon);
        for r in it {
            b.lat_min = b.lat_min.min(r.lat);
            b.lat_max = b.lat_max.max(r.lat);
            b.lon_min = b.lon_min.min(r.lon);
            b.lon_max = b.lon_max.max(r.lon);
        }
        Some(b)
    }

    /// Check the context invariants against the geography and sampling limits.
    pub fn check_invariants(&self, geo: &Geography, cfg: &SamplingConfig) -> Result<()> {
        let n = self.vessel_count();
        if n < cfg.min_vessels || n > cfg.max_vessels {
            return Err(Error::invalid(format!("vessel count {n} outside limits")));
        }
        let cell = self.stratum.cell();
        for r in self.records() {
            if !r.has_complete_position() {
                return Err(Error::invalid(format!("{} lacks sog/cog", r.mmsi)));
            }
            if !self.window.contains(r.timestamp) {
                return Err(Error::invalid(format!("{} outside window", r.mmsi)));
            }
            if !geo.matches(&cell, r) {
                return Err(Error::invalid(format!("{} outside stratum {cell}", r.mmsi)));
            }
        }
        if self.generator != assign_generator(self.context_id) {
            return Err(Error::invalid("generator does not follow the schedule"));
        }
        Ok(())
    }

    /// Serialize: a JSON object whose `vessels` array holds one vessel-JSON line per row.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Header<'a> {
            context_id: usize,
            stratum: &'a Stratum,
            window: &'a TimeWindow,
            generator: Generator,
            vessel_count: usize,
            qualifying_vessels: usize,
            token_estimate: usize,
        }
        let header = serde_json::to_string(&Header {
            context_id: self.context_id,
            stratum: &self.stratum,
            window: &self.window,
            generator: self.generator,
            vessel_count: self.vessel_count(),
            qualifying_vessels: self.qualifying_vessels,
            token_estimate: self.token_estimate(),
        })
        .expect("context header serializes");
        let mut out = String::with_capacity(self.record_count() * 160);
        out.push_str(&header[..header.len() - 1]);
        out.push_str(",\"vessels\":[");
        let mut first = true;
        for line in self.vessel_lines() {
            out.push_str(if first { "\n" } else { ",\n" });
            first = false;
            out.push_str(&line);
        }
        out.push_str("\n]}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            context_id: usize,
            stratum: Stratum,
            window: TimeWindow,
            generator: Generator,
            vessel_count: usize,
            qualifying_vessels: usize,
            #[allow(dead_code)]
            token_estimate: usize,
            vessels: Vec<VesselLine>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        let records = raw
            .vessels
            .into_iter()
            .map(VesselLine::into_record)
            .collect::<Result<Vec<_>>>()?;
        let vessels = group_tracks(records);
        if vessels.len() != raw.vessel_count {
            return Err(Error::invalid(format!(
                "context {}: vessel_count {} but {} vessels listed",
                raw.context_id,
                raw.vessel_count,
                vessels.len()
            )));
        }
        if raw.generator != assign_generator(raw.context_id) {
            return Err(Error::invalid(format!(
                "context {}: generator does not follow the schedule",
                raw.context_id
            )));
        }
        Ok(Self {
            context_id: raw.context_id,
            stratum: raw.stratum,
            window: raw.window,
            vessels,
            generator: raw.generator,
            qualifying_vessels: raw.qualifying_vessels,
        })
    }

    pub fn file_name(context_id: usize) -> String {
        format!("context_{context_id:05}.json")
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(self.context_id));
        fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Load every `context_*.json` in a directory, ordered by context id.
pub fn load_contexts(dir: &Path) -> Result<Vec<VesselContext>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("context_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    let mut contexts = paths
        .iter()
        .map(|p| VesselContext::read(p))
        .collect::<Result<Vec<_>>>()?;
    contexts.sort_by_key(|c| c.context_id);
    Ok(contexts)
}

/// Pick at most `cap` items deterministically for a seed; order preserved.
pub fn select_capped<T>(items: Vec<T>, cap: usize, seed: u64) -> Vec<T> {
    if items.len() <= cap {
        return items;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = index::sample(&mut rng, items.len(), cap).into_vec();
    keep.sort_unstable();
    let mut keep = keep.into_iter().peekable();
    items
        .into_iter()
        .enumerate()
        .filter_map(|(i, item)| {
            if keep.peek() == Some(&i) {
                keep.next();
                Some(item)
            } else {
                None
            }
        })
        .collect()
}

/// Qualifying records for a cell and window, grouped by vessel in mmsi order.
pub(crate) fn qualifying_tracks(
    store: &RecordStore,
    geo: &Geography,
    cell: &StratumCell,
    window: &TimeWindow,
) -> Vec<VesselTrack> {
    let bbox = geo.region_box(cell.region);
    let mut by_vessel: BTreeMap<Mmsi, Vec<AisRecord>> = BTreeMap::new();
    for r in store.query(window, &bbox) {
        let p = r.projected();
        if p.has_complete_position() && geo.matches(cell, &p) {
            by_vessel.entry(p.mmsi).or_default().push(p);
        }
    }
    by_vessel
        .into_iter()
        .map(|(mmsi, mut records)| {
            records.sort_by_key(|r| r.timestamp);
            VesselTrack { mmsi, records }
        })
        .collect()
}

/// Build one context for a stratum and window.
///
/// The stratum's density tier is recomputed from the qualifying vessel count.
/// When more than `max_vessels` qualify, the kept subset depends only on `seed`.
pub fn build_context(
    store: &RecordStore,
    geo: &Geography,
    cfg: &SamplingConfig,
    stratum: Stratum,
    window: TimeWindow,
    seed: u64,
) -> Result<VesselContext> {
    let cell = stratum.cell();
    let tracks = qualifying_tracks(store, geo, &cell, &window);
    let qualifying = tracks.len();
    if qualifying < cfg.min_vessels {
        return Err(Error::InsufficientVessels {
            stratum: cell.to_string(),
            found: qualifying,
            required: cfg.min_vessels,
        });
    }
    let vessels = select_capped(tracks, cfg.max_vessels, seed);
    Ok(VesselContext {
        context_id: 0,
        stratum: Stratum::new(cell, geo.density_tier(qualifying)),
        window,
        vessels,
        generator: assign_generator(0),
        qualifying_vessels: qualifying,
    })
}

/// Per-context seed derived from the run seed; independent of scheduling.
pub fn context_seed(run_seed: u64, context_id: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = run_seed ^ (context_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Short human summary used in prompt headers.
pub fn describe(ctx: &VesselContext) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{} vessels, {} records, {} {:?} area, window {} to {} UTC",
        ctx.vessel_count(),
        ctx.record_count(),
        ctx.stratum.region.display_name(),
        ctx.stratum.area_type,
        crate::ais::record::format_timestamp(&ctx.window.start),
        crate::ais::record::format_timestamp(&ctx.window.end)
    );
    s
}
