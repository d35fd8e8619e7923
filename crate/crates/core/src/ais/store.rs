//! In-memory record store with on-disk persistence.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::codes::CodeTables;
use super::parse::{parse_row, to_noaa_row, Schema, NOAA_COLUMNS};
use super::record::{timestamp_format, AisRecord, Mmsi};
use crate::error::{Error, Result};
use crate::geo::BoundingBox;

const RECORDS_FILE: &str = "records.csv";
const STATS_FILE: &str = "ingest_stats.json";
const MAX_KEPT_REJECTIONS: usize = 100;

/// Half-open UTC interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    #[serde(with = "timestamp_format")]
    pub start: DateTime<Utc>,
    #[serde(with = "timestamp_format")]
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if end <= start {
            return Err(Error::invalid(format!("empty time window {start} .. {end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        t >= self.start && t < self.end
    }

    /// Everything representable; used as "no time constraint".
    pub fn unbounded() -> Self {
        Self {
            start: DateTime::<Utc>::MIN_UTC,
            end: DateTime::<Utc>::MAX_UTC,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub rows: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub deduplicated: u64,
}

impl IngestStats {
    fn absorb(&mut self, other: &IngestStats) {
        self.rows += other.rows;
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.deduplicated += other.deduplicated;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub source: String,
    /// 1-based data row number (header excluded).
    pub row: u64,
    pub reason: String,
}

/// Outcome of one ingest call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub stats: IngestStats,
    /// First rejections, for diagnostics; the full count is in `stats`.
    pub rejections: Vec<Rejection>,
}

/// Append-then-query collection of AIS records, unique on (mmsi, timestamp).
#[derive(Debug, Default, Clone)]
pub struct RecordStore {
    records: Vec<AisRecord>,
    keys: HashSet<(Mmsi, i64)>,
    sorted: bool,
    stats: IngestStats,
}

struct Shard {
    records: Vec<AisRecord>,
    report: IngestReport,
}

impl RecordStore {
    pub fn new() -> Self {
        Self {
            sorted: true,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    /// Records in (timestamp, mmsi) order once the store is finalized.
    pub fn records(&self) -> &[AisRecord] {
        &self.records
    }

    /// Add one record; returns false when (mmsi, timestamp) is already present.
    pub fn insert(&mut self, record: AisRecord) -> bool {
        if !self.keys.insert((record.mmsi, record.timestamp.timestamp())) {
            return false;
        }
        if let Some(last) = self.records.last() {
            if sort_key(last) > sort_key(&record) {
                self.sorted = false;
            }
        }
        self.records.push(record);
        true
    }

    /// Sort into query order; cheap when already sorted.
    pub fn finalize(&mut self) {
        if !self.sorted {
            self.records.sort_by_key(sort_key);
            self.sorted = true;
        }
    }

    /// Ingest CSV rows (header first) from a reader.
    pub fn ingest<R: Read>(&mut self, source: R) -> Result<IngestReport> {
        self.ingest_named(source, "<stream>")
    }

    fn ingest_named<R: Read>(&mut self, source: R, name: &str) -> Result<IngestReport> {
        let shard = parse_shard(source, name, CodeTables::builtin())?;
        let report = self.merge_shard(shard);
        self.finalize();
        Ok(report)
    }

    /// Ingest several files, parsing them in parallel and merging in argument order.
    pub fn ingest_files<P: AsRef<Path> + Sync>(&mut self, paths: &[P]) -> Result<IngestReport> {
        let codes = CodeTables::builtin();
        let shards: Vec<Shard> = paths
            .par_iter()
            .map(|p| {
                let path = p.as_ref();
                let file = File::open(path).map_err(|e| Error::io(path, e))?;
                parse_shard(BufReader::new(file), &path.display().to_string(), codes)
            })
            .collect::<Result<_>>()?;
        let mut total = IngestReport::default();
        for shard in shards {
            let r = self.merge_shard(shard);
            total.stats.absorb(&r.stats);
            let room = MAX_KEPT_REJECTIONS.saturating_sub(total.rejections.len());
            total.rejections.extend(r.rejections.into_iter().take(room));
        }
        self.finalize();
        Ok(total)
    }

    fn merge_shard(&mut self, shard: Shard) -> IngestReport {
        let mut report = shard.report;
        for rec in shard.records {
            if self.insert(rec) {
                report.stats.accepted += 1;
            } else {
                report.stats.deduplicated += 1;
            }
        }
        self.stats.absorb(&report.stats);
        report
    }

    /// Records inside both the time window and the box.
    pub fn query(&self, window: &TimeWindow, bbox: &BoundingBox) -> Vec<&AisRecord> {
        self.window_slice(window)
            .iter()
            .filter(|r| window.contains(r.timestamp) && bbox.contains(r.lat, r.lon))
            .collect()
    }

    fn window_slice(&self, window: &TimeWindow) -> &[AisRecord] {
        if !self.sorted {
            return &self.records;
        }
        let lo = self.records.partition_point(|r| r.timestamp < window.start);
        let hi = self.records.partition_point(|r| r.timestamp < window.end);
        &self.records[lo..hi.max(lo)]
    }

    /// Earliest and latest timestamps, if any.
    pub fn time_span(&self) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        if self.sorted {
            Some((self.records.first()?.timestamp, self.records.last()?.timestamp))
        } else {
            let min = self.records.iter().map(|r| r.timestamp).min()?;
            let max = self.records.iter().map(|r| r.timestamp).max()?;
            Some((min, max))
        }
    }

    /// Persist as `<dir>/records.csv` (NOAA layout) plus ingest statistics.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RECORDS_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.write_csv(BufWriter::new(file)).map_err(|e| match e {
            Error::Csv(c) => Error::io(&path, c.into()),
            other => other,
        })?;
        let stats_path = dir.join(STATS_FILE);
        let text = serde_json::to_string_pretty(&self.stats)?;
        fs::write(&stats_path, text).map_err(|e| Error::io(&stats_path, e))?;
        Ok(())
    }

    /// Records as NOAA-layout CSV, header first.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(NOAA_COLUMNS)?;
        for r in &self.records {
            w.write_record(to_noaa_row(r))?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    /// Load a store written by [`RecordStore::save`].
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(RECORDS_FILE);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut store = RecordStore::new();
        let report = store.ingest_named(BufReader::new(file), &path.display().to_string())?;
        if report.stats.rejected > 0 {
            return Err(Error::invalid(format!(
                "{}: {} corrupt rows",
                path.display(),
                report.stats.rejected
            )));
        }
        let stats_path = dir.join(STATS_FILE);
        store.stats = match fs::read_to_string(&stats_path) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(_) => report.stats,
        };
        Ok(store)
    }

    pub fn records_path(dir: &Path) -> PathBuf {
        dir.join(RECORDS_FILE)
    }
}

fn sort_key(r: &AisRecord) -> (i64, Mmsi) {
    (r.timestamp.timestamp(), r.mmsi)
}

fn parse_shard<R: Read>(source: R, name: &str, codes: &CodeTables) -> Result<Shard> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let schema = match reader.headers() {
        Ok(h) if h.is_empty() => {
            return Ok(Shard {
                records: vec![],
                report: IngestReport::default(),
            })
        }
        Ok(h) => Schema::from_header(h.iter())?,
        Err(e) => return Err(e.into()),
    };

    let mut seen: HashSet<(Mmsi, i64)> = HashSet::new();
    let mut records = Vec::new();
    let mut report = IngestReport::default();
    let mut row = csv::StringRecord::new();
    loop {
        let row_no = report.stats.rows + 1;
        let outcome = match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => parse_row(&row, &schema, codes),
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => Err(e.into()),
        };
        report.stats.rows += 1;
        match outcome {
            Ok(rec) => {
                if seen.insert((rec.mmsi, rec.timestamp.timestamp())) {
                    records.push(rec);
                } else {
                    report.stats.deduplicated += 1;
                }
            }
            Err(e) => {
                log::debug!("{name} row {row_no}: {e}");
                report.stats.rejected += 1;
                if report.rejections.len() < MAX_KEPT_REJECTIONS {
                    report.rejections.push(Rejection {
                        source: name.to_string(),
                        row: row_no,
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    if report.stats.rejected > 0 {
        log::warn!("{name}: rejected {} of {} rows", report.stats.rejected, report.stats.rows);
    }
    Ok(Shard { records, report })
}
