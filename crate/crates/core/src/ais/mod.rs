//! AIS record parsing, normalization and storage.

pub mod codes;
pub mod parse;
pub mod record;
pub mod store;

pub use codes::{normalize_status, normalize_vessel_type, CodeTables, StatusCategory, VesselCategory};
pub use parse::{parse_csv_record, Schema, NOAA_COLUMNS};
pub use record::{AisRecord, Mmsi, TransceiverClass, VesselLine};
pub use store::{IngestReport, IngestStats, RecordStore, TimeWindow};
