//! Query service: rule-based parsing, retrieval, question-first prompts, streamed answers.

mod query;
mod server;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use query::{parse_query, QueryConstraints};
pub use server::{router, serve, AppState, Chunk};

use crate::ais::{AisRecord, Mmsi, RecordStore, TimeWindow, VesselLine};
use crate::error::{Error, Result};
use crate::geo::BoundingBox;
use crate::qa::{assemble_prompt, ChatClient, ChatRequest, PromptQuestion};
use crate::sampler::{select_capped, AreaType, Geography, Region, Stratum, StratumCell, VesselContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub inference_endpoint: String,
    /// Environment variable holding the inference API key.
    pub api_key_env: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    /// Vessels sent to inference per query, at most.
    pub max_vessels: usize,
    pub selection_seed: u64,
}

/// An assembled prompt and what went into it.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub prompt: String,
    pub context: VesselContext,
    /// Vessels matching the constraints before the cap.
    pub matched_vessels: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Retrieval {
    NoData,
    Ready(Box<Assembled>),
}

fn region_of(geo: &Geography, lat: f64, lon: f64) -> Option<Region> {
    geo.regions.iter().find(|d| d.bbox().contains(lat, lon)).map(|d| d.name)
}

/// Filter the store by the constraints, cap the vessel count and build the prompt.
pub fn retrieve_and_assemble(
    constraints: &QueryConstraints,
    store: &RecordStore,
    geo: &Geography,
    cfg: &ServiceConfig,
) -> Result<Retrieval> {
    let window = constraints.time_window.unwrap_or_else(TimeWindow::unbounded);
    let region_box = constraints.region.map(|r| geo.region_box(r));
    let bbox = constraints.bbox.unwrap_or_else(BoundingBox::world);
    let mut by_vessel: BTreeMap<Mmsi, Vec<AisRecord>> = BTreeMap::new();
    for r in store.query(&window, &bbox) {
        if region_box.is_some_and(|b| !b.contains(r.lat, r.lon)) || !constraints.filter.matches(r) {
            continue;
        }
        by_vessel.entry(r.mmsi).or_default().push(r.projected());
    }
    if by_vessel.is_empty() {
        return Ok(Retrieval::NoData);
    }
    let matched = by_vessel.len();
    let kept = select_capped(by_vessel.into_values().collect(), cfg.max_vessels, cfg.selection_seed);
    let records: Vec<AisRecord> = kept.into_iter().flatten().collect();

    let first = &records[0];
    let region = constraints
        .region
        .or_else(|| region_of(geo, first.lat, first.lon))
        .unwrap_or(Region::EastCoast);
    let start = records.iter().map(|r| r.timestamp).min().expect("non-empty");
    let end = records.iter().map(|r| r.timestamp).max().expect("non-empty");
    let area_type = if constraints.near_port.is_some() { AreaType::Port } else { geo.area_type(first.lat, first.lon) };
    let cell = StratumCell {
        region,
        area_type,
        time_bucket: geo.time_bucket(region, start),
        season: geo.season(region, start),
    };
    let window = constraints
        .time_window
        .unwrap_or(TimeWindow::new(start, end + chrono::Duration::seconds(1))?);
    let mut context = VesselContext::from_records(0, Stratum::new(cell, geo.density_tier(matched)), window, records);
    context.qualifying_vessels = matched;

    let truncated = matched > context.vessel_count();
    let mut prompt = assemble_prompt(
        &context,
        &[PromptQuestion {
            number: 1,
            category: None,
            text: constraints.raw_question.clone(),
        }],
    )?;
    if truncated {
        let note = format!(
            "Note: {matched} vessels matched; {} were selected for this prompt.\n",
            context.vessel_count()
        );
        let at = prompt.find("\nQuestions:").map_or(0, |i| i + 1);
        prompt.insert_str(at, &note);
    }
    Ok(Retrieval::Ready(Box::new(Assembled {
        prompt,
        context,
        matched_vessels: matched,
        truncated,
    })))
}

/// Run one query end to end without streaming: parse, retrieve, infer.
pub fn answer_query(
    question: &str,
    store: &RecordStore,
    geo: &Geography,
    cfg: &ServiceConfig,
    client: &dyn ChatClient,
) -> Result<Option<(Assembled, String)>> {
    let anchor = store.time_span().map(|(_, end)| end).unwrap_or_else(chrono::Utc::now);
    let constraints = parse_query(question, geo, anchor)?;
    match retrieve_and_assemble(&constraints, store, geo, cfg)? {
        Retrieval::NoData => Ok(None),
        Retrieval::Ready(a) => {
            let reply = client.complete(&ChatRequest {
                model: cfg.model.clone(),
                temperature: cfg.temperature,
                prompt: a.prompt.clone(),
            })?;
            Ok(Some((*a, strip_marker(&reply))))
        }
    }
}

/// Drop a leading "A1:" marker if the model used the prompt's answer format.
pub fn strip_marker(reply: &str) -> String {
    crate::qa::parse_answers(reply).remove(&1).unwrap_or_else(|| reply.trim().to_string())
}

/// Mock inference for the service: counts the distinct vessels in the prompt.
pub struct VesselCountClient;

impl ChatClient for VesselCountClient {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let vessels: BTreeSet<Mmsi> = request
            .prompt
            .lines()
            .filter(|l| l.starts_with('{'))
            .map(|l| VesselLine::parse(l).map(|v| v.mmsi))
            .collect::<Result<_>>()
            .map_err(|e| Error::Upstream(format!("mock inference: {e}")))?;
        Ok(format!("A1: {} vessels match.", vessels.len()))
    }
}
