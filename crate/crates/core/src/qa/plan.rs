use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{QuestionSpec, Style, QUESTIONS_PER_CONTEXT};
use crate::ais::{StatusCategory, VesselCategory};
use crate::error::{Error, Result};
use crate::oracle::{answer, Category, OracleAnswer, OracleConfig, OracleQuery, VesselFilter};
use crate::sampler::{context_seed, VesselContext};

const BUILTIN: &str = include_str!("../../config/question_templates.toml");
const PARAM_STREAM: u64 = 0x5155_4553_5449_4f4e;
const HORIZONS_MIN: [u32; 6] = [10, 15, 20, 30, 45, 60];

/// Wording for every (category, style) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionTemplates {
    table: BTreeMap<(Category, Style), String>,
}

impl QuestionTemplates {
    pub fn parse(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            version: u32,
            #[serde(flatten)]
            categories: BTreeMap<String, BTreeMap<String, String>>,
        }
        let raw: Raw = toml::from_str(text).map_err(|e| Error::Config(format!("templates: {e}")))?;
        if raw.version != 1 {
            return Err(Error::Config(format!("templates: unsupported version {}", raw.version)));
        }
        let mut table = BTreeMap::new();
        for c in Category::ALL {
            for s in Style::ALL {
                let t = raw
                    .categories
                    .get(c.as_str())
                    .and_then(|m| m.get(s.as_str()))
                    .ok_or_else(|| Error::Config(format!("templates: missing {c}.{s}")))?;
                table.insert((c, s), t.clone());
            }
        }
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn builtin() -> &'static QuestionTemplates {
        static T: OnceLock<QuestionTemplates> = OnceLock::new();
        T.get_or_init(|| QuestionTemplates::parse(BUILTIN).expect("bundled question templates"))
    }

    pub fn get(&self, c: Category, s: Style) -> &str {
        &self.table[&(c, s)]
    }
}

/// Twelve slots in category order; one uniform style draw per slot.
pub fn question_plan(context: &VesselContext, seed: u64) -> Vec<QuestionSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(context_seed(seed, context.context_id));
    let mut specs = Vec::with_capacity(QUESTIONS_PER_CONTEXT);
    for c in Category::ALL {
        for _ in 0..c.questions_per_context() {
            specs.push(QuestionSpec {
                category: c,
                style: Style::ALL[rng.random_range(0..Style::ALL.len())],
                slot_index: specs.len(),
            });
        }
    }
    specs
}

/// A question bound to concrete parameters and, where computable, its oracle answer.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedQuestion {
    pub spec: QuestionSpec,
    pub text: String,
    pub query: Option<OracleQuery>,
    pub oracle: Option<OracleAnswer>,
}

fn plural(c: VesselCategory) -> String {
    match c {
        VesselCategory::Other => "vessels of other types".into(),
        VesselCategory::Unknown => "vessels of unknown type".into(),
        VesselCategory::Fishing => "fishing vessels".into(),
        VesselCategory::Military => "military vessels".into(),
        _ => format!("{c} vessels"),
    }
}

fn status_phrase(s: StatusCategory) -> String {
    match s {
        StatusCategory::Underway => "vessels underway".into(),
        StatusCategory::Unknown => "vessels with unknown status".into(),
        _ => format!("{s} vessels"),
    }
}

/// Pick parameters for each spec and compute the oracle answer.
pub fn instantiate_questions(
    context: &VesselContext,
    specs: &[QuestionSpec],
    seed: u64,
    templates: &QuestionTemplates,
    oracle_cfg: &OracleConfig,
) -> Vec<PlannedQuestion> {
    let mut rng = ChaCha8Rng::seed_from_u64(context_seed(seed ^ PARAM_STREAM, context.context_id));
    let projectable: Vec<_> = context
        .vessels
        .iter()
        .filter(|v| v.records.last().is_some_and(|r| r.sog.is_some() && r.cog.is_some()))
        .map(|v| v.mmsi)
        .collect();
    let movable: Vec<_> = context
        .vessels
        .iter()
        .filter(|v| v.records.len() >= 2 && v.records.iter().all(|r| r.sog.is_some() && r.cog.is_some()))
        .map(|v| v.mmsi)
        .collect();
    let categories: Vec<VesselCategory> = {
        let mut seen: Vec<_> = context.records().map(|r| r.vessel_category).collect();
        seen.sort();
        seen.dedup();
        seen
    };
    let statuses: Vec<StatusCategory> = {
        let mut seen: Vec<_> = context.records().map(|r| r.status_category).collect();
        seen.sort();
        seen.dedup();
        seen
    };

    specs
        .iter()
        .map(|spec| {
            let template = templates.get(spec.category, spec.style);
            let (query, text) = match spec.category {
                Category::Trajectory => match projectable.choose(&mut rng) {
                    Some(&mmsi) => {
                        let minutes = HORIZONS_MIN[rng.random_range(0..HORIZONS_MIN.len())];
                        let text = template
                            .replace("{mmsi}", &mmsi.to_string())
                            .replace("{minutes}", &minutes.to_string());
                        (Some(OracleQuery::Trajectory { mmsi, minutes_ahead: minutes }), text)
                    }
                    None => (None, template.replace("{mmsi}", "(none)").replace("{minutes}", "30")),
                },
                Category::Movement => match movable.choose(&mut rng) {
                    Some(&mmsi) => (
                        Some(OracleQuery::Movement { mmsi }),
                        template.replace("{mmsi}", &mmsi.to_string()),
                    ),
                    None => (None, template.replace("{mmsi}", "(none)")),
                },
                Category::Count => {
                    let (filter, subject) = match rng.random_range(0..3) {
                        0 if !categories.is_empty() => {
                            let c = *categories.choose(&mut rng).expect("non-empty");
                            (VesselFilter { category: Some(c), ..Default::default() }, plural(c))
                        }
                        1 if !statuses.is_empty() => {
                            let s = *statuses.choose(&mut rng).expect("non-empty");
                            (VesselFilter { status: Some(s), ..Default::default() }, status_phrase(s))
                        }
                        _ => (VesselFilter::default(), "vessels".to_string()),
                    };
                    (Some(OracleQuery::Count { filter }), template.replace("{subject}", &subject))
                }
                Category::DataAnalysis => {
                    let scoped = rng.random_bool(0.5) && !categories.is_empty();
                    let category = scoped.then(|| *categories.choose(&mut rng).expect("non-empty"));
                    let subject = category.map(plural).unwrap_or_else(|| "all vessels".into());
                    (Some(OracleQuery::DataAnalysis { category }), template.replace("{subject}", &subject))
                }
                Category::Pattern => (Some(OracleQuery::Pattern), template.to_string()),
                Category::Anomaly => (Some(OracleQuery::Anomaly), template.to_string()),
            };
            let oracle = query.as_ref().and_then(|q| answer(context, q, oracle_cfg).ok());
            PlannedQuestion {
                spec: *spec,
                text,
                query,
                oracle,
            }
        })
        .collect()
}

/// Plan and instantiate the twelve questions of a context.
pub fn plan_context(
    context: &VesselContext,
    seed: u64,
    templates: &QuestionTemplates,
    oracle_cfg: &OracleConfig,
) -> Vec<PlannedQuestion> {
    let specs = question_plan(context, seed);
    instantiate_questions(context, &specs, seed, templates, oracle_cfg)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use crate::fixture::fixture_store;
    use crate::sampler::sample_contexts;

    pub(crate) fn fixture_contexts() -> &'static [VesselContext] {
        static C: OnceLock<Vec<VesselContext>> = OnceLock::new();
        C.get_or_init(|| {
            let cfg = PipelineConfig::builtin();
            sample_contexts(&fixture_store(), &cfg.geography, &cfg.sampling, 4, 1).unwrap().contexts
        })
    }

    #[test]
    fn category_multiset_is_fixed() {
        let ctx = &fixture_contexts()[0];
        for seed in 0..50 {
            let plan = question_plan(ctx, seed);
            assert_eq!(plan.len(), 12);
            let mut counts = BTreeMap::new();
            for (i, s) in plan.iter().enumerate() {
                assert_eq!(s.slot_index, i);
                *counts.entry(s.category).or_insert(0) += 1;
            }
            let mut sizes: Vec<_> = counts.values().copied().collect();
            sizes.sort_unstable_by(|a, b| b.cmp(a));
            assert_eq!(sizes, [3, 2, 2, 2, 2, 1]);
            assert_eq!(counts[&Category::Trajectory], 3);
            assert_eq!(counts[&Category::Anomaly], 1);
        }
        assert_eq!(question_plan(ctx, 9), question_plan(ctx, 9));
    }

    #[test]
    fn styles_are_uniform() {
        let ctx = &fixture_contexts()[0];
        let mut counts = BTreeMap::new();
        for seed in 0..10_000 {
            for s in question_plan(ctx, seed) {
                *counts.entry(s.style).or_insert(0usize) += 1;
            }
        }
        let total = 120_000.0;
        assert_eq!(counts.len(), 5);
        for (style, n) in counts {
            let share = n as f64 / total;
            assert!((share - 0.2).abs() <= 0.02, "{style}: {share}");
        }
    }

    #[test]
    fn every_template_is_present_and_filled() {
        let t = QuestionTemplates::builtin();
        let oc = &PipelineConfig::builtin().oracle;
        for ctx in fixture_contexts() {
            let planned = plan_context(ctx, 3, t, oc);
            for p in &planned {
                assert!(!p.text.contains('{'), "unfilled: {}", p.text);
                assert!(p.query.is_some(), "{:?} has no oracle query", p.spec);
                assert!(p.oracle.is_some(), "{:?} has no oracle answer", p.spec);
            }
            assert_eq!(planned, plan_context(ctx, 3, t, oc));
        }
    }

    #[test]
    fn template_file_errors() {
        assert!(matches!(QuestionTemplates::parse("version = 2"), Err(Error::Config(_))));
        let err = QuestionTemplates::parse("version = 1\n[count]\ninvestigative = \"x\"\n").unwrap_err();
        assert!(err.to_string().contains("missing"), "{err}");
    }
}
