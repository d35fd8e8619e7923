use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::judge::{judge, EvalOutcome, Verdict};
use super::JudgeConfig;
use crate::error::{Error, Result};
use crate::oracle::Category;
use crate::qa::QaPair;
use crate::sampler::Generator;
use crate::stats::wilson_interval;

/// A model response keyed to a dataset line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub pair_id: usize,
    pub response_text: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub n: usize,
    pub correct: usize,
    /// `None` when `n == 0`.
    pub accuracy: Option<f64>,
}

impl Score {
    fn add(&mut self, correct: bool) {
        self.n += 1;
        self.correct += correct as usize;
        self.accuracy = Some(self.correct as f64 / self.n as f64);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Score,
    /// All six categories, including empty ones.
    pub per_category: BTreeMap<Category, Score>,
    pub per_generator: BTreeMap<Generator, Score>,
    pub missing_responses: usize,
    pub avg_response_chars: Option<f64>,
    pub avg_reference_chars: Option<f64>,
    /// Mean response length over mean reference length.
    pub verbosity_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual: Option<ManualSummary>,
}

/// Judge every pair against its response. Outcomes come back in pair-id order.
pub fn evaluate(
    pairs: &[(usize, QaPair)],
    responses: &[ResponseRecord],
    cfg: &JudgeConfig,
) -> Result<(EvalReport, Vec<EvalOutcome>)> {
    let mut by_id: BTreeMap<usize, &str> = BTreeMap::new();
    for r in responses {
        if by_id.insert(r.pair_id, &r.response_text).is_some() {
            return Err(Error::invalid(format!("duplicate response for pair {}", r.pair_id)));
        }
    }
    let mut ordered: Vec<&(usize, QaPair)> = pairs.iter().collect();
    ordered.sort_by_key(|(id, _)| *id);
    if let Some(w) = ordered.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid(format!("duplicate pair id {}", w[0].0)));
    }

    let outcomes: Vec<EvalOutcome> = ordered
        .par_iter()
        .map(|(id, pair)| match by_id.get(id) {
            Some(text) => EvalOutcome {
                pair_id: *id,
                ..judge(text, &pair.answer, cfg)
            },
            None => EvalOutcome {
                pair_id: *id,
                extracted_reference: vec![],
                extracted_response: vec![],
                matched: vec![],
                verdict: Verdict::Incorrect,
                reasons: vec!["missing response".into()],
            },
        })
        .collect();

    let mut overall = Score::default();
    let mut per_category: BTreeMap<Category, Score> =
        Category::ALL.into_iter().map(|c| (c, Score::default())).collect();
    let mut per_generator = BTreeMap::new();
    let mut missing = 0;
    let (mut resp_chars, mut resp_n, mut ref_chars) = (0usize, 0usize, 0usize);
    for ((id, pair), o) in ordered.iter().zip(&outcomes) {
        let ok = o.verdict == Verdict::Correct;
        overall.add(ok);
        per_category.get_mut(&pair.category).expect("all categories").add(ok);
        per_generator.entry(pair.generator).or_insert_with(Score::default).add(ok);
        ref_chars += pair.answer.chars().count();
        match by_id.get(id) {
            Some(text) => {
                resp_chars += text.chars().count();
                resp_n += 1;
            }
            None => missing += 1,
        }
    }
    let avg_response_chars = (resp_n > 0).then(|| resp_chars as f64 / resp_n as f64);
    let avg_reference_chars = (!ordered.is_empty()).then(|| ref_chars as f64 / ordered.len() as f64);
    let verbosity_ratio = match (avg_response_chars, avg_reference_chars) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    Ok((
        EvalReport {
            overall,
            per_category,
            per_generator,
            missing_responses: missing,
            avg_response_chars,
            avg_reference_chars,
            verbosity_ratio,
            manual: None,
        },
        outcomes,
    ))
}

/// Flat CSV for plotting: one row per category, per generator, and overall.
pub fn report_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "name", "n", "correct", "accuracy", "ci_low", "ci_high"])?;
    let mut row = |group: &str, name: &str, s: &Score| -> Result<()> {
        let (acc, lo, hi) = match s.accuracy {
            Some(a) => {
                let ci = wilson_interval(s.correct as u64, s.n as u64, 0.95)?;
                (format!("{a:.6}"), format!("{:.6}", ci.low), format!("{:.6}", ci.high))
            }
            None => Default::default(),
        };
        w.write_record([group, name, &s.n.to_string(), &s.correct.to_string(), &acc, &lo, &hi])?;
        Ok(())
    };
    for (c, s) in &report.per_category {
        row("category", c.as_str(), s)?;
    }
    for (g, s) in &report.per_generator {
        row("generator", g.as_str(), s)?;
    }
    row("overall", "all", &report.overall)?;
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// A human judgment of one response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualLabel {
    pub pair_id: usize,
    pub correct: bool,
    pub shows_reasoning: bool,
    pub calc_error_despite_correct: bool,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualSummary {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub shows_reasoning_rate: f64,
    pub calc_error_rate: f64,
}

pub fn record_manual(labels: &[ManualLabel]) -> Result<ManualSummary> {
    if labels.is_empty() {
        return Err(Error::invalid("manual summary needs at least one label"));
    }
    let mut seen = BTreeSet::new();
    for l in labels {
        if !seen.insert(l.pair_id) {
            return Err(Error::DuplicateLabel(l.pair_id));
        }
    }
    let n = labels.len();
    let count = |f: fn(&ManualLabel) -> bool| labels.iter().filter(|l| f(l)).count();
    let correct = count(|l| l.correct);
    Ok(ManualSummary {
        n,
        correct,
        accuracy: correct as f64 / n as f64,
        shows_reasoning_rate: count(|l| l.shows_reasoning) as f64 / n as f64,
        calc_error_rate: count(|l| l.calc_error_despite_correct) as f64 / n as f64,
    })
}

fn parse_bool(field: &'static str, s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" => Ok(true),
        "false" | "0" | "no" | "n" | "" => Ok(false),
        other => Err(Error::field(field, format!("not a boolean: {other:?}"))),
    }
}

/// Manual labels from CSV with columns `pair_id,correct,shows_reasoning,calc_error,notes`.
pub fn read_manual_csv(reader: impl Read) -> Result<Vec<ManualLabel>> {
    #[derive(Deserialize)]
    struct Row {
        pair_id: usize,
        correct: String,
        shows_reasoning: String,
        calc_error: String,
        #[serde(default)]
        notes: String,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row?;
        out.push(ManualLabel {
            pair_id: row.pair_id,
            correct: parse_bool("correct", &row.correct)?,
            shows_reasoning: parse_bool("shows_reasoning", &row.shows_reasoning)?,
            calc_error_despite_correct: parse_bool("calc_error", &row.calc_error)?,
            notes: row.notes,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qa::{OracleCheck, QaPair, Style};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn pair(context_id: usize, category: Category, answer: &str) -> QaPair {
        QaPair {
            context_id,
            slot_index: 0,
            question: "q".into(),
            answer: answer.into(),
            category,
            style: Style::Conversational,
            generator: crate::sampler::assign_generator(context_id),
            oracle_check: OracleCheck::Passed,
            split: None,
        }
    }

    fn cfg() -> JudgeConfig {
        crate::config::PipelineConfig::builtin().evaluation.clone()
    }

    fn sample(n: usize) -> Vec<(usize, QaPair)> {
        (0..n)
            .map(|i| (i, pair(i / 3, Category::ALL[i % 6], &format!("{} vessels at {} knots", i + 1, 2 * i + 3))))
            .collect()
    }

    #[test]
    fn identical_responses_score_one() {
        let pairs = sample(30);
        let responses: Vec<_> = pairs
            .iter()
            .map(|(id, p)| ResponseRecord {
                pair_id: *id,
                response_text: p.answer.clone(),
            })
            .collect();
        let (r, _) = evaluate(&pairs, &responses, &cfg()).unwrap();
        assert_eq!(r.overall.accuracy, Some(1.0));
        assert_eq!(r.per_category.values().map(|s| s.n).sum::<usize>(), 30);
        assert_eq!(r.verbosity_ratio, Some(1.0));
    }

    #[test]
    fn accuracy_is_correct_over_n() {
        let pairs: Vec<_> = (0..500).map(|i| (i, pair(i, Category::Count, "10 vessels"))).collect();
        let responses: Vec<_> = (0..500)
            .map(|i| ResponseRecord {
                pair_id: i,
                response_text: if i < 354 { "10 vessels".into() } else { "20 vessels".into() },
            })
            .collect();
        let (r, _) = evaluate(&pairs, &responses, &cfg()).unwrap();
        assert_eq!(r.overall.correct, 354);
        assert!((r.overall.accuracy.unwrap() - 0.708).abs() < 1e-12);
    }

    #[test]
    fn empty_input_flags_undefined_accuracy() {
        let (r, outcomes) = evaluate(&[], &[], &cfg()).unwrap();
        assert!(outcomes.is_empty());
        assert_eq!(r.overall.accuracy, None);
        assert_eq!(r.per_category.len(), 6);
        assert!(r.per_category.values().all(|s| s.n == 0 && s.accuracy.is_none()));
        assert!(report_csv(&r).unwrap().contains("category,trajectory,0,0,,,"));
    }

    #[test]
    fn missing_response_counts_incorrect() {
        let pairs = sample(3);
        let responses = vec![ResponseRecord {
            pair_id: 0,
            response_text: pairs[0].1.answer.clone(),
        }];
        let (r, outcomes) = evaluate(&pairs, &responses, &cfg()).unwrap();
        assert_eq!((r.overall.correct, r.missing_responses), (1, 2));
        assert_eq!(outcomes[2].reasons, vec!["missing response".to_string()]);
    }

    #[test]
    fn permutation_invariant() {
        let pairs = sample(60);
        let responses: Vec<_> = pairs
            .iter()
            .map(|(id, p)| ResponseRecord {
                pair_id: *id,
                response_text: if id % 4 == 0 { "nothing".into() } else { format!("{} extra words 7", p.answer) },
            })
            .collect();
        let (base, base_out) = evaluate(&pairs, &responses, &cfg()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let mut p = pairs.clone();
            let mut r = responses.clone();
            p.shuffle(&mut rng);
            r.shuffle(&mut rng);
            let (rep, out) = evaluate(&p, &r, &cfg()).unwrap();
            assert_eq!(rep, base);
            assert_eq!(out, base_out);
        }
    }

    #[test]
    fn manual_summary() {
        let labels: Vec<_> = (0..100)
            .map(|i| ManualLabel {
                pair_id: i,
                correct: i < 75,
                shows_reasoning: i < 98,
                calc_error_despite_correct: false,
                notes: String::new(),
            })
            .collect();
        let s = record_manual(&labels).unwrap();
        assert_eq!(s.accuracy, 0.75);
        assert_eq!(s.shows_reasoning_rate, 0.98);
        assert!(record_manual(&[]).is_err());
        let mut dup = labels.clone();
        dup.push(labels[3].clone());
        assert!(matches!(record_manual(&dup), Err(Error::DuplicateLabel(3))));
    }

    #[test]
    fn manual_csv() {
        let text = "pair_id,correct,shows_reasoning,calc_error,notes\n0,true,1,no,fine\n1,false,yes,0,\"off, by one\"\n";
        let labels = read_manual_csv(text.as_bytes()).unwrap();
        assert_eq!(labels.len(), 2);
        assert!(labels[0].correct && labels[0].shows_reasoning && !labels[0].calc_error_despite_correct);
        assert_eq!(labels[1].notes, "off, by one");
        assert!(read_manual_csv("pair_id,correct,shows_reasoning,calc_error,notes\n0,maybe,1,0,\n".as_bytes()).is_err());
    }
}
