use std::collections::BTreeMap;

use log::{debug, warn};
use rayon::prelude::*;

use super::client::{ChatClient, ChatRequest};
use super::plan::PlannedQuestion;
use super::prompt::{assemble_prompt, parse_answers, PromptQuestion};
use super::{GenerationConfig, ModelSpec, OracleCheck, QaPair};
use crate::error::{Error, Result};
use crate::eval::{judge, JudgeConfig, ResponseRecord, Verdict};
use crate::sampler::VesselContext;

/// Result of generating one context; `error` is set when the client gave up.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextGeneration {
    pub context_id: usize,
    pub pairs: Vec<QaPair>,
    pub error: Option<String>,
    pub prompt_chars: usize,
    pub calls: usize,
}

fn call_with_retries(
    client: &dyn ChatClient,
    request: &ChatRequest,
    max_retries: u32,
    calls: &mut usize,
) -> Result<String> {
    let mut last = None;
    for attempt in 0..=max_retries {
        *calls += 1;
        match client.complete(request) {
            Ok(text) => return Ok(text),
            Err(e) => {
                debug!("attempt {} failed: {e}", attempt + 1);
                last = Some(e);
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

fn prompt_questions(planned: &[PlannedQuestion]) -> Vec<PromptQuestion> {
    planned
        .iter()
        .map(|p| PromptQuestion {
            number: p.spec.slot_index + 1,
            category: Some(p.spec.category),
            text: p.text.clone(),
        })
        .collect()
}

fn check(planned: &PlannedQuestion, answer: &str, judge_cfg: &JudgeConfig) -> OracleCheck {
    match &planned.oracle {
        None => OracleCheck::Skipped,
        Some(_) if answer.trim().is_empty() => OracleCheck::Failed,
        Some(o) => match judge(answer, &o.narrative, judge_cfg).verdict {
            Verdict::Correct => OracleCheck::Passed,
            Verdict::Incorrect => OracleCheck::Failed,
        },
    }
}

/// One call for all questions, then per-question regeneration of failures.
pub fn generate_for_context(
    context: &VesselContext,
    planned: &[PlannedQuestion],
    client: &dyn ChatClient,
    cfg: &GenerationConfig,
    judge_cfg: &JudgeConfig,
) -> Result<ContextGeneration> {
    let model = cfg.model(context.generator);
    let questions = prompt_questions(planned);
    let prompt = assemble_prompt(context, &questions)?;
    let mut out = ContextGeneration {
        context_id: context.context_id,
        pairs: Vec::new(),
        error: None,
        prompt_chars: prompt.len(),
        calls: 0,
    };
    let request = ChatRequest {
        model: model.name.clone(),
        temperature: model.temperature,
        prompt,
    };
    let reply = match call_with_retries(client, &request, cfg.max_retries, &mut out.calls) {
        Ok(r) => r,
        Err(e) => {
            warn!("context {}: {e}", context.context_id);
            out.error = Some(e.to_string());
            return Ok(out);
        }
    };
    let answers = parse_answers(&reply);

    for (p, q) in planned.iter().zip(&questions) {
        let mut answer = answers.get(&q.number).cloned().unwrap_or_default();
        let mut status = check(p, &answer, judge_cfg);
        let mut attempts = 0;
        while status == OracleCheck::Failed && attempts < cfg.max_retries && out.error.is_none() {
            attempts += 1;
            let single = ChatRequest {
                prompt: assemble_prompt(context, std::slice::from_ref(q))?,
                ..request.clone()
            };
            out.calls += 1;
            match client.complete(&single) {
                Ok(r) => {
                    answer = parse_answers(&r).remove(&q.number).unwrap_or_default();
                    status = check(p, &answer, judge_cfg);
                }
                Err(e) => out.error = Some(e.to_string()),
            }
        }
        out.pairs.push(QaPair {
            context_id: context.context_id,
            slot_index: p.spec.slot_index,
            question: p.text.clone(),
            answer,
            category: p.spec.category,
            style: p.spec.style,
            generator: context.generator,
            oracle_check: status,
            split: None,
        });
    }
    Ok(out)
}

/// Generate every context on a pool of `cfg.concurrency` workers; output is in
/// context order regardless of completion order.
pub fn generate_all(
    contexts: &[VesselContext],
    plans: &[Vec<PlannedQuestion>],
    client: &dyn ChatClient,
    cfg: &GenerationConfig,
    judge_cfg: &JudgeConfig,
) -> Result<Vec<ContextGeneration>> {
    if contexts.len() != plans.len() {
        return Err(Error::invalid("one question plan per context required"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let mut results = pool.install(|| {
        contexts
            .par_iter()
            .zip(plans.par_iter())
            .map(|(c, p)| generate_for_context(c, p, client, cfg, judge_cfg))
            .collect::<Result<Vec<_>>>()
    })?;
    results.sort_by_key(|r| r.context_id);
    Ok(results)
}

/// Ask a model the dataset questions, one call per context.
///
/// Questions are renumbered 1..k within each context in pair-id order.
pub fn respond(
    contexts: &BTreeMap<usize, VesselContext>,
    pairs: &[(usize, QaPair)],
    client: &dyn ChatClient,
    model: &ModelSpec,
    max_retries: u32,
) -> Result<Vec<ResponseRecord>> {
    let mut grouped: BTreeMap<usize, Vec<&(usize, QaPair)>> = BTreeMap::new();
    for p in pairs {
        grouped.entry(p.1.context_id).or_default().push(p);
    }
    let jobs: Vec<(usize, Vec<&(usize, QaPair)>)> = grouped.into_iter().collect();
    let per_context = jobs
        .par_iter()
        .map(|(ctx_id, group)| {
            let ctx = contexts
                .get(ctx_id)
                .ok_or_else(|| Error::invalid(format!("context {ctx_id} not found for dataset pairs")))?;
            let questions: Vec<PromptQuestion> = group
                .iter()
                .enumerate()
                .map(|(i, (_, p))| PromptQuestion {
                    number: i + 1,
                    category: None,
                    text: p.question.clone(),
                })
                .collect();
            let request = ChatRequest {
                model: model.name.clone(),
                temperature: model.temperature,
                prompt: assemble_prompt(ctx, &questions)?,
            };
            let mut calls = 0;
            let reply = call_with_retries(client, &request, max_retries, &mut calls)?;
            let mut answers = parse_answers(&reply);
            Ok(group
                .iter()
                .enumerate()
                .filter_map(|(i, (id, _))| {
                    answers.remove(&(i + 1)).map(|text| ResponseRecord {
                        pair_id: *id,
                        response_text: text,
                    })
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<ResponseRecord> = per_context.into_iter().flatten().collect();
    out.sort_by_key(|r| r.pair_id);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::config::PipelineConfig;
    use crate::qa::plan::tests::fixture_contexts;
    use crate::qa::{plan_context, AnswerKey, FailingClient, OracleEchoClient, PerturbingClient, QuestionTemplates};

    fn setup() -> (&'static VesselContext, Vec<PlannedQuestion>, AnswerKey) {
        let cfg = PipelineConfig::builtin();
        let ctx = &fixture_contexts()[1];
        let planned = plan_context(ctx, 5, QuestionTemplates::builtin(), &cfg.oracle);
        let mut key = AnswerKey::default();
        for p in &planned {
            key.insert(ctx.context_id, p.spec.slot_index + 1, &p.oracle.as_ref().unwrap().narrative);
        }
        (ctx, planned, key)
    }

    /// Wrong on the first full call, right on every single-question retry.
    struct WrongThenRight {
        inner: OracleEchoClient,
        calls: AtomicUsize,
    }

    impl ChatClient for WrongThenRight {
        fn complete(&self, request: &ChatRequest) -> Result<String> {
            let first = self.calls.fetch_add(1, Ordering::SeqCst) == 0;
            let reply = self.inner.complete(request)?;
            Ok(if first { crate::qa::perturb_numbers(&reply, 0.5) } else { reply })
        }
    }

    fn gen(client: &dyn ChatClient, retries: u32) -> ContextGeneration {
        let (ctx, planned, _) = setup();
        let mut cfg = PipelineConfig::builtin().generation.clone();
        cfg.max_retries = retries;
        generate_for_context(ctx, &planned, client, &cfg, &JudgeConfig::default()).unwrap()
    }

    #[test]
    fn echo_passes_everything() {
        let (_, _, key) = setup();
        let g = gen(&OracleEchoClient { key }, 2);
        assert_eq!(g.pairs.len(), 12);
        assert!(g.pairs.iter().all(|p| p.oracle_check == OracleCheck::Passed));
        assert_eq!(g.calls, 1);
        assert!(g.error.is_none());
    }

    #[test]
    fn perturbed_answers_fail_after_retries() {
        let (_, _, key) = setup();
        let client = PerturbingClient {
            inner: OracleEchoClient { key },
            epsilon: 0.15,
        };
        let g = gen(&client, 2);
        assert_eq!(g.pairs.len(), 12);
        assert!(g.pairs.iter().all(|p| p.oracle_check == OracleCheck::Failed));
        assert_eq!(g.calls, 1 + 12 * 2);
    }

    #[test]
    fn failed_questions_are_regenerated() {
        let (_, _, key) = setup();
        let client = WrongThenRight {
            inner: OracleEchoClient { key },
            calls: AtomicUsize::new(0),
        };
        let g = gen(&client, 1);
        assert!(g.pairs.iter().all(|p| p.oracle_check == OracleCheck::Passed));
        assert!(g.calls > 1);
    }

    #[test]
    fn transport_failure_is_a_context_error() {
        let g = gen(&FailingClient, 3);
        assert!(g.pairs.is_empty());
        assert_eq!(g.calls, 4);
        assert!(g.error.unwrap().contains("upstream"));
    }
}
