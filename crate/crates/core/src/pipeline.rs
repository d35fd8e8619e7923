//! Stage orchestration: each stage reads the previous stage's files under the work dir.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::ais::{IngestReport, RecordStore};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, report_csv, EvalReport, ResponseRecord};
use crate::metrics::{bleu, mean_rouge_l, tokenize, BleuOptions, BleuResult, RougeL};
use crate::qa::{
    emit_jsonl, generate_all, plan_context, read_dataset, respond, split_dataset, AnswerKey, ChatClient,
    HttpChatClient, Manifest, ModelSpec, OracleCheck, OracleEchoClient, PerturbingClient, PlannedQuestion, QaPair,
    QuestionTemplates, MANIFEST_FILE, TRAIN_FILE, VALIDATION_FILE,
};
use crate::sampler::{load_contexts, sample_contexts, VesselContext};
use crate::stats::{cost_table, wilson_interval, ConfidenceInterval};

pub const STAGE_FILE: &str = "stage.json";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const OUTCOMES_FILE: &str = "eval_outcomes.jsonl";
pub const ACCURACY_CSV: &str = "category_accuracy.csv";
pub const COST_CSV: &str = "cost.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics_vs_accuracy.csv";
pub const STATS_FILE: &str = "stats.json";

/// Which chat backend a stage talks to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClientMode {
    Live,
    /// Replies with the known reference answer for each question.
    Mock,
    /// Like `Mock`, with every number scaled by (1 + epsilon).
    MockPerturbed(f64),
}

/// Per-stage record written next to the stage's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub config_hash: String,
    pub details: serde_json::Value,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stage_record(dir: &Path, stage: &str, cfg: &PipelineConfig, details: serde_json::Value) -> Result<()> {
    write_json(
        &dir.join(STAGE_FILE),
        &StageRecord {
            stage: stage.into(),
            config_hash: cfg.hash(),
            details,
        },
    )
}

fn require(path: &Path, stage: &'static str, requires: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingStage {
            stage,
            requires,
            path: path.to_path_buf(),
        })
    }
}

/// Create `dir` and delete the files in it that `owned` claims, so stale
/// output from an earlier run cannot leak into this one.
fn prepare_dir(dir: &Path, owned: impl Fn(&str) -> bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.file_name().and_then(|n| n.to_str()).is_some_and(&owned) {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

pub fn ingest(cfg: &PipelineConfig, inputs: &[PathBuf]) -> Result<IngestReport> {
    if inputs.is_empty() {
        return Err(Error::invalid("ingest needs at least one input CSV"));
    }
    let mut store = RecordStore::new();
    let report = store.ingest_files(inputs)?;
    let dir = cfg.store_dir();
    prepare_dir(&dir, |_| false)?;
    store.save(&dir)?;
    stage_record(&dir, "ingest", cfg, serde_json::to_value(&report.stats)?)?;
    info!("ingest: {} accepted, {} rejected", report.stats.accepted, report.stats.rejected);
    Ok(report)
}

pub fn open_store(cfg: &PipelineConfig, stage: &'static str) -> Result<RecordStore> {
    let dir = cfg.store_dir();
    require(&RecordStore::records_path(&dir), stage, "ingest")?;
    RecordStore::open(&dir)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSummary {
    pub contexts: usize,
    pub failures: Vec<(usize, String)>,
    pub coverage_warnings: Vec<String>,
}

pub fn sample(cfg: &PipelineConfig, target: Option<usize>, seed: Option<u64>) -> Result<SampleSummary> {
    let store = open_store(cfg, "sample")?;
    let target = target.unwrap_or(cfg.sampling.target_contexts);
    let out = sample_contexts(&store, &cfg.geography, &cfg.sampling, target, seed.unwrap_or(cfg.seeds.sample))?;
    let dir = cfg.contexts_dir();
    prepare_dir(&dir, |n| n.starts_with("context_") && n.ends_with(".json"))?;
    for c in &out.contexts {
        c.write_to_dir(&dir)?;
    }
    let summary = SampleSummary {
        contexts: out.contexts.len(),
        failures: out.failures,
        coverage_warnings: out.plan.coverage_warnings.clone(),
    };
    for w in &summary.coverage_warnings {
        warn!("sample: {w}");
    }
    stage_record(&dir, "sample", cfg, serde_json::to_value(&summary)?)?;
    Ok(summary)
}

pub fn read_contexts(cfg: &PipelineConfig, dir: Option<&Path>, stage: &'static str) -> Result<Vec<VesselContext>> {
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.contexts_dir());
    require(&dir.join(STAGE_FILE), stage, "sample")?;
    let contexts = load_contexts(&dir)?;
    if contexts.is_empty() {
        return Err(Error::invalid(format!("{}: no contexts", dir.display())));
    }
    Ok(contexts)
}

pub fn templates(cfg: &PipelineConfig) -> Result<QuestionTemplates> {
    match &cfg.generation.templates {
        Some(p) => QuestionTemplates::load(p),
        None => Ok(QuestionTemplates::builtin().clone()),
    }
}

/// Planned questions for every context, in context order.
pub fn plan_all(cfg: &PipelineConfig, contexts: &[VesselContext], seed: u64) -> Result<Vec<Vec<PlannedQuestion>>> {
    let t = templates(cfg)?;
    Ok(contexts.iter().map(|c| plan_context(c, seed, &t, &cfg.oracle)).collect())
}

/// Oracle narratives keyed by context and question number, for the echo mock.
pub fn oracle_answer_key(contexts: &[VesselContext], plans: &[Vec<PlannedQuestion>]) -> AnswerKey {
    let mut key = AnswerKey::default();
    for (c, plan) in contexts.iter().zip(plans) {
        for q in plan {
            if let Some(o) = &q.oracle {
                key.insert(c.context_id, q.spec.slot_index + 1, o.narrative.clone());
            }
        }
    }
    key
}

/// Reference answers keyed the way [`respond`] numbers questions.
pub fn dataset_answer_key(pairs: &[(usize, QaPair)]) -> AnswerKey {
    let mut key = AnswerKey::default();
    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    let mut sorted: Vec<&(usize, QaPair)> = pairs.iter().collect();
    sorted.sort_by_key(|(id, _)| *id);
    for (_, p) in sorted {
        let n = next.entry(p.context_id).or_insert(0);
        *n += 1;
        key.insert(p.context_id, *n, p.answer.clone());
    }
    key
}

fn make_client(mode: ClientMode, key: AnswerKey, endpoint: &str, key_env: &str, timeout_secs: u64) -> Box<dyn ChatClient> {
    match mode {
        ClientMode::Live => Box::new(HttpChatClient::from_env(endpoint, key_env, Duration::from_secs(timeout_secs))),
        ClientMode::Mock => Box::new(OracleEchoClient { key }),
        ClientMode::MockPerturbed(epsilon) => Box::new(PerturbingClient {
            inner: OracleEchoClient { key },
            epsilon,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateSummary {
    pub manifest: Manifest,
    pub pairs_generated: usize,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub context_errors: Vec<(usize, String)>,
    pub calls: usize,
}

pub struct GenerateOptions<'a> {
    pub contexts_dir: Option<&'a Path>,
    pub out_dir: Option<&'a Path>,
    pub client: ClientMode,
    pub concurrency: Option<usize>,
    pub seed: Option<u64>,
}

pub fn generate(cfg: &PipelineConfig, opts: &GenerateOptions) -> Result<GenerateSummary> {
    let contexts = read_contexts(cfg, opts.contexts_dir, "generate")?;
    let seed = opts.seed.unwrap_or(cfg.seeds.questions);
    let plans = plan_all(cfg, &contexts, seed)?;
    let mut gen_cfg = cfg.generation.clone();
    if let Some(k) = opts.concurrency {
        gen_cfg.concurrency = k;
    }
    gen_cfg.validate()?;
    let client = make_client(
        opts.client,
        oracle_answer_key(&contexts, &plans),
        &gen_cfg.endpoint,
        &gen_cfg.api_key_env,
        gen_cfg.timeout_secs,
    );
    let results = generate_all(&contexts, &plans, client.as_ref(), &gen_cfg, &cfg.evaluation)?;

    let mut pairs: Vec<QaPair> = Vec::new();
    let mut errors = Vec::new();
    let mut calls = 0;
    for r in results {
        calls += r.calls;
        if let Some(e) = r.error {
            errors.push((r.context_id, e));
        }
        pairs.extend(r.pairs);
    }
    let count = |c: OracleCheck| pairs.iter().filter(|p| p.oracle_check == c).count();
    let (passed, failed, skipped) = (count(OracleCheck::Passed), count(OracleCheck::Failed), count(OracleCheck::Skipped));

    let (mut accepted, rejected): (Vec<QaPair>, Vec<QaPair>) =
        pairs.into_iter().partition(|p| p.oracle_check == OracleCheck::Passed);
    let split = split_dataset(&mut accepted, gen_cfg.train_fraction, cfg.seeds.split)?;
    let pairs_generated = accepted.len() + rejected.len();
    accepted.extend(rejected);

    let out = opts.out_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.dataset_dir());
    prepare_dir(&out, |n| n == STAGE_FILE)?;
    let manifest = emit_jsonl(&accepted, &out, &cfg.hash(), split.exact, gen_cfg.keep_rejected)?;
    let summary = GenerateSummary {
        manifest,
        pairs_generated,
        passed,
        failed,
        skipped,
        context_errors: errors,
        calls,
    };
    stage_record(
        &out,
        "generate",
        cfg,
        serde_json::json!({"passed": passed, "failed": failed, "skipped": skipped, "context_errors": summary.context_errors}),
    )?;
    Ok(summary)
}

pub fn dataset_file(cfg: &PipelineConfig, split_name: &str) -> Result<PathBuf> {
    let file = match split_name {
        "train" => TRAIN_FILE,
        "validation" => VALIDATION_FILE,
        other => return Err(Error::invalid(format!("unknown split {other:?} (train or validation)"))),
    };
    Ok(cfg.dataset_dir().join(file))
}

fn require_dataset(path: &Path, stage: &'static str) -> Result<()> {
    require(path, stage, "generate")?;
    if let Some(dir) = path.parent() {
        require(&dir.join(MANIFEST_FILE), stage, "generate")?;
    }
    Ok(())
}

pub fn write_responses(path: &Path, responses: &[ResponseRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in responses {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_responses(path: &Path) -> Result<Vec<ResponseRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::invalid(format!("{}:{}: {e}", path.display(), i + 1)))?,
            );
        }
    }
    Ok(out)
}

/// Answer the dataset questions with a model (the system under evaluation).
pub fn respond_stage(
    cfg: &PipelineConfig,
    dataset: &Path,
    out: &Path,
    mode: ClientMode,
    model: &ModelSpec,
) -> Result<usize> {
    require_dataset(dataset, "respond")?;
    let pairs = read_dataset(dataset)?;
    let contexts: BTreeMap<usize, VesselContext> = read_contexts(cfg, None, "respond")?
        .into_iter()
        .map(|c| (c.context_id, c))
        .collect();
    let client = make_client(
        mode,
        dataset_answer_key(&pairs),
        &cfg.service.inference_endpoint,
        &cfg.service.api_key_env,
        cfg.service.timeout_secs,
    );
    let responses = respond(&contexts, &pairs, client.as_ref(), model, cfg.generation.max_retries)?;
    write_responses(out, &responses)?;
    Ok(responses.len())
}

pub fn evaluate_stage(cfg: &PipelineConfig, dataset: &Path, responses: &Path) -> Result<EvalReport> {
    require_dataset(dataset, "evaluate")?;
    require(responses, "evaluate", "respond")?;
    let pairs = read_dataset(dataset)?;
    if pairs.is_empty() {
        return Err(Error::invalid(format!("{}: no pairs to evaluate", dataset.display())));
    }
    let (report, outcomes) = evaluate(&pairs, &read_responses(responses)?, &cfg.evaluation)?;
    let dir = cfg.reports_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_json(&dir.join(EVAL_REPORT_FILE), &report)?;
    let path = dir.join(OUTCOMES_FILE);
    let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
    for o in &outcomes {
        serde_json::to_writer(&mut w, o)?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bleu: BleuResult,
    pub rouge_l: RougeL,
    pub pairs: usize,
}

/// BLEU and ROUGE-L of responses against dataset answers, paired by pair id.
pub fn metrics_stage(candidates: &Path, references: &Path, smooth: bool) -> Result<MetricsReport> {
    let refs: BTreeMap<usize, QaPair> = read_dataset(references)?.into_iter().collect();
    let mut c = Vec::new();
    let mut r = Vec::new();
    for resp in read_responses(candidates)? {
        let Some(p) = refs.get(&resp.pair_id) else {
            return Err(Error::invalid(format!("response for unknown pair {}", resp.pair_id)));
        };
        c.push(tokenize(&resp.response_text));
        r.push(tokenize(&p.answer));
    }
    Ok(MetricsReport {
        bleu: bleu(&c, &r, BleuOptions { smooth, ..Default::default() })?,
        rouge_l: mean_rouge_l(&c, &r)?,
        pairs: c.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsSummary {
    pub overall: Option<ConfidenceInterval>,
    pub per_category: BTreeMap<String, Option<ConfidenceInterval>>,
}

pub fn stats_summary(report: &EvalReport) -> Result<StatsSummary> {
    let ci = |s: &crate::eval::Score| -> Result<Option<ConfidenceInterval>> {
        if s.n == 0 {
            Ok(None)
        } else {
            wilson_interval(s.correct as u64, s.n as u64, 0.95).map(Some)
        }
    };
    Ok(StatsSummary {
        overall: ci(&report.overall)?,
        per_category: report
            .per_category
            .iter()
            .map(|(c, s)| Ok((c.to_string(), ci(s)?)))
            .collect::<Result<_>>()?,
    })
}

pub fn cost_csv(cfg: &PipelineConfig) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "annual_cost_usd", "ratio_to_cheapest"])?;
    for line in cost_table(&cfg.cost) {
        w.write_record([line.name, format!("{:.2}", line.annual_cost), format!("{:.2}", line.ratio_to_cheapest)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Figure data from the evaluation report (and metrics, when present).
pub fn report(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let dir = cfg.reports_dir();
    let eval_path = dir.join(EVAL_REPORT_FILE);
    require(&eval_path, "report", "evaluate")?;
    let text = fs::read_to_string(&eval_path).map_err(|e| Error::io(&eval_path, e))?;
    let eval: EvalReport = serde_json::from_str(&text)?;
    if eval.overall.n == 0 {
        return Err(Error::invalid("evaluation report is empty"));
    }
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    put(ACCURACY_CSV, report_csv(&eval)?)?;
    put(COST_CSV, cost_csv(cfg)?)?;
    put(STATS_FILE, serde_json::to_string_pretty(&stats_summary(&eval)?)? + "\n")?;
    let metrics_path = dir.join(METRICS_FILE);
    if metrics_path.exists() {
        let text = fs::read_to_string(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
        let m: MetricsReport = serde_json::from_str(&text)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "value"])?;
        for (k, v) in [
            ("bleu", m.bleu.score),
            ("rouge_l", m.rouge_l.f1),
            ("judged_accuracy", eval.overall.accuracy.unwrap_or(0.0)),
        ] {
            w.write_record([k.to_string(), format!("{v:.6}")])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        put(METRICS_CSV, String::from_utf8(bytes).expect("csv is utf-8"))?;
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub records: u64,
    pub contexts: usize,
    pub generate: GenerateSummary,
    pub responses: usize,
    pub accuracy: Option<f64>,
}

/// Every stage in order. `respond_mode` drives the model under evaluation.
pub fn run(cfg: &PipelineConfig, inputs: &[PathBuf], generate_mode: ClientMode, respond_mode: ClientMode) -> Result<RunSummary> {
    let ingest_report = ingest(cfg, inputs)?;
    let sampled = sample(cfg, None, None)?;
    let generated = generate(
        cfg,
        &GenerateOptions {
            contexts_dir: None,
            out_dir: None,
            client: generate_mode,
            concurrency: None,
            seed: None,
        },
    )?;
    let dataset = dataset_file(cfg, "validation")?;
    let model = ModelSpec {
        name: cfg.service.model.clone(),
        temperature: cfg.service.temperature,
    };
    let responses = respond_stage(cfg, &dataset, &cfg.responses_path(), respond_mode, &model)?;
    let eval = evaluate_stage(cfg, &dataset, &cfg.responses_path())?;
    let metrics = metrics_stage(&cfg.responses_path(), &dataset, true)?;
    write_json(&cfg.reports_dir().join(METRICS_FILE), &metrics)?;
    report(cfg)?;
    Ok(RunSummary {
        records: ingest_report.stats.accepted,
        contexts: sampled.contexts,
        generate: generated,
        responses,
        accuracy: eval.overall.accuracy,
    })
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}
