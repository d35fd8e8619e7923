use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use aisqa::config::PipelineConfig;
use aisqa::eval::{read_manual_csv, record_manual};
use aisqa::oracle::{answer, OracleQuery};
use aisqa::pipeline::{self, ClientMode, GenerateOptions};
use aisqa::qa::{ChatClient, HttpChatClient, ModelSpec};
use aisqa::sampler::VesselContext;
use aisqa::service::{AppState, VesselCountClient};
use aisqa::stats::{cost_ratio, cost_table, two_proportion_z, wilson_interval};
use aisqa::train::{emit_training_config, TrainingConfig};
use aisqa::{Error, Result};

#[derive(Parser)]
#[command(name = "aisqa", version, about = "AIS records to synthetic maritime Q&A, evaluation and serving")]
struct Cli {
    /// Pipeline config (TOML); the bundled defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override `paths.work_dir`.
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClientKind {
    Live,
    Mock,
    MockPerturbed,
}

#[derive(Args)]
struct ClientArgs {
    #[arg(long, value_enum, default_value = "live")]
    client: ClientKind,
    /// Relative perturbation for `mock-perturbed`.
    #[arg(long, default_value_t = 0.15)]
    epsilon: f64,
}

impl ClientArgs {
    fn mode(&self) -> ClientMode {
        match self.client {
            ClientKind::Live => ClientMode::Live,
            ClientKind::Mock => ClientMode::Mock,
            ClientKind::MockPerturbed => ClientMode::MockPerturbed(self.epsilon),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse CSV inputs into the record store.
    Ingest {
        /// Input CSVs; defaults to `paths.inputs`.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
    },
    /// Draw stratified contexts from the store.
    Sample {
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Oracle answers for one context file: the planned questions, or a single query.
    Oracle {
        #[arg(long)]
        context: PathBuf,
        /// Query as JSON, e.g. '{"kind":"count","filter":{"category":"cargo"}}'.
        #[arg(long)]
        query: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate the Q&A dataset from contexts.
    Generate {
        #[arg(long)]
        contexts: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        client: ClientArgs,
        #[arg(long)]
        concurrency: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Have a model answer dataset questions, writing responses JSONL.
    Respond {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        client: ClientArgs,
    },
    /// Judge responses against the dataset.
    Evaluate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        responses: Option<PathBuf>,
        /// Manual labels CSV (pair_id,correct,shows_reasoning,calc_error,notes).
        #[arg(long)]
        manual: Option<PathBuf>,
    },
    /// BLEU and ROUGE-L of responses against dataset answers.
    Metrics {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        references: PathBuf,
        /// Smooth zero n-gram counts.
        #[arg(long)]
        smooth: bool,
    },
    /// Proportion statistics.
    Stats {
        #[command(subcommand)]
        test: StatsCommand,
    },
    /// Annual cost of the configured scenarios.
    Cost {
        /// Two annual totals to compare directly instead of the scenarios.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        compare: Option<Vec<f64>>,
    },
    /// Training configuration output.
    TrainConfig {
        #[command(subcommand)]
        action: TrainConfigCommand,
    },
    /// Serve POST /query over the record store.
    Serve {
        /// Answer with a vessel count parsed from the prompt instead of calling inference.
        #[arg(long)]
        mock: bool,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Figure data (CSV/JSON) from evaluation outputs.
    Report,
    /// Every stage in order on the configured inputs.
    Run {
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Client for generation.
        #[arg(long, value_enum, default_value = "mock")]
        client: ClientKind,
        /// Client for the model under evaluation; defaults to the generation client.
        #[arg(long, value_enum)]
        respond_client: Option<ClientKind>,
        #[arg(long, default_value_t = 0.15)]
        epsilon: f64,
    },
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Two-proportion z-test.
    Ztest { x1: u64, n1: u64, x2: u64, n2: u64 },
    /// Wilson score interval.
    Wilson {
        successes: u64,
        n: u64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
}

#[derive(Subcommand)]
enum TrainConfigCommand {
    Emit {
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        // A closed pipe (`| head`) is not an error worth reporting.
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io { path: "stdout".into(), source: e }),
        _ => Ok(()),
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::builtin().clone(),
    };
    if let Some(w) = &cli.work_dir {
        cfg.paths.work_dir = w.clone();
    }
    Ok(cfg)
}

fn mode_of(kind: ClientKind, epsilon: f64) -> ClientMode {
    ClientArgs { client: kind, epsilon }.mode()
}

fn inputs_or_config(given: &[PathBuf], cfg: &PipelineConfig) -> Vec<PathBuf> {
    if given.is_empty() {
        cfg.paths.inputs.clone()
    } else {
        given.to_vec()
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest { inputs } => {
            let report = pipeline::ingest(&cfg, &inputs_or_config(&inputs, &cfg))?;
            print_json(&report.stats)
        }
        Command::Sample { target, seed } => print_json(&pipeline::sample(&cfg, target, seed)?),
        Command::Oracle { context, query, seed } => {
            let ctx = VesselContext::read(&context)?;
            match query {
                Some(q) => {
                    let q: OracleQuery = serde_json::from_str(&q)?;
                    print_json(&answer(&ctx, &q, &cfg.oracle)?)
                }
                None => {
                    let plan = pipeline::plan_all(&cfg, std::slice::from_ref(&ctx), seed.unwrap_or(cfg.seeds.questions))?;
                    let rows: Vec<_> = plan[0]
                        .iter()
                        .map(|p| {
                            serde_json::json!({
                                "slot": p.spec.slot_index,
                                "category": p.spec.category,
                                "style": p.spec.style,
                                "question": p.text,
                                "query": p.query,
                                "answer": p.oracle,
                            })
                        })
                        .collect();
                    print_json(&rows)
                }
            }
        }
        Command::Generate {
            contexts,
            out,
            client,
            concurrency,
            seed,
        } => {
            let summary = pipeline::generate(
                &cfg,
                &GenerateOptions {
                    contexts_dir: contexts.as_deref(),
                    out_dir: out.as_deref(),
                    client: client.mode(),
                    concurrency,
                    seed,
                },
            )?;
            let failed_all = summary.pairs_generated == 0 && !summary.context_errors.is_empty();
            print_json(&summary)?;
            if failed_all {
                return Err(Error::Upstream(format!("{} contexts failed", summary.context_errors.len())));
            }
            Ok(())
        }
        Command::Respond { dataset, out, client } => {
            let dataset = match dataset {
                Some(d) => d,
                None => pipeline::dataset_file(&cfg, "validation")?,
            };
            let out = out.unwrap_or_else(|| cfg.responses_path());
            let model = ModelSpec {
                name: cfg.service.model.clone(),
                temperature: cfg.service.temperature,
            };
            let n = pipeline::respond_stage(&cfg, &dataset, &out, client.mode(), &model)?;
            print_json(&serde_json::json!({"responses": n, "out": out}))
        }
        Command::Evaluate {
            dataset,
            responses,
            manual,
        } => {
            let dataset = match dataset {
                Some(d) => d,
                None => pipeline::dataset_file(&cfg, "validation")?,
            };
            let responses = responses.unwrap_or_else(|| cfg.responses_path());
            let mut report = pipeline::evaluate_stage(&cfg, &dataset, &responses)?;
            if let Some(m) = manual {
                let file = std::fs::File::open(&m).map_err(|e| Error::Io { path: m.clone(), source: e })?;
                report.manual = Some(record_manual(&read_manual_csv(file)?)?);
                pipeline::save_json(&cfg.reports_dir().join(pipeline::EVAL_REPORT_FILE), &report)?;
            }
            print_json(&report)
        }
        Command::Metrics {
            candidates,
            references,
            smooth,
        } => {
            let m = pipeline::metrics_stage(&candidates, &references, smooth)?;
            pipeline::save_json(&cfg.reports_dir().join(pipeline::METRICS_FILE), &m)?;
            print_json(&serde_json::json!({"bleu": m.bleu, "rouge_l": m.rouge_l, "pairs": m.pairs}))
        }
        Command::Stats { test } => match test {
            StatsCommand::Ztest { x1, n1, x2, n2 } => print_json(&two_proportion_z(x1, n1, x2, n2)?),
            StatsCommand::Wilson { successes, n, confidence } => print_json(&wilson_interval(successes, n, confidence)?),
        },
        Command::Cost { compare } => match compare.as_deref() {
            Some(&[a, b]) => {
                let r = cost_ratio(a, b)?;
                print_json(&serde_json::json!({"ratio": r, "ratio_rounded": r.round()}))
            }
            _ => print_json(&cost_table(&cfg.cost)),
        },
        Command::TrainConfig {
            action: TrainConfigCommand::Emit { out },
        } => {
            emit_training_config(&TrainingConfig::default(), &out)?;
            print_json(&serde_json::json!({"written": out}))
        }
        Command::Serve { mock, bind } => {
            let store = pipeline::open_store(&cfg, "serve")?;
            let mut service = cfg.service.clone();
            if let Some(b) = bind {
                service.bind = b;
            }
            let client: Arc<dyn ChatClient> = if mock {
                Arc::new(VesselCountClient)
            } else {
                Arc::new(HttpChatClient::from_env(
                    service.inference_endpoint.clone(),
                    &service.api_key_env,
                    Duration::from_secs(service.timeout_secs),
                ))
            };
            let state = Arc::new(AppState {
                store,
                geo: cfg.geography.clone(),
                cfg: service,
                client,
            });
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Io { path: Path::new("tokio").into(), source: e })?;
            rt.block_on(aisqa::service::serve(state))
        }
        Command::Report => {
            let files = pipeline::report(&cfg)?;
            print_json(&files)
        }
        Command::Run {
            inputs,
            client,
            respond_client,
            epsilon,
        } => {
            let summary = pipeline::run(
                &cfg,
                &inputs_or_config(&inputs, &cfg),
                mode_of(client, epsilon),
                mode_of(respond_client.unwrap_or(client), epsilon),
            )?;
            print_json(&summary)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
