//! Acceptance run: one line per criterion, then a nonzero exit if any failed.
//!
//! Built with `harness = false` so the lines are always printed by `cargo test`.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aisqa::config::PipelineConfig;
use aisqa::eval::{judge, JudgeConfig, Verdict};
use aisqa::fixture::FIXTURE_CSV;
use aisqa::metrics::{bleu, brevity_penalty, tokenize, BleuOptions};
use aisqa::oracle::Category;
use aisqa::pipeline::{self, ClientMode, GenerateOptions};
use aisqa::qa::{split_dataset, ModelSpec, OracleCheck, QaPair, Style};
use aisqa::sampler::{assign_generator, load_contexts, Generator};
use aisqa::stats::{cost_ratio, two_proportion_z, wilson_interval};
use aisqa::train::{
    blend, ramp, scaled_frequency, smoothed_ce_grad_logits, smoothed_ce_loss, smoothed_labels, softmax,
    wavelength_ratio, RopeScalingConfig, SmoothingConfig,
};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    check((got - want).abs() <= tol, format!("{what}: got {got}, want {want} ± {tol}"))
}

fn wilson_rows() -> Outcome {
    // (successes, n, low, high)
    let direct = [(75, 100, 0.657, 0.825), (354, 500, 0.667, 0.746), (7, 7, 0.646, 1.000)];
    for (k, n, lo, hi) in direct {
        let ci = wilson_interval(k, n, 0.95).map_err(|e| e.to_string())?;
        close(ci.low, lo, 0.001, &format!("{k}/{n} low"))?;
        close(ci.high, hi, 0.001, &format!("{k}/{n} high"))?;
    }
    // Only the point estimate is printed for these rows; find every n whose
    // rounded proportion and both bounds agree, and require exactly one.
    let inferred = [(0.815, 0.633, 0.918, 27), (0.833, 0.552, 0.953, 12), (0.706, 0.469, 0.867, 17)];
    let mut found = Vec::new();
    for (point, lo, hi, expect_n) in inferred {
        let hits: Vec<u64> = (1..=200u64)
            .filter(|&n| {
                let k = (point * n as f64).round() as u64;
                if k > n || ((k as f64 / n as f64) - point).abs() >= 0.0005 {
                    return false;
                }
                let ci = wilson_interval(k, n, 0.95).unwrap();
                (ci.low - lo).abs() <= 0.001 && (ci.high - hi).abs() <= 0.001
            })
            .collect();
        check(hits == vec![expect_n], format!("point {point}: matching n = {hits:?}, want [{expect_n}]"))?;
        found.push(expect_n);
    }
    Ok(format!("6 rows within ±0.001; inferred n = {found:?}"))
}

fn z_test() -> Outcome {
    let t = two_proportion_z(75, 100, 354, 500).map_err(|e| e.to_string())?;
    check(t.p_pool == 0.715, format!("p_pool {}", t.p_pool))?;
    close(t.se, 0.04945, 1e-5, "se")?;
    close(t.z, 0.849, 0.001, "z")?;
    close(t.p_value, 0.3957, 0.0005, "p")?;
    Ok(format!("p_pool={} se={:.5} z={:.3} p={:.4}", t.p_pool, t.se, t.z, t.p_value))
}

fn cost() -> Outcome {
    let r = cost_ratio(2_190_000.0, 8_400.0).map_err(|e| e.to_string())?;
    close(r, 260.71, 0.005, "ratio")?;
    check(r.round() == 261.0, "rounded ratio")?;
    Ok(format!("ratio {r:.2}, reported {}", r.round()))
}

fn stub(context_id: usize, slot: usize) -> QaPair {
    QaPair {
        context_id,
        slot_index: slot,
        question: format!("q{context_id}.{slot}"),
        answer: "1 vessel".into(),
        category: Category::Count,
        style: Style::ALL[slot % Style::ALL.len()],
        generator: assign_generator(context_id),
        oracle_check: OracleCheck::Passed,
        split: None,
    }
}

fn split() -> Outcome {
    let mut pairs = Vec::new();
    let mut ctx = 0;
    while pairs.len() < 21_543 {
        let size = if ctx % 3 == 0 { 11 } else { 12 }.min(21_543 - pairs.len());
        pairs.extend((0..size).map(|s| stub(ctx, s)));
        ctx += 1;
    }
    let s = split_dataset(&mut pairs, 0.9, 7).map_err(|e| e.to_string())?;
    check((s.train, s.validation) == (19_389, 2_154), format!("{}/{}", s.train, s.validation))?;
    Ok(format!("{} pairs in {ctx} contexts -> {}/{}", pairs.len(), s.train, s.validation))
}

fn generator_share() -> Outcome {
    let b = (0..1750).filter(|&i| assign_generator(i) == Generator::ModelB).count();
    check(b == 250, format!("{b} model_b"))?;
    Ok(format!("{b} of 1750 model_b ({:.2}%)", 100.0 * b as f64 / 1750.0))
}

fn yarn() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut low = 0;
    let mut high = 0;
    for trial in 0..200 {
        let cfg = if trial == 0 {
            RopeScalingConfig::default()
        } else {
            let scale = 4.0;
            let original_context = 1u64 << rng.random_range(10..18);
            RopeScalingConfig {
                base: rng.random_range(500.0..1_000_000.0),
                scale,
                original_context,
                target_context: original_context * 4,
                head_dim: 128,
                ramp_low: rng.random_range(0.5..4.0),
                ramp_high: rng.random_range(8.0..64.0),
            }
        };
        for d in 0..cfg.head_dim / 2 {
            let theta = cfg.theta(d).unwrap();
            let h = scaled_frequency(d, &cfg).unwrap();
            let r = wavelength_ratio(d, &cfg).unwrap();
            check(
                h >= theta / 4.0 * (1.0 - 1e-12) && h <= theta * (1.0 + 1e-12),
                format!("d={d}: h={h} outside [θ/4, θ] for θ={theta}"),
            )?;
            // Long-wavelength pairs (small ratio) interpolate fully, short ones are untouched.
            if r < cfg.ramp_low {
                check(h == theta / 4.0, format!("d={d}: r={r} < α but h/θ = {}", h / theta))?;
                low += 1;
            }
            if r > cfg.ramp_high {
                check(h == theta, format!("d={d}: r={r} > β but h/θ = {}", h / theta))?;
                high += 1;
            }
        }
    }
    check(low > 0 && high > 0, "both ramp branches exercised")?;
    let theta = 0.37;
    close(blend(theta, 0.5, 4.0), 0.5 * theta / 4.0 + 0.5 * theta, 0.0, "midpoint")?;
    close(ramp(5.0, 1.0, 9.0), 0.5, 0.0, "ramp midpoint")?;
    Ok(format!(
        "200 configs, |D|=128, s=4: h in [θ/4, θ]; r<α gives θ/4 ({low} dims), r>β gives θ ({high} dims); γ=0.5 midpoint exact"
    ))
}

fn label_smoothing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let v = rng.random_range(2..500);
        let cfg = SmoothingConfig {
            epsilon: rng.random_range(0.0..0.99),
            vocab_size: v,
        };
        let y = smoothed_labels(rng.random_range(0..v), &cfg).unwrap();
        close(y.iter().sum::<f64>(), 1.0, 1e-12, "label sum")?;
        let uniform = vec![1.0 / v as f64; v];
        close(smoothed_ce_loss(&uniform, 0, &cfg).unwrap(), (v as f64).ln(), 1e-9, "uniform loss")?;
    }
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = rng.random_range(2..40);
        let cfg = SmoothingConfig {
            epsilon: rng.random_range(0.0..0.5),
            vocab_size: v,
        };
        let t = rng.random_range(0..v);
        let z: Vec<f64> = (0..v).map(|_| rng.random_range(-4.0..4.0)).collect();
        let grad = smoothed_ce_grad_logits(&z, t, &cfg).unwrap();
        let h = 1e-5;
        for i in 0..v {
            let mut plus = z.clone();
            let mut minus = z.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (smoothed_ce_loss(&softmax(&plus), t, &cfg).unwrap() - smoothed_ce_loss(&softmax(&minus), t, &cfg).unwrap())
                / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs());
        }
    }
    check(worst <= 1e-5, format!("max gradient gap {worst:e}"))?;
    Ok(format!("label sums 1e-12, uniform loss ln V 1e-9, 100 gradient checks (max gap {worst:.1e})"))
}

fn brevity() -> Outcome {
    let text = "the tanker moved north at twelve knots near the port";
    let t = vec![tokenize(text)];
    let id = bleu(&t, &t, BleuOptions::default()).map_err(|e| e.to_string())?;
    close(id.score, 1.0, 1e-12, "identity bleu")?;
    close(id.brevity_penalty, 1.0, 0.0, "identity bp")?;
    close(brevity_penalty(5, 10), (-1.0f64).exp(), 1e-9, "c = r/2")?;
    close(brevity_penalty(12, 10), 1.0, 0.0, "c > r")?;
    Ok("identity 1.0, c=r/2 gives e^-1, c>r gives 1".into())
}

fn judge_semantics() -> Outcome {
    let cfg = JudgeConfig::default();
    check(judge("109 vessels", "100 vessels", &cfg).verdict == Verdict::Correct, "109 vs 100")?;
    check(judge("111 vessels", "100 vessels", &cfg).verdict == Verdict::Incorrect, "111 vs 100")?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut flips = 0;
    for _ in 0..2000 {
        let refs: Vec<f64> = (0..rng.random_range(1..4)).map(|_| rng.random_range(0..200) as f64).collect();
        let mut resp: Vec<f64> = refs.iter().map(|r| (r * rng.random_range(0.7..1.3) * 100.0).round() / 100.0).collect();
        if rng.random_bool(0.5) {
            resp.push(rng.random_range(0..200) as f64);
        }
        let text = |v: &[f64]| v.iter().map(|x| format!("{x} vessels")).collect::<Vec<_>>().join(", ");
        let (reference, response) = (text(&refs), text(&resp));
        let t1 = rng.random_range(0.0..0.3);
        let t2 = t1 + rng.random_range(0.0..0.3);
        let at = |t: f64| {
            judge(
                &response,
                &reference,
                &JudgeConfig {
                    rel_tol: t,
                    ..cfg.clone()
                },
            )
            .verdict
                == Verdict::Correct
        };
        let (a, b) = (at(t1), at(t2));
        check(!a || b, format!("passes at {t1} but not {t2}: {response:?} vs {reference:?}"))?;
        flips += usize::from(a != b);
    }
    Ok(format!("109 correct, 111 incorrect; monotone over 2000 random pairs ({flips} verdict changes)"))
}

fn end_to_end() -> Outcome {
    let started = Instant::now();
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::builtin().clone();
    cfg.paths.work_dir = work.path().to_path_buf();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join(FIXTURE_CSV);
    let err = |e: aisqa::Error| e.to_string();

    let ingest = pipeline::ingest(&cfg, &[fixture]).map_err(err)?;
    check(ingest.stats.accepted >= 5000, format!("{} records", ingest.stats.accepted))?;
    pipeline::sample(&cfg, None, None).map_err(err)?;
    let contexts = load_contexts(&cfg.contexts_dir()).map_err(err)?;
    let regions: BTreeSet<_> = contexts.iter().map(|c| c.stratum.region).collect();
    check(regions.len() == 4, format!("regions sampled: {regions:?}"))?;

    let generated = pipeline::generate(
        &cfg,
        &GenerateOptions {
            contexts_dir: None,
            out_dir: None,
            client: ClientMode::Mock,
            concurrency: None,
            seed: None,
        },
    )
    .map_err(err)?;
    check(generated.failed == 0 && generated.context_errors.is_empty(), "generation QC")?;

    let model = ModelSpec {
        name: "under-test".into(),
        temperature: 0.0,
    };
    let mut acc = Vec::new();
    for mode in [ClientMode::Mock, ClientMode::MockPerturbed(0.15)] {
        let mut per_split = Vec::new();
        for split in ["train", "validation"] {
            let dataset = pipeline::dataset_file(&cfg, split).map_err(err)?;
            let out = work.path().join(format!("responses_{split}.jsonl"));
            pipeline::respond_stage(&cfg, &dataset, &out, mode, &model).map_err(err)?;
            let report = pipeline::evaluate_stage(&cfg, &dataset, &out).map_err(err)?;
            per_split.push((report.overall.n, report.overall.accuracy.unwrap_or(f64::NAN)));
        }
        acc.push(per_split);
    }
    let secs = started.elapsed().as_secs_f64();
    check(acc[0].iter().all(|&(_, a)| a == 1.0), format!("echo accuracy {:?}", acc[0]))?;
    check(acc[1].iter().all(|&(_, a)| a == 0.0), format!("perturbed accuracy {:?}", acc[1]))?;
    check(secs <= 60.0, format!("took {secs:.1}s"))?;
    let n: usize = acc[0].iter().map(|p| p.0).sum();
    Ok(format!(
        "{} records, {} contexts, {n} pairs: echo 1.000, +15% 0.000 in {secs:.2}s",
        ingest.stats.accepted,
        contexts.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("wilson intervals", wilson_rows),
        ("two-proportion z-test", z_test),
        ("cost ratio", cost),
        ("dataset split", split),
        ("generator share", generator_share),
        ("yarn frequency scaling", yarn),
        ("label smoothing", label_smoothing),
        ("bleu brevity penalty", brevity),
        ("judge semantics", judge_semantics),
        ("end-to-end oracle loop", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {:>2} {name:<24} PASS  {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name:<24} FAIL  {why}", i + 1);
            }
        }
    }
    println!(
        "criterion 11 {:<24} DECLARED  fine-tuned 7B accuracy, BLEU/ROUGE on real outputs and final losses need the actual training run",
        "desk-scale limits"
    );
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
