//! Training-side numerics: YaRN frequency scaling, label smoothing, and the
//! emitted fine-tuning configuration.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RopeScalingConfig {
    pub base: f64,
    pub scale: f64,
    pub original_context: u64,
    pub target_context: u64,
    pub head_dim: usize,
    /// Wavelength-ratio bounds of the ramp.
    pub ramp_low: f64,
    pub ramp_high: f64,
}

impl Default for RopeScalingConfig {
    fn default() -> Self {
        Self {
            base: 10_000.0,
            scale: 4.0,
            original_context: 32_768,
            target_context: 131_072,
            head_dim: 128,
            ramp_low: 1.0,
            ramp_high: 32.0,
        }
    }
}

impl RopeScalingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.head_dim < 2 || self.head_dim % 2 != 0 {
            return Err(Error::invalid(format!("head_dim {} must be even and >= 2", self.head_dim)));
        }
        if !(self.base > 1.0 && self.scale >= 1.0) {
            return Err(Error::invalid("need base > 1 and scale >= 1"));
        }
        if (self.scale * self.original_context as f64 - self.target_context as f64).abs() > 0.5 {
            return Err(Error::invalid("target_context must equal scale x original_context"));
        }
        if !(0.0 < self.ramp_low && self.ramp_low < self.ramp_high) {
            return Err(Error::invalid("need 0 < ramp_low < ramp_high"));
        }
        Ok(())
    }

    /// Number of rotary frequency pairs.
    pub fn pairs(&self) -> usize {
        self.head_dim / 2
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d >= self.pairs() {
            return Err(Error::invalid(format!("dimension {d} outside [0, {})", self.pairs())));
        }
        Ok(())
    }

    fn exponent(&self, d: usize) -> f64 {
        2.0 * d as f64 / self.head_dim as f64
    }

    /// θ_d = b^(−2d/|D|).
    pub fn theta(&self, d: usize) -> Result<f64> {
        self.check_dim(d)?;
        Ok(self.base.powf(-self.exponent(d)))
    }
}

/// λ_d = 2π·b^(2d/|D|).
pub fn wavelength(d: usize, cfg: &RopeScalingConfig) -> Result<f64> {
    cfg.check_dim(d)?;
    Ok(2.0 * PI * cfg.base.powf(cfg.exponent(d)))
}

/// r(d) = L / λ_d.
pub fn wavelength_ratio(d: usize, cfg: &RopeScalingConfig) -> Result<f64> {
    Ok(cfg.original_context as f64 / wavelength(d, cfg)?)
}

/// Piecewise-linear ramp: 0 below `low`, 1 above `high`.
pub fn ramp(r: f64, low: f64, high: f64) -> f64 {
    if r < low {
        0.0
    } else if r > high {
        1.0
    } else {
        (r - low) / (high - low)
    }
}

/// h(θ_d) = (1 − γ)·θ_d/s + γ·θ_d with γ = ramp(r(d)).
pub fn scaled_frequency(d: usize, cfg: &RopeScalingConfig) -> Result<f64> {
    let theta = cfg.theta(d)?;
    let gamma = ramp(wavelength_ratio(d, cfg)?, cfg.ramp_low, cfg.ramp_high);
    Ok(blend(theta, gamma, cfg.scale))
}

pub fn blend(theta: f64, gamma: f64, scale: f64) -> f64 {
    (1.0 - gamma) * theta / scale + gamma * theta
}

/// Positions are not rescaled.
pub fn position_map(m: u64) -> u64 {
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEntry {
    pub d: usize,
    pub theta: f64,
    pub wavelength: f64,
    pub ratio: f64,
    pub gamma: f64,
    pub scaled: f64,
}

pub fn frequency_table(cfg: &RopeScalingConfig) -> Result<Vec<FrequencyEntry>> {
    cfg.validate()?;
    (0..cfg.pairs())
        .map(|d| {
            let ratio = wavelength_ratio(d, cfg)?;
            Ok(FrequencyEntry {
                d,
                theta: cfg.theta(d)?,
                wavelength: wavelength(d, cfg)?,
                ratio,
                gamma: ramp(ratio, cfg.ramp_low, cfg.ramp_high),
                scaled: scaled_frequency(d, cfg)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub epsilon: f64,
    pub vocab_size: usize,
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!("epsilon {} outside [0, 1)", self.epsilon)));
        }
        if self.vocab_size < 2 {
            return Err(Error::invalid("vocab_size must be at least 2"));
        }
        Ok(())
    }
}

/// y′ = (1 − ε)·y + ε/V for a one-hot y.
pub fn smoothed_labels(true_index: usize, cfg: &SmoothingConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if true_index >= cfg.vocab_size {
        return Err(Error::invalid(format!("true index {true_index} outside vocabulary of {}", cfg.vocab_size)));
    }
    let off = cfg.epsilon / cfg.vocab_size as f64;
    let mut y = vec![off; cfg.vocab_size];
    y[true_index] = 1.0 - cfg.epsilon + off;
    Ok(y)
}

/// L = −Σ y′_i·ln p_i.
pub fn smoothed_ce_loss(predicted: &[f64], true_index: usize, cfg: &SmoothingConfig) -> Result<f64> {
    if predicted.len() != cfg.vocab_size {
        return Err(Error::invalid(format!(
            "prediction has {} entries, vocabulary has {}",
            predicted.len(),
            cfg.vocab_size
        )));
    }
    if predicted.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(Error::invalid("probabilities must be positive (log domain)"));
    }
    let total: f64 = predicted.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
    }
    let y = smoothed_labels(true_index, cfg)?;
    Ok(-y.iter().zip(predicted).map(|(y, p)| y * p.ln()).sum::<f64>())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Gradient of the loss with respect to the logits: softmax(z) − y′.
pub fn smoothed_ce_grad_logits(logits: &[f64], true_index: usize, cfg: &SmoothingConfig) -> Result<Vec<f64>> {
    let y = smoothed_labels(true_index, cfg)?;
    if logits.len() != y.len() {
        return Err(Error::invalid("logit count does not match vocabulary"));
    }
    Ok(softmax(logits).iter().zip(&y).map(|(p, y)| p - y).collect())
}

/// Fine-tuning hyperparameters handed to an external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub base_model: String,
    pub method: String,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: u32,
    pub warmup_steps: u32,
    pub gradient_accumulation: u32,
    pub context_length: u64,
    pub label_smoothing: f64,
    pub rope: RopeScalingConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            base_model: "Qwen2.5-7B-Instruct".into(),
            method: "qlora".into(),
            lora_rank: 256,
            lora_alpha: 512,
            dropout: 0.1,
            learning_rate: 2e-4,
            batch_size: 1,
            warmup_steps: 100,
            gradient_accumulation: 16,
            context_length: 131_072,
            label_smoothing: 0.1,
            rope: RopeScalingConfig::default(),
        }
    }
}

/// Parsed form of an emitted file: the config plus its frequency table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedTrainingConfig {
    pub config: TrainingConfig,
    pub scaled_frequencies: Vec<f64>,
}

fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

const SCHEMA: &str = "\
# Fine-tuning configuration (flat dotted keys, TOML syntax).
#
#   model.base                  base checkpoint name
#   train.method                adapter method
#   lora.rank / lora.alpha / lora.dropout
#   train.learning_rate / train.batch_size / train.warmup_steps / train.gradient_accumulation
#   train.label_smoothing       epsilon of the smoothed cross-entropy
#   context.length              target context in tokens
#   rope_scaling.type           always \"yarn\"
#   rope_scaling.factor         s, target / original context
#   rope_scaling.original_max_position_embeddings
#   rope_scaling.base / rope_scaling.head_dim / rope_scaling.beta_slow / rope_scaling.beta_fast
#                               ramp bounds as wavelength ratios (slow = low, fast = high)
#   rope_scaling.scaled_frequencies
#                               h(theta_d) for d = 0..head_dim/2, 12 significant digits
";

/// Render the configuration with its computed frequency table.
pub fn render_training_config(cfg: &TrainingConfig) -> Result<String> {
    let table = frequency_table(&cfg.rope)?;
    let mut out = String::from(SCHEMA);
    let r = &cfg.rope;
    let _ = writeln!(out);
    let _ = writeln!(out, "model.base = {:?}", cfg.base_model);
    let _ = writeln!(out, "train.method = {:?}", cfg.method);
    let _ = writeln!(out, "lora.rank = {}", cfg.lora_rank);
    let _ = writeln!(out, "lora.alpha = {}", cfg.lora_alpha);
    let _ = writeln!(out, "lora.dropout = {:?}", cfg.dropout);
    let _ = writeln!(out, "train.learning_rate = {:e}", cfg.learning_rate);
    let _ = writeln!(out, "train.batch_size = {}", cfg.batch_size);
    let _ = writeln!(out, "train.warmup_steps = {}", cfg.warmup_steps);
    let _ = writeln!(out, "train.gradient_accumulation = {}", cfg.gradient_accumulation);
    let _ = writeln!(out, "train.label_smoothing = {:?}", cfg.label_smoothing);
    let _ = writeln!(out, "context.length = {}", cfg.context_length);
    let _ = writeln!(out, "rope_scaling.type = \"yarn\"");
    let _ = writeln!(out, "rope_scaling.factor = {:?}", r.scale);
    let _ = writeln!(out, "rope_scaling.original_max_position_embeddings = {}", r.original_context);
    let _ = writeln!(out, "rope_scaling.base = {:?}", r.base);
    let _ = writeln!(out, "rope_scaling.head_dim = {}", r.head_dim);
    let _ = writeln!(out, "rope_scaling.beta_slow = {:?}", r.ramp_low);
    let _ = writeln!(out, "rope_scaling.beta_fast = {:?}", r.ramp_high);
    let _ = writeln!(out, "rope_scaling.scaled_frequencies = [");
    for e in &table {
        let _ = writeln!(out, "  {},", sig12(e.scaled));
    }
    let _ = writeln!(out, "]");
    Ok(out)
}

pub fn emit_training_config(cfg: &TrainingConfig, path: &Path) -> Result<()> {
    let text = render_training_config(cfg)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_training_config(text: &str) -> Result<EmittedTrainingConfig> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Raw {
        model: RawModel,
        train: RawTrain,
        lora: RawLora,
        context: RawContext,
        rope_scaling: RawRope,
    }
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct RawModel {
        base: String,
    }
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct RawTrain {
        method: String,
        learning_rate: f64,
        batch_size: u32,
        warmup_steps: u32,
        gradient_accumulation: u32,
        label_smoothing: f64,
    }
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct RawLora {
        rank: u32,
        alpha: u32,
        dropout: f64,
    }
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct RawContext {
        length: u64,
    }
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct RawRope {
        #[serde(rename = "type")]
        kind: String,
        factor: f64,
        original_max_position_embeddings: u64,
        base: f64,
        head_dim: usize,
        beta_slow: f64,
        beta_fast: f64,
        scaled_frequencies: Vec<f64>,
    }
    let raw: Raw = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    if raw.rope_scaling.kind != "yarn" {
        return Err(Error::Config(format!("unsupported rope_scaling.type {:?}", raw.rope_scaling.kind)));
    }
    let scale = raw.rope_scaling.factor;
    let original = raw.rope_scaling.original_max_position_embeddings;
    let config = TrainingConfig {
        base_model: raw.model.base,
        method: raw.train.method,
        lora_rank: raw.lora.rank,
        lora_alpha: raw.lora.alpha,
        dropout: raw.lora.dropout,
        learning_rate: raw.train.learning_rate,
        batch_size: raw.train.batch_size,
        warmup_steps: raw.train.warmup_steps,
        gradient_accumulation: raw.train.gradient_accumulation,
        context_length: raw.context.length,
        label_smoothing: raw.train.label_smoothing,
        rope: RopeScalingConfig {
            base: raw.rope_scaling.base,
            scale,
            original_context: original,
            target_context: raw.context.length,
            head_dim: raw.rope_scaling.head_dim,
            ramp_low: raw.rope_scaling.beta_slow,
            ramp_high: raw.rope_scaling.beta_fast,
        },
    };
    config.rope.validate()?;
    Ok(EmittedTrainingConfig {
        config,
        scaled_frequencies: raw.rope_scaling.scaled_frequencies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wavelength_examples() {
        let cfg = RopeScalingConfig::default();
        assert!((wavelength(0, &cfg).unwrap() - 2.0 * PI).abs() < 1e-15);
        // 10000^0.5 = 100, so λ = 200π; cross-check through logarithms.
        let w = wavelength(32, &cfg).unwrap();
        assert!((w - 628.3185307).abs() < 1e-6);
        assert!((w.ln() - ((2.0 * PI).ln() + 0.5 * 10_000f64.ln())).abs() < 1e-12);
        assert!(wavelength(64, &cfg).is_err());
        for d in 1..64 {
            assert!(wavelength(d, &cfg).unwrap() > wavelength(d - 1, &cfg).unwrap());
        }
    }

    #[test]
    fn ramp_examples() {
        assert_eq!(ramp(0.5, 1.0, 32.0), 0.0);
        assert_eq!(ramp(40.0, 1.0, 32.0), 1.0);
        assert_eq!(ramp(16.5, 1.0, 32.0), 0.5);
    }

    #[test]
    fn scaled_frequency_ends() {
        let cfg = RopeScalingConfig::default();
        let table = frequency_table(&cfg).unwrap();
        let high = table.iter().find(|e| e.gamma == 1.0).unwrap();
        assert_eq!(high.scaled, high.theta);
        let low = table.iter().rev().find(|e| e.gamma == 0.0).unwrap();
        assert_eq!(low.scaled, low.theta / 4.0);
        let theta = 0.37;
        assert_eq!(blend(theta, 0.5, 4.0), (theta + theta / 4.0) / 2.0);
    }

    #[test]
    fn positions_unchanged() {
        assert_eq!(position_map(0), 0);
        assert_eq!(position_map(131_071), 131_071);
    }

    fn arb_rope() -> impl Strategy<Value = RopeScalingConfig> {
        (1usize..129, 100f64..1e6, 1u32..9, 10u32..18, 0.1f64..4.0, 1.5f64..64.0).prop_map(
            |(half, base, s, log_l, low, span)| {
                let original = 1u64 << log_l;
                RopeScalingConfig {
                    base,
                    scale: s as f64,
                    original_context: original,
                    target_context: original * s as u64,
                    head_dim: 2 * half,
                    ramp_low: low,
                    ramp_high: low * span,
                }
            },
        )
    }

    proptest! {
        #[test]
        fn blend_stays_between_and_interpolates_low_frequencies_more(cfg in arb_rope()) {
            let table = frequency_table(&cfg).unwrap();
            let mut prev_ratio = f64::INFINITY;
            for e in &table {
                prop_assert!(e.theta / cfg.scale <= e.scaled * (1.0 + 1e-15));
                prop_assert!(e.scaled <= e.theta * (1.0 + 1e-15));
                let effective = e.scaled / e.theta;
                prop_assert!(effective <= prev_ratio * (1.0 + 1e-12));
                prev_ratio = effective;
            }
        }

        #[test]
        fn blend_monotone_in_gamma(theta in 1e-6f64..1.0, g1 in 0.0f64..1.0, g2 in 0.0f64..1.0, s in 1.0f64..16.0) {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            prop_assert!(blend(theta, lo, s) <= blend(theta, hi, s) * (1.0 + 1e-15));
        }

        #[test]
        fn labels_are_distributions(v in 2usize..500, eps in 0.0f64..0.99, idx in 0usize..500) {
            let cfg = SmoothingConfig { epsilon: eps, vocab_size: v };
            let y = smoothed_labels(idx % v, &cfg).unwrap();
            prop_assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(y.iter().all(|p| *p >= 0.0));
        }

        #[test]
        fn loss_matches_direct_sum(raw in proptest::collection::vec(0.01f64..1.0, 5), idx in 0usize..5, eps in 0.0f64..0.5) {
            let total: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let cfg = SmoothingConfig { epsilon: eps, vocab_size: 5 };
            let mut expected = 0.0;
            for i in 0..5 {
                let y = if i == idx { 1.0 - eps + eps / 5.0 } else { eps / 5.0 };
                expected -= y * p[i].ln();
            }
            prop_assert!((smoothed_ce_loss(&p, idx, &cfg).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn label_examples() {
        let cfg = SmoothingConfig { epsilon: 0.1, vocab_size: 4 };
        let y = smoothed_labels(0, &cfg).unwrap();
        let want = [0.925, 0.025, 0.025, 0.025];
        for (a, b) in y.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let hard = SmoothingConfig { epsilon: 0.0, vocab_size: 4 };
        assert_eq!(smoothed_labels(2, &hard).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        assert!(smoothed_labels(4, &cfg).is_err());
    }

    #[test]
    fn loss_examples() {
        let cfg = SmoothingConfig { epsilon: 0.1, vocab_size: 4 };
        let loss = smoothed_ce_loss(&[0.25; 4], 1, &cfg).unwrap();
        assert!((loss - 1.386294).abs() < 1e-6);
        assert!((loss - 4f64.ln()).abs() < 1e-12);

        let hard = SmoothingConfig { epsilon: 0.0, vocab_size: 3 };
        let tiny = 0.5e-12;
        let loss = smoothed_ce_loss(&[1.0 - 2.0 * tiny, tiny, tiny], 0, &hard).unwrap();
        assert!(loss < 1e-11);

        assert!(smoothed_ce_loss(&[1.0, 0.0, 0.0, 0.0], 0, &cfg).is_err());
        assert!(smoothed_ce_loss(&[0.5, 0.2, 0.2, 0.2], 0, &cfg).is_err());
    }

    #[test]
    fn table_defaults_round_trip() {
        let cfg = TrainingConfig::default();
        let text = render_training_config(&cfg).unwrap();
        assert!(text.contains("train.learning_rate = 2e-4"));
        assert!(text.contains("context.length = 131072"));
        assert!(text.contains("rope_scaling.factor = 4.0"));
        let parsed = parse_training_config(&text).unwrap();
        assert_eq!(parsed.config, cfg);
        let table = frequency_table(&cfg.rope).unwrap();
        assert_eq!(parsed.scaled_frequencies.len(), 64);
        for (got, e) in parsed.scaled_frequencies.iter().zip(&table) {
            assert!(((got - e.scaled) / e.scaled).abs() < 1e-11);
        }
    }
}
