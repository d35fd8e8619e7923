//! Proportion statistics and the annual cost model.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const DAYS_PER_YEAR: f64 = 365.0;

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    standard_normal().cdf(z)
}

/// Inverse standard normal CDF for `q` in (0, 1).
pub fn normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("quantile {q} outside (0, 1)")));
    }
    Ok(standard_normal().inverse_cdf(q))
}

fn check_counts(x: u64, n: u64, label: &str) -> Result<()> {
    if n == 0 || x > n {
        return Err(Error::invalid(format!("{label}: need n >= 1 and 0 <= x <= n, got {x}/{n}")));
    }
    Ok(())
}

pub fn pooled_proportion(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<f64> {
    check_counts(x1, n1, "sample 1")?;
    check_counts(x2, n2, "sample 2")?;
    Ok((x1 + x2) as f64 / (n1 + n2) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionTest {
    pub x1: u64,
    pub n1: u64,
    pub x2: u64,
    pub n2: u64,
    pub p1: f64,
    pub p2: f64,
    pub p_pool: f64,
    pub se: f64,
    pub z: f64,
    /// Two-sided.
    pub p_value: f64,
}

/// Pooled two-proportion z-test; intermediates are never rounded.
pub fn two_proportion_z(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<ProportionTest> {
    let p_pool = pooled_proportion(x1, n1, x2, n2)?;
    if p_pool <= 0.0 || p_pool >= 1.0 {
        return Err(Error::invalid(format!("pooled proportion {p_pool} is degenerate")));
    }
    let p1 = x1 as f64 / n1 as f64;
    let p2 = x2 as f64 / n2 as f64;
    let se = (p_pool * (1.0 - p_pool) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let z = (p1 - p2) / se;
    let p_value = (2.0 * (1.0 - normal_cdf(z.abs()))).min(1.0);
    Ok(ProportionTest {
        x1,
        n1,
        x2,
        n2,
        p1,
        p2,
        p_pool,
        se,
        z,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    /// Raw proportion successes / n.
    pub point: f64,
    /// Wilson-adjusted center.
    pub center: f64,
    pub low: f64,
    pub high: f64,
    pub confidence: f64,
    pub n: u64,
}

/// Wilson score interval with z = Φ⁻¹(1 − α/2), clamped to [0, 1].
pub fn wilson_interval(successes: u64, n: u64, confidence: f64) -> Result<ConfidenceInterval> {
    check_counts(successes, n, "wilson")?;
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(format!("confidence {confidence} outside (0, 1)")));
    }
    let z = normal_quantile(1.0 - (1.0 - confidence) / 2.0)?;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    Ok(ConfidenceInterval {
        point: p,
        center,
        low: (center - half).max(0.0),
        high: (center + half).min(1.0),
        confidence,
        n,
    })
}

/// One deployment option; prices are per million tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostScenario {
    pub name: String,
    pub queries_per_day: f64,
    pub tokens_in_per_query: f64,
    pub tokens_out_per_query: f64,
    pub price_in: f64,
    pub price_out: f64,
    /// Hardware or hosting cost per year, independent of volume.
    pub fixed_annual: f64,
}

impl CostScenario {
    pub fn validate(&self) -> Result<()> {
        let v = [
            self.queries_per_day,
            self.tokens_in_per_query,
            self.tokens_out_per_query,
            self.price_in,
            self.price_out,
            self.fixed_annual,
        ];
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config(format!("cost scenario {:?}: values must be non-negative", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub scenarios: Vec<CostScenario>,
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenarios.iter().try_for_each(CostScenario::validate)
    }
}

/// Annual cost: per-token spend over 365 days plus the fixed component.
pub fn cost_projection(s: &CostScenario) -> f64 {
    let per_query = s.tokens_in_per_query * s.price_in + s.tokens_out_per_query * s.price_out;
    DAYS_PER_YEAR * s.queries_per_day * per_query / 1e6 + s.fixed_annual
}

pub fn cost_ratio(a: f64, b: f64) -> Result<f64> {
    if b <= 0.0 || !b.is_finite() {
        return Err(Error::invalid(format!("cost ratio denominator must be positive, got {b}")));
    }
    Ok(a / b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLine {
    pub name: String,
    pub annual_cost: f64,
    /// This scenario's cost over the cheapest positive one.
    pub ratio_to_cheapest: f64,
}

pub fn cost_table(cfg: &CostConfig) -> Vec<CostLine> {
    let costs: Vec<f64> = cfg.scenarios.iter().map(cost_projection).collect();
    let cheapest = costs.iter().copied().filter(|c| *c > 0.0).fold(f64::INFINITY, f64::min);
    cfg.scenarios
        .iter()
        .zip(costs)
        .map(|(s, c)| CostLine {
            name: s.name.clone(),
            annual_cost: c,
            ratio_to_cheapest: if cheapest.is_finite() { c / cheapest } else { 0.0 },
        })
        .collect()
}
