//! BLEU and ROUGE-L, for comparing surface-overlap scores against judged accuracy.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercase, then split on whitespace; each punctuation character is its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            cur.push(ch);
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuResult {
    pub score: f64,
    pub brevity_penalty: f64,
    /// Clipped precisions p_1..p_4.
    pub precisions: [f64; 4],
    pub candidate_len: usize,
    pub reference_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuOptions {
    pub weights: [f64; 4],
    /// Replace zero match counts by 1e-9 so one empty order does not zero the score.
    pub smooth: bool,
}

impl Default for BleuOptions {
    fn default() -> Self {
        Self {
            weights: [0.25; 4],
            smooth: false,
        }
    }
}

const SMOOTH_EPS: f64 = 1e-9;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped matches and candidate n-gram totals for orders 1..4.
fn sentence_stats(cand: &[String], reference: &[String]) -> [(usize, usize); 4] {
    let mut out = [(0, 0); 4];
    for (i, slot) in out.iter_mut().enumerate() {
        let c = ngram_counts(cand, i + 1);
        let r = ngram_counts(reference, i + 1);
        let matched = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
        *slot = (matched, cand.len().saturating_sub(i));
    }
    out
}

/// Brevity penalty for corpus lengths: 1 when c > r, else e^(1 - r/c).
pub fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c > r {
        1.0
    } else if c == 0 {
        0.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

/// Corpus BLEU with one reference per candidate.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<String>], opts: BleuOptions) -> Result<BleuResult> {
    if candidates.is_empty() {
        return Err(Error::invalid("bleu needs at least one candidate"));
    }
    if candidates.len() != references.len() {
        return Err(Error::invalid(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    let (stats, c, r) = candidates
        .par_iter()
        .zip(references.par_iter())
        .map(|(c, r)| (sentence_stats(c, r), c.len(), r.len()))
        .reduce(
            || ([(0, 0); 4], 0, 0),
            |(mut a, ca, ra), (b, cb, rb)| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                (a, ca + cb, ra + rb)
            },
        );
    let mut precisions = [0.0; 4];
    for (p, &(m, total)) in precisions.iter_mut().zip(&stats) {
        *p = match (m, total) {
            (_, 0) => 0.0,
            (0, t) if opts.smooth => SMOOTH_EPS / t as f64,
            (m, t) => m as f64 / t as f64,
        };
    }
    let bp = brevity_penalty(c, r);
    let score = if precisions.iter().zip(&opts.weights).any(|(&p, &w)| w > 0.0 && p == 0.0) {
        0.0
    } else {
        let log: f64 = precisions
            .iter()
            .zip(&opts.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(p, w)| w * p.ln())
            .sum();
        bp * log.exp()
    };
    Ok(BleuResult {
        score,
        brevity_penalty: bp,
        precisions,
        candidate_len: c,
        reference_len: r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// LCS-based precision, recall and F1 (beta = 1); empty inputs score 0.
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> RougeL {
    let l = lcs_len(candidate, reference) as f64;
    if l == 0.0 {
        return RougeL {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
    }
    let p = l / candidate.len() as f64;
    let r = l / reference.len() as f64;
    RougeL {
        precision: p,
        recall: r,
        f1: 2.0 * p * r / (p + r),
    }
}

/// Mean sentence-level ROUGE-L over aligned pairs.
pub fn mean_rouge_l(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<RougeL> {
    if candidates.is_empty() || candidates.len() != references.len() {
        return Err(Error::invalid("rouge_l needs equal, non-empty candidate and reference lists"));
    }
    let n = candidates.len() as f64;
    let scores: Vec<RougeL> = candidates.par_iter().zip(references).map(|(c, r)| rouge_l(c, r)).collect();
    let sum = |f: fn(&RougeL) -> f64| scores.iter().map(f).sum::<f64>() / n;
    Ok(RougeL {
        precision: sum(|s| s.precision),
        recall: sum(|s| s.recall),
        f1: sum(|s| s.f1),
    })
}
