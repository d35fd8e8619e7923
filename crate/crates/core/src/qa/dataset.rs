use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{OracleCheck, QaPair, Split, Style};
use crate::error::{Error, Result};
use crate::oracle::Category;
use crate::sampler::Generator;

pub const TRAIN_FILE: &str = "train.jsonl";
pub const VALIDATION_FILE: &str = "validation.jsonl";
pub const REJECTED_FILE: &str = "rejected.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One emitted line. Field order is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetLine {
    pub context_id: usize,
    pub question: String,
    pub answer: String,
    pub category: Category,
    pub style: Style,
    pub generator: Generator,
}

impl From<&QaPair> for DatasetLine {
    fn from(p: &QaPair) -> Self {
        Self {
            context_id: p.context_id,
            question: p.question.clone(),
            answer: p.answer.clone(),
            category: p.category,
            style: p.style,
            generator: p.generator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train: usize,
    pub validation: usize,
    /// Whether `train == round(N * fraction)`; context granularity can make that unreachable.
    pub exact: bool,
}

/// Indices (into `sizes`) of a subset summing to the reachable total closest to
/// `target`, lower totals winning ties. With two or more groups the subset is
/// proper and non-empty.
fn subset_closest(sizes: &[usize], target: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let words = total / 64 + 1;
    // reach[i] = totals reachable with the first i groups.
    let mut reach: Vec<Vec<u64>> = Vec::with_capacity(sizes.len() + 1);
    let mut cur = vec![0u64; words];
    cur[0] = 1;
    reach.push(cur.clone());
    for &s in sizes {
        let mut next = cur.clone();
        let (wshift, bshift) = (s / 64, s % 64);
        for w in (0..words).rev() {
            let mut v = 0u64;
            if w >= wshift {
                v = cur[w - wshift] << bshift;
                if bshift > 0 && w > wshift {
                    v |= cur[w - wshift - 1] >> (64 - bshift);
                }
            }
            next[w] |= v;
        }
        reach.push(next.clone());
        cur = next;
    }
    let has = |bits: &[u64], t: usize| bits[t / 64] >> (t % 64) & 1 == 1;
    // Keep both sides non-empty when there is more than one group.
    let interior = |t: usize| sizes.len() < 2 || (t > 0 && t < total);
    let best = (0..=total)
        .filter(|&t| has(&cur, t) && interior(t))
        .min_by_key(|&t| (t.abs_diff(target), t))
        .expect("some proper subset is reachable");

    let mut chosen = Vec::new();
    let mut t = best;
    for i in (0..sizes.len()).rev() {
        if !has(&reach[i], t) {
            t -= sizes[i];
            chosen.push(i);
        }
    }
    debug_assert_eq!(t, 0);
    chosen
}

/// Label every pair with a split, by context: a context's pairs never straddle splits.
///
/// The train count is `round(N * fraction)` whenever some set of whole contexts sums to it.
pub fn split_dataset(pairs: &mut [QaPair], fraction: f64, seed: u64) -> Result<SplitSummary> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {fraction} outside (0, 1)")));
    }
    let mut groups: BTreeMap<usize, usize> = BTreeMap::new();
    for p in pairs.iter() {
        *groups.entry(p.context_id).or_default() += 1;
    }
    let mut order: Vec<(usize, usize)> = groups.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let target = (pairs.len() as f64 * fraction).round() as usize;

    // First fit over the shuffled order settles most inputs without the DP.
    let mut train_ids = BTreeSet::new();
    let mut acc = 0;
    for &(id, n) in &order {
        if acc + n <= target {
            acc += n;
            train_ids.insert(id);
        }
    }
    if acc != target {
        let sizes: Vec<usize> = order.iter().map(|&(_, n)| n).collect();
        train_ids = subset_closest(&sizes, target).into_iter().map(|i| order[i].0).collect();
    }

    let mut train = 0;
    for p in pairs.iter_mut() {
        let s = if train_ids.contains(&p.context_id) {
            train += 1;
            Split::Train
        } else {
            Split::Validation
        };
        p.split = Some(s);
    }
    Ok(SplitSummary {
        train,
        validation: pairs.len() - train,
        exact: train == target,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub train: usize,
    pub validation: usize,
    pub rejected: usize,
    pub split_exact: bool,
    pub per_category: BTreeMap<String, usize>,
    pub per_style: BTreeMap<String, usize>,
    pub per_generator: BTreeMap<String, usize>,
    /// Distinct contexts per generator role, over emitted pairs.
    pub generator_contexts: BTreeMap<String, usize>,
    /// Share of contexts per generator role, rounded to 4 dp.
    pub generator_context_share: BTreeMap<String, f64>,
    /// Rough token counts at four characters per token.
    pub question_tokens_est: usize,
    pub answer_tokens_est: usize,
}

fn write_lines<'a>(path: &Path, pairs: impl Iterator<Item = &'a QaPair>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        serde_json::to_writer(&mut w, &DatasetLine::from(p))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write train/validation/rejected JSONL and the manifest into `out_dir`.
///
/// Passed pairs need a split label; everything else goes to the rejected file
/// when `keep_rejected` is set. Output is byte-stable for a given input order.
pub fn emit_jsonl(
    pairs: &[QaPair],
    out_dir: &Path,
    config_hash: &str,
    split_exact: bool,
    keep_rejected: bool,
) -> Result<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (accepted, rejected): (Vec<&QaPair>, Vec<&QaPair>) =
        pairs.iter().partition(|p| p.oracle_check == OracleCheck::Passed);
    if let Some(p) = accepted.iter().find(|p| p.split.is_none()) {
        return Err(Error::invalid(format!("pair in context {} has no split", p.context_id)));
    }
    let in_split = |s: Split| accepted.iter().copied().filter(move |p| p.split == Some(s));
    write_lines(&out_dir.join(TRAIN_FILE), in_split(Split::Train))?;
    write_lines(&out_dir.join(VALIDATION_FILE), in_split(Split::Validation))?;
    let rejected_path = out_dir.join(REJECTED_FILE);
    if keep_rejected {
        write_lines(&rejected_path, rejected.iter().copied())?;
    } else if rejected_path.exists() {
        fs::remove_file(&rejected_path).map_err(|e| Error::io(&rejected_path, e))?;
    }

    let mut m = Manifest {
        config_hash: config_hash.to_string(),
        train: in_split(Split::Train).count(),
        validation: in_split(Split::Validation).count(),
        rejected: rejected.len(),
        split_exact,
        ..Default::default()
    };
    for c in Category::ALL {
        m.per_category.insert(c.to_string(), 0);
    }
    for s in Style::ALL {
        m.per_style.insert(s.to_string(), 0);
    }
    let mut contexts: BTreeMap<Generator, BTreeSet<usize>> = BTreeMap::new();
    for g in [Generator::ModelA, Generator::ModelB] {
        m.per_generator.insert(g.as_str().into(), 0);
        contexts.insert(g, BTreeSet::new());
    }
    for p in &accepted {
        *m.per_category.entry(p.category.to_string()).or_default() += 1;
        *m.per_style.entry(p.style.to_string()).or_default() += 1;
        *m.per_generator.entry(p.generator.as_str().into()).or_default() += 1;
        contexts.entry(p.generator).or_default().insert(p.context_id);
        m.question_tokens_est += p.question.chars().count().div_ceil(4);
        m.answer_tokens_est += p.answer.chars().count().div_ceil(4);
    }
    let n_contexts: usize = contexts.values().map(BTreeSet::len).sum();
    for (g, ids) in &contexts {
        m.generator_contexts.insert(g.as_str().into(), ids.len());
        let share = if n_contexts == 0 { 0.0 } else { ids.len() as f64 / n_contexts as f64 };
        m.generator_context_share.insert(g.as_str().into(), (share * 1e4).round() / 1e4);
    }

    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&m)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(m)
}

/// Dataset lines as `(line index, pair)`; the index is the pair id used by evaluation.
pub fn read_dataset(path: &Path) -> Result<Vec<(usize, QaPair)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut slots: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let d: DatasetLine = serde_json::from_str(&line)
            .map_err(|e| Error::invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let slot = slots.entry(d.context_id).or_default();
        out.push((
            i,
            QaPair {
                context_id: d.context_id,
                slot_index: *slot,
                question: d.question,
                answer: d.answer,
                category: d.category,
                style: d.style,
                generator: d.generator,
                oracle_check: OracleCheck::Passed,
                split: None,
            },
        ));
        *slot += 1;
    }
    Ok(out)
}
