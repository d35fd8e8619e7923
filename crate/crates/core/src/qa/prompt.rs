use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::oracle::Category;
use crate::sampler::{describe, VesselContext};

/// One numbered question as it appears in a prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptQuestion {
    /// 1-based marker (`Q3`, answered as `A3`).
    pub number: usize,
    pub category: Option<Category>,
    pub text: String,
}

const INSTRUCTIONS: &str = "You are a maritime intelligence analyst. Answer every question using only the AIS records listed after the questions.\n\
Reply with one block per question, starting with its marker, for example \"A1: ...\". State every numeric result explicitly, with units.";

/// Header, then the numbered questions, then one vessel-JSON line per record.
pub fn assemble_prompt(context: &VesselContext, questions: &[PromptQuestion]) -> Result<String> {
    if questions.is_empty() {
        return Err(Error::invalid("a prompt needs at least one question"));
    }
    let mut out = String::with_capacity(256 + context.record_count() * 160);
    let _ = writeln!(out, "{INSTRUCTIONS}");
    let _ = writeln!(out, "Context {}: {}.", context.context_id, describe(context));
    let _ = writeln!(out);
    let _ = writeln!(out, "Questions:");
    for q in questions {
        match q.category {
            Some(c) => {
                let _ = writeln!(out, "Q{} [{}]: {}", q.number, c, q.text);
            }
            None => {
                let _ = writeln!(out, "Q{}: {}", q.number, q.text);
            }
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Vessel records (one JSON object per report):");
    for line in context.vessel_lines() {
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

fn answer_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t*]*A(\d+)[ \t*]*[:.)][ \t]*").expect("answer regex"))
}

/// Split a structured reply into answers keyed by question number.
///
/// Text before the first marker is dropped; a repeated marker keeps the first block.
pub fn parse_answers(reply: &str) -> BTreeMap<usize, String> {
    let marks: Vec<(usize, usize, usize)> = answer_marker()
        .captures_iter(reply)
        .filter_map(|c| {
            let m = c.get(0)?;
            Some((c[1].parse().ok()?, m.start(), m.end()))
        })
        .collect();
    let mut out = BTreeMap::new();
    for (i, &(n, _, body_start)) in marks.iter().enumerate() {
        let end = marks.get(i + 1).map_or(reply.len(), |m| m.1);
        out.entry(n).or_insert_with(|| reply[body_start..end].trim().to_string());
    }
    out
}

fn context_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^Context (\d+):").expect("context regex"))
}

fn question_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^Q(\d+)(?: \[[a-z_]+\])?: ").expect("question regex"))
}

/// Context id and question numbers of a prompt built by [`assemble_prompt`].
pub(crate) fn prompt_markers(prompt: &str) -> Option<(usize, Vec<usize>)> {
    let ctx = context_marker().captures(prompt)?[1].parse().ok()?;
    let data_start = prompt.find("\n{").unwrap_or(prompt.len());
    let qs = question_marker()
        .captures_iter(&prompt[..data_start])
        .filter_map(|c| c[1].parse().ok())
        .collect();
    Some((ctx, qs))
}
