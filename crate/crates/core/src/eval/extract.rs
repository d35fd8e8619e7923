use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::oracle::Unit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractedNumber {
    pub value: f64,
    pub unit: Unit,
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?:(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?").expect("number regex")
    })
}

fn is_word_char(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

/// Numbers in order of appearance, with a unit when the next token names one.
///
/// Digits glued to a preceding letter (`Q1`, `o3`) are identifiers, not values.
/// A leading `-`, `+` or `−` is a sign only when it does not follow a word
/// character or digit, so ranges and dates (`10-12`, `2024-03-01`) stay positive.
pub fn extract_numbers(text: &str) -> Vec<ExtractedNumber> {
    let mut out = Vec::new();
    for m in number_re().find_iter(text) {
        let before = &text[..m.start()];
        let mut prev = before.chars().rev();
        let p1 = prev.next();
        if p1.is_some_and(is_word_char) || p1 == Some('.') {
            continue;
        }
        let mut sign = 1.0;
        if matches!(p1, Some('-') | Some('−') | Some('+')) {
            let p2 = prev.next();
            if !p2.is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '.') {
                if p1 != Some('+') {
                    sign = -1.0;
                }
            }
        }
        let digits: String = m.as_str().chars().filter(|&c| c != ',').collect();
        let Ok(v) = digits.parse::<f64>() else { continue };
        out.push(ExtractedNumber {
            value: sign * v,
            unit: unit_after(&text[m.end()..]),
        });
    }
    out
}

fn unit_after(rest: &str) -> Unit {
    let rest = rest.strip_prefix(' ').unwrap_or(rest);
    if rest.starts_with('°') {
        return Unit::Degrees;
    }
    let word: String = rest.chars().take_while(|c| c.is_alphabetic()).collect::<String>().to_lowercase();
    match word.as_str() {
        "knots" | "knot" | "kn" | "kt" | "kts" => Unit::Knots,
        "degrees" | "degree" | "deg" => Unit::Degrees,
        "nm" | "nmi" => Unit::Nm,
        "nautical" => Unit::Nm,
        "vessels" | "vessel" | "ships" | "ship" | "boats" | "boat" | "records" => Unit::Count,
        _ => Unit::None,
    }
}
