use serde::{Deserialize, Serialize};

use super::extract::{extract_numbers, ExtractedNumber};
use super::JudgeConfig;
use crate::oracle::Unit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub pair_id: usize,
    pub extracted_reference: Vec<f64>,
    pub extracted_response: Vec<f64>,
    /// (reference value, matched response value)
    pub matched: Vec<(f64, f64)>,
    pub verdict: Verdict,
    /// One entry per unmatched reference value, or a missing response.
    pub reasons: Vec<String>,
}

fn distance(reference: &ExtractedNumber, response: &ExtractedNumber, cfg: &JudgeConfig) -> f64 {
    let d = (response.value - reference.value).abs();
    if cfg.modular_degrees && reference.unit == Unit::Degrees && response.unit == Unit::Degrees {
        let m = d % 360.0;
        m.min(360.0 - m)
    } else {
        d
    }
}

fn allowed(reference: f64, cfg: &JudgeConfig) -> f64 {
    if reference == 0.0 {
        cfg.zero_abs_tol
    } else {
        cfg.rel_tol * reference.abs()
    }
}

/// Every reference number must be matched by a distinct response number.
///
/// References are taken in order; each takes the closest still-unused response
/// number (earliest on ties) and matches if that one is within tolerance. Since
/// the choice does not depend on the tolerance, passing at `t` implies passing
/// at every `t' > t`. Surplus response numbers are ignored.
pub fn judge(response: &str, reference: &str, cfg: &JudgeConfig) -> EvalOutcome {
    let refs = extract_numbers(reference);
    let resp = extract_numbers(response);
    let mut used = vec![false; resp.len()];
    let mut matched = Vec::new();
    let mut reasons = Vec::new();
    for r in &refs {
        let best = resp
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, x)| (k, distance(r, x, cfg)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        match best {
            Some((k, d)) if d <= allowed(r.value, cfg) => {
                used[k] = true;
                matched.push((r.value, resp[k].value));
            }
            Some((k, _)) => reasons.push(format!(
                "reference {} unmatched (closest unused {})",
                r.value, resp[k].value
            )),
            None => reasons.push(format!("reference {} unmatched (no numbers left)", r.value)),
        }
    }
    EvalOutcome {
        pair_id: 0,
        extracted_reference: refs.iter().map(|n| n.value).collect(),
        extracted_response: resp.iter().map(|n| n.value).collect(),
        matched,
        verdict: if reasons.is_empty() {
            Verdict::Correct
        } else {
            Verdict::Incorrect
        },
        reasons,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(rel_tol: f64) -> JudgeConfig {
        JudgeConfig {
            rel_tol,
            zero_abs_tol: 0.05,
            modular_degrees: false,
        }
    }

    #[test]
    fn exact_match() {
        assert_eq!(judge("3 vessels observed", "3 vessels", &cfg(0.1)).verdict, Verdict::Correct);
    }

    #[test]
    fn ten_percent_boundary() {
        assert_eq!(judge("109", "100", &cfg(0.1)).verdict, Verdict::Correct);
        assert_eq!(judge("111", "100", &cfg(0.1)).verdict, Verdict::Incorrect);
        assert_eq!(judge("91", "100", &cfg(0.1)).verdict, Verdict::Correct);
        assert_eq!(judge("89", "100", &cfg(0.1)).verdict, Verdict::Incorrect);
    }

    #[test]
    fn all_references_must_match() {
        let o = judge("speed 12 knots", "speed 12 knots, course 90°", &cfg(0.1));
        assert_eq!(o.verdict, Verdict::Incorrect);
        assert_eq!(o.reasons.len(), 1);
        assert_eq!(o.matched, vec![(12.0, 12.0)]);
    }

    #[test]
    fn zero_reference_uses_absolute_tolerance() {
        assert_eq!(judge("0.04", "0", &cfg(0.1)).verdict, Verdict::Correct);
        assert_eq!(judge("0.06", "0", &cfg(0.1)).verdict, Verdict::Incorrect);
    }

    #[test]
    fn response_numbers_used_once() {
        assert_eq!(judge("5 and more", "5 and 5", &cfg(0.1)).verdict, Verdict::Incorrect);
        assert_eq!(judge("5 then 5", "5 and 5", &cfg(0.1)).verdict, Verdict::Correct);
    }

    #[test]
    fn closest_unused_avoids_first_fit_trap() {
        // First-fit would give 11 to the reference 10 and strand 11.6.
        assert_eq!(judge("11 and 10", "10 and 11.6", &cfg(0.1)).verdict, Verdict::Correct);
    }

    #[test]
    fn modular_degrees_flag() {
        let mut c = cfg(0.1);
        assert_eq!(judge("heading 359°", "heading 1°", &c).verdict, Verdict::Incorrect);
        c.modular_degrees = true;
        c.rel_tol = 2.5;
        assert_eq!(judge("heading 359°", "heading 1°", &c).verdict, Verdict::Correct);
    }

    fn text(values: &[f64]) -> String {
        values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" and ")
    }

    proptest! {
        #[test]
        fn self_consistent(values in proptest::collection::vec(-1e4f64..1e4, 0..8)) {
            let t = text(&values);
            prop_assert_eq!(judge(&t, &t, &cfg(0.1)).verdict, Verdict::Correct);
        }

        #[test]
        fn monotone_in_tolerance(
            refs in proptest::collection::vec(-100f64..100.0, 1..6),
            noise in proptest::collection::vec(-0.3f64..0.3, 6),
            extra in proptest::collection::vec(-100f64..100.0, 0..3),
            t in 0.01f64..0.3,
            bump in 0.0f64..0.5,
        ) {
            let mut resp: Vec<f64> = refs.iter().zip(&noise).map(|(r, n)| r * (1.0 + n)).collect();
            resp.extend(extra);
            resp.reverse();
            let (rt, pt) = (text(&refs), text(&resp));
            if judge(&pt, &rt, &cfg(t)).verdict == Verdict::Correct {
                prop_assert_eq!(judge(&pt, &rt, &cfg(t + bump)).verdict, Verdict::Correct);
            }
        }

        #[test]
        fn scaling_past_tolerance_flips(
            refs in proptest::collection::vec(1f64..1000.0, 1..5),
            which in 0usize..5,
            t in 0.01f64..0.3,
            eps in 1e-6f64..0.5,
        ) {
            let k = which % refs.len();
            // Spread references apart so no other response can stand in.
            let refs: Vec<f64> = refs.iter().enumerate().map(|(i, r)| r + 10f64.powi(4 + i as i32)).collect();
            let mut resp = refs.clone();
            resp[k] *= 1.0 + t + eps;
            let o = judge(&text(&resp), &text(&refs), &cfg(t));
            prop_assert_eq!(o.verdict, Verdict::Incorrect);
            prop_assert_eq!(o.reasons.len(), 1);
        }
    }
}
