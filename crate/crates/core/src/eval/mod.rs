//! Numeric-tolerance judging and accuracy reports.

mod extract;
mod judge;
mod report;

use serde::{Deserialize, Serialize};

pub use extract::{extract_numbers, ExtractedNumber};
pub use judge::{judge, EvalOutcome, Verdict};
pub use report::{
    evaluate, read_manual_csv, record_manual, report_csv, EvalReport, ManualLabel, ManualSummary,
    ResponseRecord, Score,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeConfig {
    /// Relative tolerance per reference number.
    pub rel_tol: f64,
    /// Absolute tolerance when the reference is exactly zero.
    pub zero_abs_tol: f64,
    /// Compare degree-tagged pairs on the circle instead of the number line.
    pub modular_degrees: bool,
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::Config("evaluation.rel_tol must be positive".into()));
        }
        if !(self.zero_abs_tol >= 0.0 && self.zero_abs_tol.is_finite()) {
            return Err(Error::Config("evaluation.zero_abs_tol must be non-negative".into()));
        }
        Ok(())
    }
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            rel_tol: 0.10,
            zero_abs_tol: 0.05,
            modular_degrees: false,
        }
    }
}
