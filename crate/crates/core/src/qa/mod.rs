//! Multi-model synthetic Q&A generation with an oracle quality gate.

mod client;
mod dataset;
mod generate;
mod plan;
mod prompt;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use client::{
    perturb_numbers, AnswerKey, ChatClient, ChatRequest, FailingClient, HttpChatClient, OracleEchoClient,
    PerturbingClient,
};
pub use dataset::{
    emit_jsonl, read_dataset, split_dataset, DatasetLine, Manifest, SplitSummary, MANIFEST_FILE, REJECTED_FILE,
    TRAIN_FILE, VALIDATION_FILE,
};
pub use generate::{generate_all, generate_for_context, respond, ContextGeneration};
pub use plan::{instantiate_questions, plan_context, question_plan, PlannedQuestion, QuestionTemplates};
pub use prompt::{assemble_prompt, parse_answers, PromptQuestion};

use crate::error::{Error, Result};
use crate::oracle::Category;
use crate::sampler::Generator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    TechnicalAnalytical,
    OperationalCommand,
    Investigative,
    PracticalUser,
    Conversational,
}

impl Style {
    pub const ALL: [Style; 5] = [
        Style::TechnicalAnalytical,
        Style::OperationalCommand,
        Style::Investigative,
        Style::PracticalUser,
        Style::Conversational,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Style::TechnicalAnalytical => "technical_analytical",
            Style::OperationalCommand => "operational_command",
            Style::Investigative => "investigative",
            Style::PracticalUser => "practical_user",
            Style::Conversational => "conversational",
        }
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Style {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Style::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown style {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub category: Category,
    pub style: Style,
    pub slot_index: usize,
}

/// Questions per context.
pub const QUESTIONS_PER_CONTEXT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleCheck {
    Passed,
    Failed,
    /// No oracle answer could be computed for the question.
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub context_id: usize,
    pub slot_index: usize,
    pub question: String,
    pub answer: String,
    pub category: Category,
    pub style: Style,
    pub generator: Generator,
    pub oracle_check: OracleCheck,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub endpoint: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub concurrency: usize,
    pub train_fraction: f64,
    pub keep_rejected: bool,
    /// Replacement for the bundled question templates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    pub model_a: ModelSpec,
    pub model_b: ModelSpec,
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("generation.train_fraction must be in (0, 1)".into()));
        }
        if self.concurrency == 0 || self.timeout_secs == 0 {
            return Err(Error::Config("generation.concurrency and timeout_secs must be positive".into()));
        }
        for m in [&self.model_a, &self.model_b] {
            if m.name.is_empty() || !(0.0..=2.0).contains(&m.temperature) {
                return Err(Error::Config(format!("model {:?}: need a name and temperature in [0, 2]", m.name)));
            }
        }
        Ok(())
    }

    pub fn model(&self, g: Generator) -> &ModelSpec {
        match g {
            Generator::ModelA => &self.model_a,
            Generator::ModelB => &self.model_b,
        }
    }
}
