use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use serde_json::{json, Value};

use super::prompt::prompt_markers;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
}

/// A chat-completion backend; live HTTP and deterministic mocks are interchangeable.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String>;
}

/// Chat-completions over HTTP (`choices[0].message.content`).
pub struct HttpChatClient {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self {
            endpoint: endpoint.into(),
            api_key,
            agent,
        }
    }

    /// Key read from `env_var`; a missing variable means no auth header.
    pub fn from_env(endpoint: impl Into<String>, env_var: &str, timeout: Duration) -> Self {
        Self::new(endpoint, std::env::var(env_var).ok().filter(|k| !k.is_empty()), timeout)
    }

    pub fn request_body(request: &ChatRequest) -> Value {
        json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let mut call = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(Self::request_body(request))
            .map_err(|e| Error::Upstream(format!("{}: {e}", self.endpoint)))?;
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Upstream(format!("{}: unreadable response: {e}", self.endpoint)))?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Upstream(format!("{}: response has no choices[0].message.content", self.endpoint)))
    }
}

/// Expected answer text per (context id, question number).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnswerKey {
    answers: BTreeMap<(usize, usize), String>,
}

impl AnswerKey {
    pub fn insert(&mut self, context_id: usize, question: usize, answer: impl Into<String>) {
        self.answers.insert((context_id, question), answer.into());
    }

    pub fn get(&self, context_id: usize, question: usize) -> Option<&str> {
        self.answers.get(&(context_id, question)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

/// Answers each prompted question with the keyed reference text.
pub struct OracleEchoClient {
    pub key: AnswerKey,
}

impl ChatClient for OracleEchoClient {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let (ctx, questions) = prompt_markers(&request.prompt)
            .ok_or_else(|| Error::invalid("mock client: prompt has no context header"))?;
        let mut out = String::new();
        for q in questions {
            let a = self.key.get(ctx, q).unwrap_or("no answer available");
            let _ = writeln!(out, "A{q}: {a}");
        }
        Ok(out)
    }
}

/// Wraps a client and scales every number in its replies by (1 + ε).
///
/// Zeros become 1, so zero references cannot pass on absolute tolerance.
pub struct PerturbingClient<C> {
    pub inner: C,
    pub epsilon: f64,
}

impl<C: ChatClient> ChatClient for PerturbingClient<C> {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let reply = self.inner.complete(request)?;
        Ok(reply
            .lines()
            .map(|line| match line.split_once(": ") {
                Some((marker, body)) if marker.starts_with('A') => {
                    format!("{marker}: {}", perturb_numbers(body, self.epsilon))
                }
                _ => perturb_numbers(line, self.epsilon),
            })
            .collect::<Vec<_>>()
            .join("\n"))
    }
}

/// Replace each extracted number (sign included) with its perturbed value.
pub fn perturb_numbers(text: &str, epsilon: f64) -> String {
    let re = regex::Regex::new(r"-?(?:(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?")
        .expect("number regex");
    re.replace_all(text, |c: &regex::Captures| {
        let s: String = c[0].chars().filter(|&ch| ch != ',').collect();
        match s.parse::<f64>() {
            Ok(v) if v == 0.0 => "1".to_string(),
            Ok(v) => format!("{}", v * (1.0 + epsilon)),
            Err(_) => c[0].to_string(),
        }
    })
    .into_owned()
}

/// Always fails, as an endpoint that times out would.
pub struct FailingClient;

impl ChatClient for FailingClient {
    fn complete(&self, _request: &ChatRequest) -> Result<String> {
        Err(Error::Upstream("request timed out".into()))
    }
}
