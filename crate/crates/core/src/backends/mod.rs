//! The model-backend contract: generation with per-token log-probabilities,
//! strategy synthesis, tagged-output parsing, and offline token counting.
//!
//! Two implementations ship here: a deterministic scripted backend for
//! simulation and tests, and an HTTP client for OpenAI-compatible chat
//! completion services.

mod http;
mod scripted;

pub use http::{HttpBackend, HttpBackendConfig};
pub use scripted::{ScriptedBackend, ScriptedRule};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::strategy_free_prompt;
use crate::types::{compute_confidence, Answer, ConfidenceScore, Query, Strategy};

pub const ANSWER_MARKER: &str = "[Answer]:";
pub const STRATEGY_MARKER: &str = "[Strategy]:";

/// A single generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub want_logprobs: bool,
    pub max_tokens: u32,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, max_tokens: u32) -> Self {
        let prompt = prompt.into();
        assert!(!prompt.trim().is_empty(), "prompt must be non-empty");
        Self {
            prompt,
            want_logprobs: true,
            max_tokens,
        }
    }
}

/// Full completion text plus the parsed answer span with its logprobs and
/// token counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub raw_text: String,
    pub answer: Answer,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend returned an empty completion")]
    Refusal,
    #[error("cannot parse model output: {0}")]
    Parse(String),
    #[error("logprobs were requested but are absent from the response")]
    MissingLogprobs,
}

/// Generation function of one model tier. Implementations must be safe for
/// concurrent calls on independent requests; the scripted backend is pure.
pub trait ModelBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError>;
}

/// Parsed `[Strategy]`/`[Answer]` sections. `answer` is `None` when the
/// model answered the literal `None` (the no-answer convention).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedOutput {
    pub strategy_text: String,
    pub answer: Option<String>,
}

impl TaggedOutput {
    /// The answer as prompt-renderable text (`None` stays literal).
    pub fn answer_text(&self) -> &str {
        self.answer.as_deref().unwrap_or("None")
    }
}

/// Extract the strategy and answer sections from a completion.
///
/// The answer is the trimmed text after the last `[Answer]:` marker; the
/// strategy is the text between the last `[Strategy]:` before that marker
/// and the marker itself (empty when the section is missing). A trailing
/// `%` is stripped from numeric answers and the literal `None` maps to the
/// explicit no-answer value.
pub fn parse_tagged_output(raw_text: &str) -> Result<TaggedOutput, BackendError> {
    let answer_at = raw_text
        .rfind(ANSWER_MARKER)
        .ok_or_else(|| BackendError::Parse(format!("missing {ANSWER_MARKER} section")))?;
    let answer_raw = raw_text[answer_at + ANSWER_MARKER.len()..].trim();

    let strategy_text = raw_text[..answer_at]
        .rfind(STRATEGY_MARKER)
        .map(|at| raw_text[at + STRATEGY_MARKER.len()..answer_at].trim().to_string())
        .unwrap_or_default();

    let answer = if answer_raw.eq_ignore_ascii_case("none") {
        None
    } else {
        Some(normalize_numeric_answer(answer_raw))
    };
    Ok(TaggedOutput {
        strategy_text,
        answer,
    })
}

fn normalize_numeric_answer(raw: &str) -> String {
    if let Some(stripped) = raw.strip_suffix('%') {
        let stripped = stripped.trim();
        if stripped.parse::<f64>().is_ok() {
            return stripped.to_string();
        }
    }
    raw.to_string()
}

/// Deterministic offline token count: one token per maximal alphanumeric
/// run plus one per standalone punctuation character. Whitespace separates
/// tokens and is never counted. Backends override these counts with
/// server-reported usage when available.
pub fn count_tokens(text: &str) -> u64 {
    let mut count = 0u64;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

/// Result of a strategy-synthesis call: the distilled strategy, the
/// confidence of the synthesized answer span, and the raw generation
/// (kept so callers can account for its tokens).
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub strategy: Strategy,
    pub confidence: ConfidenceScore,
    pub response: GenerationResponse,
}

/// Ask a backend to distill a strategy for `query`: build the strategy-free
/// prompt, generate, and parse the `[Strategy]`/`[Answer]` sections. Both
/// sections are required here; the strategy's question is the query text.
pub fn synthesize_strategy(
    backend: &dyn ModelBackend,
    query: &Query,
    max_tokens: u32,
) -> Result<Synthesis, BackendError> {
    let request = GenerationRequest::new(strategy_free_prompt(&query.text), max_tokens);
    let response = backend.generate(&request)?;
    let parsed = parse_tagged_output(&response.raw_text)?;
    if parsed.strategy_text.is_empty() {
        return Err(BackendError::Parse(format!(
            "missing {STRATEGY_MARKER} section"
        )));
    }
    let confidence = compute_confidence(&response.answer)
        .map_err(|e| BackendError::Parse(e.to_string()))?;
    let answer_text = parsed.answer_text().to_string();
    Ok(Synthesis {
        strategy: Strategy {
            question_text: query.text.clone(),
            strategy_text: parsed.strategy_text,
            answer_text,
        },
        confidence,
        response,
    })
}
