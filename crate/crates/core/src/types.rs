//! Domain vocabulary shared by every module: queries, answers, strategies,
//! confidence scores, deferral decisions, and the weaker-but-cheaper order
//! on model profiles.
//!
//! Everything here is an immutable value; the operations are pure functions
//! and safe to call from any number of threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single input query, optionally carrying a gold answer for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            gold_answer: None,
        }
    }

    pub fn with_gold(mut self, gold: impl Into<String>) -> Self {
        self.gold_answer = Some(gold.into());
        self
    }
}

/// A generated answer: the parsed answer-span text, the natural-log
/// probabilities of the answer-span tokens, and the token counts of the
/// full call that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub token_logprobs: Vec<f64>,
    pub token_count_in: u64,
    pub token_count_out: u64,
}

/// One problem-solving strategy: a solved question, the generalized approach,
/// and the answer it produced. Renders into the `[Question]`/`[Strategy]`/
/// `[Answer]` block format used in prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub question_text: String,
    pub strategy_text: String,
    pub answer_text: String,
}

impl Strategy {
    /// Render this strategy as the numbered prompt block `index` (1-based).
    pub fn render_block(&self, index: usize) -> String {
        format!(
            "{index}. [Question]: {}\n[Strategy]: {}\n[Answer]: {}",
            self.question_text, self.strategy_text, self.answer_text
        )
    }
}

/// A confidence score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfidenceScore(f64);

impl ConfidenceScore {
    /// Build a score, clamping to `[0, 1]`. Panics on NaN.
    pub fn new(value: f64) -> Self {
        assert!(!value.is_nan(), "confidence score must not be NaN");
        Self(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Per-tier deferral policy. An absent threshold means the tier always
/// answers (the "no threshold is applied" configuration for a final tier).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DeferralPolicy {
    pub threshold: Option<f64>,
}

impl DeferralPolicy {
    pub fn with_threshold(threshold: f64) -> Self {
        assert!(
            (0.0..=1.0).contains(&threshold),
            "deferral threshold must lie in [0, 1]"
        );
        Self {
            threshold: Some(threshold),
        }
    }

    pub fn always_answer() -> Self {
        Self { threshold: None }
    }
}

/// Outcome of a deferral decision: handle the query locally or forward it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeferralDecision {
    HandleLocally,
    Defer,
}

impl DeferralDecision {
    pub fn is_defer(self) -> bool {
        matches!(self, DeferralDecision::Defer)
    }
}

/// Expected accuracy and per-query cost of a model on the task distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub perf: f64,
    pub cost: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfidenceError {
    #[error("answer span contains no tokens")]
    EmptyAnswerSpan,
}

/// Length-normalized token probability of the answer span: the geometric
/// mean of the answer-span token probabilities, `exp(mean(logprobs))`.
pub fn compute_confidence(answer: &Answer) -> Result<ConfidenceScore, ConfidenceError> {
    if answer.token_logprobs.is_empty() {
        return Err(ConfidenceError::EmptyAnswerSpan);
    }
    let mean = answer.token_logprobs.iter().sum::<f64>() / answer.token_logprobs.len() as f64;
    Ok(ConfidenceScore::new(mean.exp().min(1.0)))
}

/// Threshold rule: handle locally when the confidence clears the threshold
/// (boundary inclusive) or when no threshold is configured; defer otherwise.
pub fn decide_deferral(confidence: ConfidenceScore, policy: &DeferralPolicy) -> DeferralDecision {
    match policy.threshold {
        Some(threshold) if confidence.value() < threshold => DeferralDecision::Defer,
        _ => DeferralDecision::HandleLocally,
    }
}

/// "Weaker but cheaper" partial order: true iff `a` has both lower-or-equal
/// performance and lower-or-equal cost than `b`.
pub fn wbc_compare(a: &ModelProfile, b: &ModelProfile) -> bool {
    a.perf <= b.perf && a.cost <= b.cost
}

/// Compare a produced answer against a gold answer.
///
/// Both sides are trimmed and a trailing `%` on a numeric value is dropped;
/// values that parse as numbers are compared numerically, everything else
/// case-insensitively.
pub fn answers_match(candidate: &str, gold: &str) -> bool {
    let a = normalize_answer(candidate);
    let b = normalize_answer(gold);
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => {
            let scale = 1.0_f64.max(x.abs()).max(y.abs());
            (x - y).abs() <= 1e-9 * scale
        }
        _ => a.eq_ignore_ascii_case(&b),
    }
}

fn normalize_answer(s: &str) -> String {
    let t = s.trim();
    if let Some(stripped) = t.strip_suffix('%') {
        let stripped = stripped.trim();
        if stripped.parse::<f64>().is_ok() {
            return stripped.to_string();
        }
    }
    t.to_string()
}
