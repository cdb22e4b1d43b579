//! Deterministic scripted backend: a rule table standing in for a live
//! model, byte-identical across runs and platforms.
//!
//! Each rule fires when its matcher appears in the prompt's question
//! section. A rule carrying `requires_strategy_tag` additionally demands
//! that the tag appear in the prompt's retrieved-examples section — this is
//! how simulations express "the weak model solves this family only when a
//! relevant strategy is in context". When no rule fires the backend falls
//! back to a configured low-confidence default answer.

use serde::{Deserialize, Serialize};

use super::{
    count_tokens, parse_tagged_output, BackendError, GenerationRequest, GenerationResponse,
    ModelBackend, ANSWER_MARKER,
};
use crate::prompts::{QUESTION_LEAD_IN, STRATEGY_EXAMPLES_HEADER};
use crate::types::Answer;

const QUESTION_MARKER: &str = "[Question]:";

/// One scripted behavior: when `matcher` appears in the question being
/// asked (a template identifier or the exact query text), emit
/// `answer_text` with logprobs tuned to `correct_confidence` — but only at
/// that confidence if any `requires_strategy_tag` is satisfied by the
/// prompt's examples section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedRule {
    pub matcher: String,
    pub answer_text: String,
    pub correct_confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requires_strategy_tag: Option<String>,
}

/// Deterministic rule-table backend.
pub struct ScriptedBackend {
    rules: Vec<ScriptedRule>,
    default_answer: String,
    default_confidence: f64,
}

impl ScriptedBackend {
    pub fn new(
        rules: Vec<ScriptedRule>,
        default_answer: impl Into<String>,
        default_confidence: f64,
    ) -> Self {
        for rule in &rules {
            assert!(
                (0.0..=1.0).contains(&rule.correct_confidence),
                "rule confidence must lie in [0, 1]"
            );
            assert!(!rule.answer_text.is_empty(), "rule answer must be non-empty");
        }
        assert!(
            (0.0..=1.0).contains(&default_confidence),
            "default confidence must lie in [0, 1]"
        );
        let default_answer = default_answer.into();
        assert!(!default_answer.is_empty(), "default answer must be non-empty");
        Self {
            rules,
            default_answer,
            default_confidence,
        }
    }

    /// The question currently being asked: text after the last `[Question]:`.
    fn question_section(prompt: &str) -> &str {
        match prompt.rfind(QUESTION_MARKER) {
            Some(at) => &prompt[at + QUESTION_MARKER.len()..],
            None => prompt,
        }
    }

    /// The retrieved-examples section: present only in strategy-based
    /// prompts, ahead of the current-question lead-in.
    fn examples_section(prompt: &str) -> &str {
        if !prompt.starts_with(STRATEGY_EXAMPLES_HEADER) {
            return "";
        }
        match prompt.rfind(QUESTION_LEAD_IN) {
            Some(at) => &prompt[..at],
            None => prompt,
        }
    }

    fn pick(&self, prompt: &str) -> (String, String, f64) {
        let question = Self::question_section(prompt);
        let examples = Self::examples_section(prompt);
        for rule in &self.rules {
            if !question.contains(&rule.matcher) {
                continue;
            }
            let tag_ok = match &rule.requires_strategy_tag {
                Some(tag) => examples.contains(tag.as_str()),
                None => true,
            };
            if tag_ok {
                let rationale = format!(
                    "Recall the general method for '{}' problems and apply it step by step.",
                    rule.matcher
                );
                return (rationale, rule.answer_text.clone(), rule.correct_confidence);
            }
        }
        (
            "I am not sure about this problem family.".to_string(),
            self.default_answer.clone(),
            self.default_confidence,
        )
    }
}

impl ModelBackend for ScriptedBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let (rationale, answer_text, confidence) = self.pick(&request.prompt);
        let raw_text = format!("[Strategy]: {rationale}\n[Answer]: {answer_text}");
        let parsed = parse_tagged_output(&raw_text).expect("scripted output is well-formed");
        let span_start = raw_text.rfind(ANSWER_MARKER).expect("marker present") + ANSWER_MARKER.len();
        let span_tokens = count_tokens(&raw_text[span_start..]).max(1);
        let token_logprobs = if request.want_logprobs {
            vec![confidence.ln(); span_tokens as usize]
        } else {
            Vec::new()
        };
        Ok(GenerationResponse {
            answer: Answer {
                text: parsed.answer_text().to_string(),
                token_logprobs,
                token_count_in: count_tokens(&request.prompt),
                token_count_out: count_tokens(&raw_text),
            },
            raw_text,
        })
    }
}
