//! Calibrated multi-tier LLM cascade engine with a reusable strategy
//! repository.
//!
//! A stream of queries flows through an ordered sequence of model tiers,
//! weakest and cheapest first. Each tier answers when the confidence of its
//! own generation clears a threshold and defers otherwise. When a stronger
//! tier resolves a deferred query it also distills a reusable
//! problem-solving strategy; stored strategies are retrieved by embedding
//! similarity and prepended to future prompts, so the weaker tiers improve
//! online without fine-tuning.
//!
//! The [`calibration`] module provides the statistical machinery that makes
//! the thresholds auditable: exact binomial (Clopper–Pearson) upper bounds
//! on conditional risk, a fixed-sequence threshold search, and predictors
//! for how the certified risk drops as strategies improve the weak tier.

pub mod backends;
pub mod calibration;
pub mod embedding;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod repo;
pub mod types;

pub use embedding::{EmbedderConfig, EmbeddingVector};
pub use metrics::{MetricReport, Price, Pricing, StreamCounters};
pub use pipeline::{Cascade, CascadeConfig, Mode, QueryOutcome, TierConfig};
pub use repo::{StrategyRecord, StrategyRepo};
pub use types::{
    Answer, ConfidenceScore, DeferralDecision, DeferralPolicy, ModelProfile, Query, Strategy,
};
