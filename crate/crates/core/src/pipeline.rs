//! Per-query orchestration: strategy retrieval, prompt augmentation,
//! tier-by-tier generation and deferral, strategy synthesis, and repository
//! updates — plus the plain-cascade baseline, the random-retrieval
//! ablation, and the general N-tier form.
//!
//! A tier always generates before deciding, because its confidence is
//! computed from its own answer-span log-probabilities; deferred queries
//! therefore still spend (and count) weak-tier tokens. A deferred query
//! reaching the strongest tier is gated on the confidence of the
//! strategy-synthesis call: above the threshold the strategy is stored and
//! a separate call produces the served answer, below it the query is
//! discarded and the repository is untouched.
//!
//! One stream is one logical thread: steps are strictly sequential because
//! the repository state is order-dependent. Independent streams can run
//! concurrently, each owning its repositories and counters.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    synthesize_strategy, GenerationRequest, GenerationResponse, ModelBackend,
};
use crate::embedding::{Embedder, EmbedderConfig, EmbeddingVector};
use crate::metrics::{Pricing, StreamCounters, TokenUsage};
use crate::prompts::{strategy_based_prompt, strategy_free_prompt};
use crate::repo::{format_strategy_block, RetrievalResult, RetrievedStrategy, StrategyRepo};
use crate::types::{
    answers_match, compute_confidence, decide_deferral, wbc_compare, Answer, DeferralDecision,
    DeferralPolicy, ModelProfile, Query,
};

/// Execution mode of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Strategy retrieval, augmentation, synthesis, and storage.
    InterCascade,
    /// Plain cascade: no repository, no augmentation, no synthesis.
    Baseline,
    /// Like `InterCascade` but retrieval samples stored strategies
    /// uniformly at random instead of by similarity.
    RandomStrategies,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::InterCascade => "inter_cascade",
            Mode::Baseline => "baseline",
            Mode::RandomStrategies => "random_strategies",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inter_cascade" => Ok(Mode::InterCascade),
            "baseline" => Ok(Mode::Baseline),
            "random_strategies" => Ok(Mode::RandomStrategies),
            other => Err(format!(
                "unknown mode '{other}' (expected inter_cascade, baseline, or random_strategies)"
            )),
        }
    }
}

/// One tier: which backend serves it, its deferral threshold (absent means
/// the tier always answers), and its expected performance/cost profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierConfig {
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub profile: ModelProfile,
}

impl TierConfig {
    pub fn policy(&self) -> DeferralPolicy {
        DeferralPolicy {
            threshold: self.threshold,
        }
    }
}

/// Declarative cascade configuration: ordered tiers (weakest first),
/// strategies per prompt, mode, seed, embedder, and the price table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeConfig {
    pub tiers: Vec<TierConfig>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub pricing: Pricing,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_k() -> usize {
    2
}

fn default_mode() -> Mode {
    Mode::InterCascade
}

fn default_max_tokens() -> u32 {
    512
}

impl CascadeConfig {
    /// Check structural invariants. Returns human-readable warnings for
    /// soft violations (consecutive tiers out of weaker-but-cheaper order);
    /// hard violations are errors.
    pub fn validate(&self) -> Result<Vec<String>, PipelineError> {
        if self.tiers.is_empty() {
            return Err(PipelineError::Config("no tiers configured".into()));
        }
        if self.k == 0 {
            return Err(PipelineError::Config("k must be at least 1".into()));
        }
        for tier in &self.tiers {
            if let Some(t) = tier.threshold {
                if !(0.0..=1.0).contains(&t) {
                    return Err(PipelineError::Config(format!(
                        "threshold {t} for backend '{}' outside [0, 1]",
                        tier.backend
                    )));
                }
            }
        }
        let mut warnings = Vec::new();
        for pair in self.tiers.windows(2) {
            if !wbc_compare(&pair[0].profile, &pair[1].profile) {
                warnings.push(format!(
                    "tier '{}' is not weaker-but-cheaper than tier '{}'",
                    pair[0].backend, pair[1].backend
                ));
            }
        }
        Ok(warnings)
    }
}

/// How a query left the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disposition {
    /// Some tier handled it locally.
    Answered { tier: usize },
    /// Every tier deferred; the query was dropped.
    Discarded,
    /// A backend or embedding failure aborted the step.
    Errored { message: String },
}

/// Everything recorded about one processed query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query_id: String,
    pub answered_by: Disposition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<Answer>,
    /// Whether the served answer matched the gold answer, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_correct: Option<bool>,
    /// Whether the first tier's answer matched the gold answer, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_answer_correct: Option<bool>,
    /// True iff some tier accepted (answered) the query.
    pub accepted: bool,
    /// Sequence numbers of the strategies in the first tier's prompt.
    pub strategies_used: Vec<u64>,
    /// Per-tier token usage for this query.
    pub tokens: Vec<TokenUsage>,
    /// Per-tier confidence, present for tiers that generated.
    pub tier_confidences: Vec<Option<f64>>,
}

impl QueryOutcome {
    pub fn is_answered(&self) -> bool {
        matches!(self.answered_by, Disposition::Answered { .. })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no backend registered under id '{0}'")]
    UnknownBackend(String),
    #[error(transparent)]
    Embedding(#[from] crate::embedding::EmbeddingError),
}

/// Output of a full stream run.
#[derive(Debug)]
pub struct StreamOutput {
    pub outcomes: Vec<QueryOutcome>,
    pub counters: StreamCounters,
    /// One repository per non-final tier (empty in baseline mode).
    pub repos: Vec<StrategyRepo>,
}

/// A configured cascade, ready to run streams.
pub struct Cascade {
    config: CascadeConfig,
    backends: Vec<Arc<dyn ModelBackend>>,
    embedder: Embedder,
}

impl Cascade {
    /// Wire the configuration to concrete backends. Returns the cascade and
    /// any soft validation warnings.
    pub fn new(
        config: CascadeConfig,
        registry: &std::collections::BTreeMap<String, Arc<dyn ModelBackend>>,
    ) -> Result<(Self, Vec<String>), PipelineError> {
        let warnings = config.validate()?;
        let mut backends = Vec::with_capacity(config.tiers.len());
        for tier in &config.tiers {
            let backend = registry
                .get(&tier.backend)
                .ok_or_else(|| PipelineError::UnknownBackend(tier.backend.clone()))?;
            backends.push(Arc::clone(backend));
        }
        let embedder = Embedder::from_config(&config.embedder)?;
        Ok((
            Self {
                config,
                backends,
                embedder,
            },
            warnings,
        ))
    }

    pub fn config(&self) -> &CascadeConfig {
        &self.config
    }

    /// Start a fresh session: empty repositories, zeroed counters, seeded
    /// sampler.
    pub fn session(&self) -> StreamSession<'_> {
        let repo_count = self.config.tiers.len().saturating_sub(1);
        let repos = (0..repo_count)
            .map(|_| StrategyRepo::new(self.embedder.dimension()))
            .collect();
        self.session_with_repos(repos)
            .expect("fresh repositories match the embedder dimension")
    }

    /// Start a session from pre-loaded repositories (one per non-final tier).
    pub fn session_with_repos(
        &self,
        repos: Vec<StrategyRepo>,
    ) -> Result<StreamSession<'_>, PipelineError> {
        let expected = self.config.tiers.len().saturating_sub(1);
        if repos.len() != expected {
            return Err(PipelineError::Config(format!(
                "expected {expected} repositories, got {}",
                repos.len()
            )));
        }
        for repo in &repos {
            if repo.dimension() != self.embedder.dimension() {
                return Err(PipelineError::Config(format!(
                    "repository dimension {} does not match embedder dimension {}",
                    repo.dimension(),
                    self.embedder.dimension()
                )));
            }
        }
        let tier_backends: Vec<String> = self
            .config
            .tiers
            .iter()
            .map(|t| t.backend.clone())
            .collect();
        Ok(StreamSession {
            cascade: self,
            repos,
            counters: StreamCounters::new(&tier_backends),
            rng: ChaCha12Rng::seed_from_u64(self.config.seed),
        })
    }

    /// Process a whole stream strictly in order. Deterministic given the
    /// seed and deterministic backends; per-query failures become errored
    /// outcomes, only configuration problems abort.
    pub fn run_stream(&self, queries: &[Query]) -> Result<StreamOutput, PipelineError> {
        let mut ids = BTreeSet::new();
        for q in queries {
            if q.text.trim().is_empty() {
                return Err(PipelineError::Config(format!("query '{}' has empty text", q.id)));
            }
            if !ids.insert(&q.id) {
                return Err(PipelineError::Config(format!("duplicate query id '{}'", q.id)));
            }
        }
        let mut session = self.session();
        let outcomes = queries.iter().map(|q| session.step(q)).collect();
        let (counters, repos) = session.finish();
        Ok(StreamOutput {
            outcomes,
            counters,
            repos,
        })
    }
}

enum RetrievalKind {
    TopK,
    Random,
}

/// Mutable state of one running stream.
pub struct StreamSession<'a> {
    cascade: &'a Cascade,
    repos: Vec<StrategyRepo>,
    counters: StreamCounters,
    rng: ChaCha12Rng,
}

/// Per-step scratch shared between the happy path and the error path, so
/// tokens already spent survive an abort.
struct StepScratch {
    tokens: Vec<TokenUsage>,
    tier_confidences: Vec<Option<f64>>,
    strategies_used: Vec<u64>,
    weak_correct: Option<bool>,
}

impl StepScratch {
    fn new(tiers: usize) -> Self {
        Self {
            tokens: vec![TokenUsage::default(); tiers],
            tier_confidences: vec![None; tiers],
            strategies_used: Vec::new(),
            weak_correct: None,
        }
    }
}

impl<'a> StreamSession<'a> {
    pub fn counters(&self) -> &StreamCounters {
        &self.counters
    }

    pub fn repos(&self) -> &[StrategyRepo] {
        &self.repos
    }

    pub fn finish(self) -> (StreamCounters, Vec<StrategyRepo>) {
        (self.counters, self.repos)
    }

    /// Process one query in the session's configured mode.
    pub fn step(&mut self, query: &Query) -> QueryOutcome {
        let tiers = self.cascade.config.tiers.len();
        match (self.cascade.config.mode, tiers) {
            (Mode::InterCascade, 2) => self.step_inter_cascade(query),
            (Mode::InterCascade, _) => self.step_general(query),
            (Mode::Baseline, _) => self.step_baseline(query),
            (Mode::RandomStrategies, 2) => self.step_random_variant(query),
            (Mode::RandomStrategies, _) => self.step_general_with(query, RetrievalKind::Random),
        }
    }

    /// Two-tier flow with similarity retrieval.
    pub fn step_inter_cascade(&mut self, query: &Query) -> QueryOutcome {
        self.two_tier(query, RetrievalKind::TopK)
    }

    /// Two-tier flow with uniform-random retrieval.
    pub fn step_random_variant(&mut self, query: &Query) -> QueryOutcome {
        self.two_tier(query, RetrievalKind::Random)
    }

    fn two_tier(&mut self, query: &Query, retrieval: RetrievalKind) -> QueryOutcome {
        assert_eq!(
            self.cascade.config.tiers.len(),
            2,
            "two-tier steps require exactly two tiers"
        );
        let mut scratch = StepScratch::new(2);
        let result = self.two_tier_body(query, retrieval, &mut scratch);
        self.seal(query, scratch, result)
    }

    fn two_tier_body(
        &mut self,
        query: &Query,
        retrieval: RetrievalKind,
        scratch: &mut StepScratch,
    ) -> Result<(Disposition, Option<GenerationResponse>), String> {
        let embedding = self
            .cascade
            .embedder
            .embed(&query.text)
            .map_err(|e| e.to_string())?;
        let retrieved = self.retrieve(0, &embedding, &retrieval);
        scratch.strategies_used = retrieved.seqs();
        let prompt = augmented_prompt(&retrieved, &query.text);

        self.counters.tiers[0].engagements += 1;
        self.counters.weak_calls += 1;
        let weak = self.generate(0, &prompt, scratch)?;
        let weak_confidence = compute_confidence(&weak.answer).map_err(|e| e.to_string())?;
        scratch.tier_confidences[0] = Some(weak_confidence.value());
        scratch.weak_correct = correctness(query, &weak.answer);
        if decide_deferral(weak_confidence, &self.policy(0)) == DeferralDecision::HandleLocally {
            return Ok((Disposition::Answered { tier: 0 }, Some(weak)));
        }

        self.counters.tiers[1].engagements += 1;
        self.counters.strong_calls += 1;
        let synthesis = synthesize_strategy(
            &*self.cascade.backends[1],
            query,
            self.cascade.config.max_tokens,
        )
        .map_err(|e| e.to_string())?;
        self.tally(1, &synthesis.response.answer, scratch);
        scratch.tier_confidences[1] = Some(synthesis.confidence.value());
        if decide_deferral(synthesis.confidence, &self.policy(1)) == DeferralDecision::Defer {
            return Ok((Disposition::Discarded, None));
        }
        self.repos[0]
            .insert(
                query.text.clone(),
                synthesis.strategy,
                synthesis.confidence,
                embedding,
            )
            .map_err(|e| e.to_string())?;
        // The served answer comes from a separate call; synthesis happened
        // first, and both are charged to the strong tier.
        let served = self.generate(1, &strategy_free_prompt(&query.text), scratch)?;
        Ok((Disposition::Answered { tier: 1 }, Some(served)))
    }

    /// Plain cascade over any number of tiers: strategy-free prompts,
    /// sequential deferral, discard at the end. Never touches repositories.
    pub fn step_baseline(&mut self, query: &Query) -> QueryOutcome {
        let tiers = self.cascade.config.tiers.len();
        let mut scratch = StepScratch::new(tiers);
        let result = self.baseline_body(query, &mut scratch);
        self.seal(query, scratch, result)
    }

    fn baseline_body(
        &mut self,
        query: &Query,
        scratch: &mut StepScratch,
    ) -> Result<(Disposition, Option<GenerationResponse>), String> {
        let tiers = self.cascade.config.tiers.len();
        let prompt = strategy_free_prompt(&query.text);
        for tier in 0..tiers {
            self.engage(tier);
            let response = self.generate(tier, &prompt, scratch)?;
            let confidence = compute_confidence(&response.answer).map_err(|e| e.to_string())?;
            scratch.tier_confidences[tier] = Some(confidence.value());
            if tier == 0 {
                scratch.weak_correct = correctness(query, &response.answer);
            }
            if decide_deferral(confidence, &self.policy(tier)) == DeferralDecision::HandleLocally {
                return Ok((Disposition::Answered { tier }, Some(response)));
            }
        }
        Ok((Disposition::Discarded, None))
    }

    /// General N-tier flow: every non-final tier retrieves from its own
    /// repository; a tier above the first that answers synthesizes one
    /// strategy and stores it in every lower tier's repository; the final
    /// tier never retrieves and discards on deferral.
    pub fn step_general(&mut self, query: &Query) -> QueryOutcome {
        self.step_general_with(query, RetrievalKind::TopK)
    }

    fn step_general_with(&mut self, query: &Query, retrieval: RetrievalKind) -> QueryOutcome {
        let tiers = self.cascade.config.tiers.len();
        assert!(tiers >= 2, "the general cascade requires at least two tiers");
        let mut scratch = StepScratch::new(tiers);
        let result = self.general_body(query, retrieval, &mut scratch);
        self.seal(query, scratch, result)
    }

    fn general_body(
        &mut self,
        query: &Query,
        retrieval: RetrievalKind,
        scratch: &mut StepScratch,
    ) -> Result<(Disposition, Option<GenerationResponse>), String> {
        let tiers = self.cascade.config.tiers.len();
        let embedding = self
            .cascade
            .embedder
            .embed(&query.text)
            .map_err(|e| e.to_string())?;
        for tier in 0..tiers {
            let is_final = tier == tiers - 1;
            let prompt = if is_final {
                strategy_free_prompt(&query.text)
            } else {
                let retrieved = self.retrieve(tier, &embedding, &retrieval);
                if tier == 0 {
                    scratch.strategies_used = retrieved.seqs();
                }
                augmented_prompt(&retrieved, &query.text)
            };
            self.engage(tier);
            let response = self.generate(tier, &prompt, scratch)?;
            let confidence = compute_confidence(&response.answer).map_err(|e| e.to_string())?;
            scratch.tier_confidences[tier] = Some(confidence.value());
            if tier == 0 {
                scratch.weak_correct = correctness(query, &response.answer);
            }
            if decide_deferral(confidence, &self.policy(tier)) == DeferralDecision::HandleLocally {
                if tier >= 1 {
                    let synthesis = synthesize_strategy(
                        &*self.cascade.backends[tier],
                        query,
                        self.cascade.config.max_tokens,
                    )
                    .map_err(|e| e.to_string())?;
                    self.tally(tier, &synthesis.response.answer, scratch);
                    for lower in 0..tier {
                        self.repos[lower]
                            .insert(
                                query.text.clone(),
                                synthesis.strategy.clone(),
                                synthesis.confidence,
                                embedding.clone(),
                            )
                            .map_err(|e| e.to_string())?;
                    }
                }
                return Ok((Disposition::Answered { tier }, Some(response)));
            }
        }
        Ok((Disposition::Discarded, None))
    }

    fn retrieve(
        &mut self,
        tier: usize,
        embedding: &EmbeddingVector,
        kind: &RetrievalKind,
    ) -> RetrievalResult {
        let k = self.cascade.config.k;
        let repo = &self.repos[tier];
        if repo.is_empty() {
            return RetrievalResult::empty();
        }
        match kind {
            RetrievalKind::TopK => repo.top_k(embedding, k),
            RetrievalKind::Random => {
                let take = k.min(repo.len());
                let picked = rand::seq::index::sample(&mut self.rng, repo.len(), take);
                let mut entries: Vec<RetrievedStrategy> = picked
                    .into_iter()
                    .map(|idx| {
                        let record = repo.records()[idx].clone();
                        let similarity =
                            crate::embedding::cosine_similarity(embedding, &record.embedding)
                                .expect("repository embeddings share the configured dimension");
                        RetrievedStrategy { record, similarity }
                    })
                    .collect();
                entries.sort_by(|a, b| {
                    b.similarity
                        .total_cmp(&a.similarity)
                        .then(a.record.seq.cmp(&b.record.seq))
                });
                RetrievalResult { entries }
            }
        }
    }

    fn policy(&self, tier: usize) -> DeferralPolicy {
        self.cascade.config.tiers[tier].policy()
    }

    fn engage(&mut self, tier: usize) {
        self.counters.tiers[tier].engagements += 1;
        if tier == 0 {
            self.counters.weak_calls += 1;
        }
        if tier == self.cascade.config.tiers.len() - 1 {
            self.counters.strong_calls += 1;
        }
    }

    fn generate(
        &mut self,
        tier: usize,
        prompt: &str,
        scratch: &mut StepScratch,
    ) -> Result<GenerationResponse, String> {
        let request = GenerationRequest::new(prompt, self.cascade.config.max_tokens);
        let response = self.cascade.backends[tier]
            .generate(&request)
            .map_err(|e| e.to_string())?;
        self.tally(tier, &response.answer, scratch);
        Ok(response)
    }

    fn tally(&mut self, tier: usize, answer: &Answer, scratch: &mut StepScratch) {
        let usage = TokenUsage {
            input: answer.token_count_in,
            output: answer.token_count_out,
        };
        scratch.tokens[tier].add(usage);
        self.counters.tiers[tier].tokens_in += usage.input;
        self.counters.tiers[tier].tokens_out += usage.output;
    }

    /// Turn a step body's result into the outcome and update the stream
    /// tallies.
    fn seal(
        &mut self,
        query: &Query,
        scratch: StepScratch,
        result: Result<(Disposition, Option<GenerationResponse>), String>,
    ) -> QueryOutcome {
        let (disposition, response) = match result {
            Ok(pair) => pair,
            Err(message) => (Disposition::Errored { message }, None),
        };
        let answer = response.map(|r| r.answer);
        let answer_correct = match (&disposition, &answer) {
            (Disposition::Answered { .. }, Some(a)) => query
                .gold_answer
                .as_deref()
                .map(|gold| answers_match(&a.text, gold)),
            _ => None,
        };
        let outcome = QueryOutcome {
            query_id: query.id.clone(),
            accepted: matches!(disposition, Disposition::Answered { .. }),
            final_answer: answer,
            answer_correct,
            weak_answer_correct: scratch.weak_correct,
            answered_by: disposition,
            strategies_used: scratch.strategies_used,
            tokens: scratch.tokens,
            tier_confidences: scratch.tier_confidences,
        };

        self.counters.total += 1;
        match &outcome.answered_by {
            Disposition::Answered { tier } => {
                if outcome.answer_correct == Some(true) {
                    if *tier == 0 {
                        self.counters.weak_correct_accepted += 1;
                    } else {
                        self.counters.strong_correct_accepted += 1;
                    }
                }
                if outcome.weak_answer_correct == Some(true) {
                    self.counters.weak_correct_total += 1;
                }
            }
            Disposition::Discarded => self.counters.uncovered += 1,
            Disposition::Errored { .. } => self.counters.errored += 1,
        }
        outcome
    }
}

fn augmented_prompt(retrieved: &RetrievalResult, question: &str) -> String {
    if retrieved.is_empty() {
        strategy_free_prompt(question)
    } else {
        strategy_based_prompt(&format_strategy_block(retrieved), question)
    }
}

fn correctness(query: &Query, answer: &Answer) -> Option<bool> {
    query
        .gold_answer
        .as_deref()
        .map(|gold| answers_match(&answer.text, gold))
}
