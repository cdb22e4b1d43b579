//! Evaluation metrics, token and monetary cost accounting, and pairwise
//! run comparison.
//!
//! Per-run metrics over a stream of `T` queries with `U` discarded:
//! pipeline accuracy `(C_w + C_s)/(T - U)`, weak accuracy
//! `C_w_total/(T - U)`, coverage `(T - U)/T`, strong call rate `N_s/T`, and
//! weak-correct-accepted `C_w/(T - U)`. Queries that errored are excluded
//! from every numerator and denominator except the total. Undefined ratios
//! are reported as absent, never as zero.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-million-token input/output prices for one backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Price {
    pub input: f64,
    pub output: f64,
}

/// Backend id → price table.
pub type Pricing = BTreeMap<String, Price>;

/// Token usage of one call or one query at one tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input: u64,
    pub output: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.input += other.input;
        self.output += other.output;
    }

    pub fn total(&self) -> u64 {
        self.input + self.output
    }
}

/// Running tallies for one tier of a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierTally {
    pub backend: String,
    /// Queries this tier processed (not raw API calls; a strong tier that
    /// both synthesizes a strategy and answers still counts one engagement).
    pub engagements: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

/// Running tallies for a whole stream.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StreamCounters {
    /// Total queries processed, including discarded and errored ones.
    pub total: u64,
    /// Queries every tier deferred on (discarded).
    pub uncovered: u64,
    /// Queries aborted by backend or embedding failures.
    pub errored: u64,
    /// First-tier engagements.
    pub weak_calls: u64,
    /// Final-tier engagements.
    pub strong_calls: u64,
    /// Covered queries answered correctly by the first tier and accepted.
    pub weak_correct_accepted: u64,
    /// Covered queries answered correctly by a later tier and accepted.
    pub strong_correct_accepted: u64,
    /// Covered queries whose first-tier answer was correct, accepted or not.
    pub weak_correct_total: u64,
    pub tiers: Vec<TierTally>,
}

impl StreamCounters {
    pub fn new(tier_backends: &[String]) -> Self {
        Self {
            tiers: tier_backends
                .iter()
                .map(|backend| TierTally {
                    backend: backend.clone(),
                    engagements: 0,
                    tokens_in: 0,
                    tokens_out: 0,
                })
                .collect(),
            ..Self::default()
        }
    }

    /// Covered queries: answered by some tier.
    pub fn covered(&self) -> u64 {
        self.total - self.uncovered - self.errored
    }

    pub fn tokens_total(&self) -> u64 {
        self.tiers.iter().map(|t| t.tokens_in + t.tokens_out).sum()
    }
}

/// The per-run metric set; absent fields mean the ratio was undefined.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "round4_opt")]
    pub pipeline_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "round4_opt")]
    pub weak_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "round4_opt")]
    pub coverage_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "round4_opt")]
    pub strong_call_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "round4_opt")]
    pub weak_correct_accepted: Option<f64>,
    pub tokens_total: u64,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "round4_opt")]
    pub cost_total: Option<f64>,
}

fn round4(v: f64) -> f64 {
    (v * 10_000.0).round() / 10_000.0
}

#[allow(clippy::trivially_copy_pass_by_ref)]
fn round4_opt<S: serde::Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_some(&round4(*x)),
        None => s.serialize_none(),
    }
}

/// Render a metric with exactly four fractional digits, `-` when absent.
pub fn render_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "-".to_string(),
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no price entry for backend '{0}'")]
    MissingPrice(String),
    #[error("streams differ: ours processed {ours} queries, baseline {baseline}")]
    StreamMismatch { ours: u64, baseline: u64 },
}

/// Evaluate the per-run metric formulas over final counters.
pub fn compute_metrics(counters: &StreamCounters) -> MetricReport {
    assert!(counters.total >= 1, "metrics require at least one query");
    let total = counters.total as f64;
    let covered = counters.covered();
    let ratio_over_covered = |num: u64| -> Option<f64> {
        (covered > 0).then(|| num as f64 / covered as f64)
    };
    MetricReport {
        pipeline_accuracy: ratio_over_covered(
            counters.weak_correct_accepted + counters.strong_correct_accepted,
        ),
        weak_accuracy: ratio_over_covered(counters.weak_correct_total),
        coverage_rate: Some(covered as f64 / total),
        strong_call_rate: Some(counters.strong_calls as f64 / total),
        weak_correct_accepted: ratio_over_covered(counters.weak_correct_accepted),
        tokens_total: counters.tokens_total(),
        cost_total: None,
    }
}

/// Total monetary cost: per tier, `tokens_in * price_in / 1e6 +
/// tokens_out * price_out / 1e6`.
pub fn compute_cost(counters: &StreamCounters, pricing: &Pricing) -> Result<f64, MetricsError> {
    let mut cost = 0.0;
    for tier in &counters.tiers {
        let price = pricing
            .get(&tier.backend)
            .ok_or_else(|| MetricsError::MissingPrice(tier.backend.clone()))?;
        cost += tier.tokens_in as f64 * price.input / 1e6;
        cost += tier.tokens_out as f64 * price.output / 1e6;
    }
    Ok(cost)
}

/// Relative reductions of this run versus a baseline run over the same
/// stream. Negative values are reported as-is; a regression is reportable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "round4_opt")]
    pub token_reduction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "round4_opt")]
    pub cost_reduction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "round4_opt")]
    pub strong_call_reduction: Option<f64>,
}

/// Compare a run against a baseline over the same stream: token, cost, and
/// strong-call reductions relative to the baseline. Ratios with a zero
/// baseline denominator are absent; a missing price entry on either side
/// leaves the cost reduction absent.
pub fn compare_runs(
    ours: (&StreamCounters, &Pricing),
    baseline: (&StreamCounters, &Pricing),
) -> Result<RunComparison, MetricsError> {
    let (ours_counters, ours_pricing) = ours;
    let (base_counters, base_pricing) = baseline;
    if ours_counters.total != base_counters.total {
        return Err(MetricsError::StreamMismatch {
            ours: ours_counters.total,
            baseline: base_counters.total,
        });
    }
    let tok_ours = ours_counters.tokens_total() as f64;
    let tok_base = base_counters.tokens_total() as f64;
    let token_reduction = (tok_base > 0.0).then(|| (tok_base - tok_ours) / tok_base);

    let cost_reduction = match (
        compute_cost(ours_counters, ours_pricing),
        compute_cost(base_counters, base_pricing),
    ) {
        (Ok(ours_cost), Ok(base_cost)) if base_cost > 0.0 => {
            Some((base_cost - ours_cost) / base_cost)
        }
        _ => None,
    };

    let strong_call_reduction = (base_counters.strong_calls > 0).then(|| {
        (base_counters.strong_calls as f64 - ours_counters.strong_calls as f64)
            / base_counters.strong_calls as f64
    });

    Ok(RunComparison {
        token_reduction,
        cost_reduction,
        strong_call_reduction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counters(total: u64, uncovered: u64, c_w: u64, c_s: u64) -> StreamCounters {
        StreamCounters {
            total,
            uncovered,
            weak_correct_accepted: c_w,
            strong_correct_accepted: c_s,
            weak_correct_total: c_w,
            weak_calls: total,
            strong_calls: 0,
            errored: 0,
            tiers: vec![
                TierTally {
                    backend: "weak".into(),
                    engagements: total,
                    tokens_in: 0,
                    tokens_out: 0,
                },
                TierTally {
                    backend: "strong".into(),
                    engagements: 0,
                    tokens_in: 0,
                    tokens_out: 0,
                },
            ],
        }
    }

    #[test]
    fn metric_formulas_hand_values() {
        let c = counters(10, 1, 3, 4);
        let report = compute_metrics(&c);
        assert_eq!(report.pipeline_accuracy, Some(7.0 / 9.0));
        assert_eq!(report.coverage_rate, Some(0.9));
        assert_eq!(render_metric(report.pipeline_accuracy), "0.7778");
        assert_eq!(render_metric(report.coverage_rate), "0.9000");
    }

    #[test]
    fn zero_strong_calls_is_rate_zero_not_absent() {
        let c = counters(10, 0, 5, 0);
        assert_eq!(compute_metrics(&c).strong_call_rate, Some(0.0));
    }

    #[test]
    fn fully_uncovered_stream_has_absent_accuracy() {
        let c = counters(5, 5, 0, 0);
        let report = compute_metrics(&c);
        assert_eq!(report.pipeline_accuracy, None);
        assert_eq!(report.weak_accuracy, None);
        assert_eq!(report.coverage_rate, Some(0.0));
        assert_eq!(render_metric(report.pipeline_accuracy), "-");
    }

    fn priced(tokens_in: u64, tokens_out: u64) -> (StreamCounters, Pricing) {
        let mut c = counters(4, 0, 2, 1);
        c.tiers[0].tokens_in = tokens_in;
        c.tiers[0].tokens_out = tokens_out;
        let mut pricing = Pricing::new();
        pricing.insert("weak".into(), Price { input: 0.5, output: 1.5 });
        pricing.insert("strong".into(), Price { input: 2.5, output: 10.0 });
        (c, pricing)
    }

    #[test]
    fn cost_unit_arithmetic() {
        let (c, pricing) = priced(1_000_000, 0);
        assert_eq!(compute_cost(&c, &pricing).unwrap(), 0.5);
        let (zero, pricing) = priced(0, 0);
        assert_eq!(compute_cost(&zero, &pricing).unwrap(), 0.0);
    }

    #[test]
    fn cost_requires_price_per_tier() {
        let (c, mut pricing) = priced(10, 10);
        pricing.remove("strong");
        assert_eq!(
            compute_cost(&c, &pricing).unwrap_err(),
            MetricsError::MissingPrice("strong".into())
        );
    }

    #[test]
    fn cost_is_additive_across_tiers() {
        let (mut c, pricing) = priced(1_000_000, 1_000_000);
        c.tiers[1].tokens_in = 2_000_000;
        c.tiers[1].tokens_out = 100_000;
        let expected = 0.5 + 1.5 + 2.0 * 2.5 + 0.1 * 10.0;
        assert!((compute_cost(&c, &pricing).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn comparison_token_reduction() {
        let (mut ours, pricing) = priced(50, 20); // 70 tokens
        let (mut base, _) = priced(80, 20); // 100 tokens
        ours.strong_calls = 1;
        base.strong_calls = 4;
        let cmp = compare_runs((&ours, &pricing), (&base, &pricing)).unwrap();
        assert_eq!(cmp.token_reduction, Some(0.30));
        assert_eq!(cmp.strong_call_reduction, Some(0.75));
    }

    #[test]
    fn comparison_of_identical_runs_is_zero() {
        let (mut c, pricing) = priced(100, 50);
        c.strong_calls = 3;
        let cmp = compare_runs((&c, &pricing), (&c, &pricing)).unwrap();
        assert_eq!(cmp.token_reduction, Some(0.0));
        assert_eq!(cmp.cost_reduction, Some(0.0));
        assert_eq!(cmp.strong_call_reduction, Some(0.0));
    }

    #[test]
    fn comparison_with_zero_baseline_calls_is_absent() {
        let (ours, pricing) = priced(50, 20);
        let (base, _) = priced(80, 20);
        let cmp = compare_runs((&ours, &pricing), (&base, &pricing)).unwrap();
        assert_eq!(cmp.strong_call_reduction, None);
    }

    #[test]
    fn comparison_rejects_different_streams() {
        let (ours, pricing) = priced(50, 20);
        let mut base = ours.clone();
        base.total += 1;
        assert_eq!(
            compare_runs((&ours, &pricing), (&base, &pricing)).unwrap_err(),
            MetricsError::StreamMismatch { ours: 4, baseline: 5 }
        );
    }

    #[test]
    fn weak_correct_accepted_never_exceeds_weak_accuracy() {
        let mut c = counters(10, 2, 3, 1);
        c.weak_correct_total = 5;
        let report = compute_metrics(&c);
        assert!(report.weak_correct_accepted.unwrap() <= report.weak_accuracy.unwrap());
    }
}
