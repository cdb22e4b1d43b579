//! Exact binomial/Beta numerics, the fixed-sequence threshold search, and
//! the risk-decrease predictors.
//!
//! The threshold search scans a decreasing confidence grid and selects the
//! largest threshold whose one-sided exact binomial (Clopper–Pearson) upper
//! confidence limit on the conditional error rate stays within the risk
//! tolerance. The upper limit is computed as a Beta quantile; the binomial
//! tail itself is computed independently in log space so the two routes can
//! cross-check each other.

mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use special::{beta_quantile, normal_cdf};

/// One calibration observation: the model's confidence on a query and
/// whether its answer was correct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationItem {
    pub confidence: f64,
    pub correct: bool,
}

/// Parameters of the threshold search: risk tolerance, error level, and the
/// threshold grid (descending from `grid_max` in steps of `grid_step`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub alpha: f64,
    pub delta: f64,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default = "default_grid_max")]
    pub grid_max: f64,
}

fn default_grid_step() -> f64 {
    0.001
}

fn default_grid_max() -> f64 {
    0.999
}

impl CalibrationConfig {
    pub fn new(alpha: f64, delta: f64) -> Self {
        Self {
            alpha,
            delta,
            grid_step: default_grid_step(),
            grid_max: default_grid_max(),
        }
    }

    pub fn with_grid(mut self, grid_step: f64, grid_max: f64) -> Self {
        self.grid_step = grid_step;
        self.grid_max = grid_max;
        self
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let ok = self.alpha > 0.0
            && self.alpha < 1.0
            && self.delta > 0.0
            && self.delta < 1.0
            && self.grid_step > 0.0
            && self.grid_step <= self.grid_max
            && self.grid_max <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(CalibrationError::InvalidConfig(format!(
                "alpha={} delta={} grid_step={} grid_max={}",
                self.alpha, self.delta, self.grid_step, self.grid_max
            )))
        }
    }
}

/// One row of the threshold-search trace. `r_hat` and `r_hat_plus` are
/// absent when no calibration item reaches the threshold (`n == 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub lambda: f64,
    pub n: u64,
    pub x: u64,
    pub r_hat: Option<f64>,
    pub r_hat_plus: Option<f64>,
}

/// Result of the threshold search: the selected threshold and the scan
/// trace from the top of the grid down to the selected row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub threshold: f64,
    pub trace: Vec<TraceRow>,
    /// Set when the scanned upper bounds were not monotone along the grid,
    /// i.e. the bound decreased as the threshold decreased. The theory
    /// predictors assume monotonicity; the search itself does not.
    pub monotonicity_warning: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("no grid threshold satisfies the risk tolerance")]
    NoFeasibleThreshold { trace: Vec<TraceRow> },
    #[error("invalid calibration configuration: {0}")]
    InvalidConfig(String),
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("quantile argument {0} outside (0, 1)")]
    QuantileDomain(f64),
    #[error("invalid theory parameters: {0}")]
    InvalidTheoryParams(String),
}

/// Pr[Bin(n, p) <= x], computed as a log-space sum of binomial terms.
///
/// Exact conventions: 1 when `x >= n`, 0 when `x < 0`. Stable for n up to
/// 10^6; no Normal shortcut is taken anywhere on this path.
pub fn binomial_cdf(n: u64, p: f64, x: i64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "p must lie in [0, 1], got {p}");
    if x < 0 {
        return 0.0;
    }
    if x as u64 >= n {
        return 1.0;
    }
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0; // all mass at n, and x < n here
    }
    let x = x as u64;
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    // Online log-sum-exp over k = 0..=x with incrementally built log C(n, k).
    let mut ln_choose = 0.0_f64;
    let mut max_term = f64::NEG_INFINITY;
    let mut scaled_sum = 0.0_f64;
    for k in 0..=x {
        if k > 0 {
            ln_choose += ((n - k + 1) as f64 / k as f64).ln();
        }
        let term = ln_choose + k as f64 * ln_p + (n - k) as f64 * ln_q;
        if term > max_term {
            scaled_sum = scaled_sum * (max_term - term).exp() + 1.0;
            max_term = term;
        } else {
            scaled_sum += (term - max_term).exp();
        }
    }
    (max_term + scaled_sum.ln()).exp().min(1.0)
}

/// Standard Normal quantile Φ⁻¹(q), by bisection against the error-function
/// CDF. Absolute error below 1e-8.
pub fn normal_quantile(q: f64) -> Result<f64, CalibrationError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(CalibrationError::QuantileDomain(q));
    }
    let mut lo = -40.0_f64;
    let mut hi = 40.0_f64;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One-sided exact binomial upper confidence limit at level `1 - delta`:
/// the Beta(x+1, n-x) quantile at `1 - delta`, with the edge conventions
/// `1 - delta^(1/n)` at x = 0 (recovered by the quantile itself) and
/// exactly 1 at x = n.
pub fn cp_upper_bound(n: u64, x: u64, delta: f64) -> f64 {
    assert!(n >= 1, "n must be positive");
    assert!(x <= n, "x must not exceed n");
    assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    if x == n {
        return 1.0;
    }
    beta_quantile(1.0 - delta, (x + 1) as f64, (n - x) as f64)
}

/// Round to a decimal grid so that thresholds compare cleanly against
/// confidences parsed from decimal literals.
fn decimal_round(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

/// Fixed-sequence threshold search.
///
/// Scans the grid `{grid_max, grid_max - step, ..., step}` in decreasing
/// order. For each threshold it counts the items at or above it and the
/// wrong answers among them, forms the exact binomial upper bound on the
/// conditional error rate, and returns the first (largest) threshold with a
/// nonzero count whose bound is within `alpha`. Thresholds reached by no
/// item are recorded in the trace and skipped.
pub fn calibrate_threshold(
    items: &[CalibrationItem],
    config: &CalibrationConfig,
) -> Result<CalibrationOutcome, CalibrationError> {
    config.validate()?;
    if items.is_empty() {
        return Err(CalibrationError::EmptyCalibration);
    }

    // Sort once by descending confidence; the scan then absorbs items as the
    // threshold decreases instead of recounting per grid point.
    let mut sorted: Vec<&CalibrationItem> = items.iter().collect();
    sorted.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    let steps = ((config.grid_max - config.grid_step) / config.grid_step).round() as u64;
    let mut trace = Vec::new();
    let mut cursor = 0usize;
    let mut n = 0u64;
    let mut x = 0u64;
    let mut last_bound: Option<f64> = None;
    let mut monotonicity_warning = false;

    for i in 0..=steps {
        let lambda = decimal_round(config.grid_max - i as f64 * config.grid_step);
        while cursor < sorted.len() && sorted[cursor].confidence >= lambda {
            n += 1;
            if !sorted[cursor].correct {
                x += 1;
            }
            cursor += 1;
        }
        if n == 0 {
            trace.push(TraceRow {
                lambda,
                n: 0,
                x: 0,
                r_hat: None,
                r_hat_plus: None,
            });
            continue;
        }
        let r_hat = x as f64 / n as f64;
        let r_hat_plus = cp_upper_bound(n, x, config.delta);
        trace.push(TraceRow {
            lambda,
            n,
            x,
            r_hat: Some(r_hat),
            r_hat_plus: Some(r_hat_plus),
        });
        if let Some(prev) = last_bound {
            if r_hat_plus < prev - 1e-12 {
                monotonicity_warning = true;
            }
        }
        last_bound = Some(r_hat_plus);
        if r_hat_plus <= config.alpha {
            return Ok(CalibrationOutcome {
                threshold: lambda,
                trace,
                monotonicity_warning,
            });
        }
    }
    Err(CalibrationError::NoFeasibleThreshold { trace })
}

/// Parameters of the risk-decrease predictors: `n` queries originally pass
/// the threshold with `x` wrong among them; with strategies the counts
/// become `b*n` passing and `epsilon*x` wrong.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub n: u64,
    pub x: u64,
    pub delta: f64,
    pub epsilon: f64,
    pub b: f64,
}

impl TheoryParams {
    pub fn new(n: u64, x: u64, delta: f64, epsilon: f64, b: f64) -> Result<Self, CalibrationError> {
        let mut problems = Vec::new();
        if n == 0 {
            problems.push("n must be positive".to_string());
        }
        if x > n {
            problems.push(format!("x={x} exceeds n={n}"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            problems.push(format!("delta={delta} outside (0, 1)"));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            problems.push(format!("epsilon={epsilon} outside (0, 1]"));
        }
        if b < 1.0 {
            problems.push(format!("b={b} below 1"));
        }
        if epsilon * x as f64 > b * n as f64 {
            problems.push("epsilon * x exceeds b * n".to_string());
        }
        if problems.is_empty() {
            Ok(Self {
                n,
                x,
                delta,
                epsilon,
                b,
            })
        } else {
            Err(CalibrationError::InvalidTheoryParams(problems.join("; ")))
        }
    }
}

/// Risk bound after scaling: the exact Beta quantile at `1 - delta` with
/// parameters `round(eps*x) + 1` and `round(b*n) - round(eps*x)`. The scaled
/// counts are rounded to the nearest integers; see [`alpha_of_continuous`]
/// for the un-rounded variant used in approximation cross-checks.
pub fn alpha_of(params: &TheoryParams) -> f64 {
    let scaled_x = (params.epsilon * params.x as f64).round() as u64;
    let scaled_n = (params.b * params.n as f64).round() as u64;
    if scaled_x >= scaled_n {
        return 1.0;
    }
    beta_quantile(
        1.0 - params.delta,
        (scaled_x + 1) as f64,
        (scaled_n - scaled_x) as f64,
    )
}

/// [`alpha_of`] without integer rounding of the scaled counts.
pub fn alpha_of_continuous(params: &TheoryParams) -> f64 {
    let scaled_x = params.epsilon * params.x as f64;
    let scaled_n = params.b * params.n as f64;
    if scaled_n - scaled_x <= 0.0 {
        return 1.0;
    }
    beta_quantile(1.0 - params.delta, scaled_x + 1.0, scaled_n - scaled_x)
}

/// Normal approximation to the decrease `alpha(1,1) - alpha(eps,b)`:
/// the difference of the Beta means plus `z` times the difference of the
/// Beta standard deviations, with `z` the Normal quantile at `1 - delta`.
pub fn alpha_decrease_approx(params: &TheoryParams) -> f64 {
    let n = params.n as f64;
    let x = params.x as f64;
    let ex = params.epsilon * x;
    let bn = params.b * n;
    let z = normal_quantile(1.0 - params.delta).expect("delta validated in (0, 1)");
    let mean_diff = (x + 1.0) / (n + 1.0) - (ex + 1.0) / (bn + 1.0);
    let sd_base = ((x + 1.0) * (n - x) / ((n + 1.0).powi(2) * (n + 2.0))).sqrt();
    let sd_scaled = ((ex + 1.0) * (bn - ex) / ((bn + 1.0).powi(2) * (bn + 2.0))).sqrt();
    mean_diff + z * (sd_base - sd_scaled)
}

/// First-order (in `1 - epsilon`) approximation to the decrease
/// `alpha(1) - alpha(eps)` at unchanged coverage:
/// `(1 - eps) * [x/(n+1) + z/(2(n+1)sqrt(n+2)) * x(n-1-2x)/sqrt((x+1)(n-x))]`.
pub fn alpha_decrease_linear(n: u64, x: u64, delta: f64, epsilon: f64) -> f64 {
    assert!(n >= 1, "n must be positive");
    assert!(x <= n, "x must not exceed n");
    assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    assert!(epsilon > 0.0 && epsilon <= 1.0, "epsilon must lie in (0, 1]");
    if epsilon == 1.0 || x == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let xf = x as f64;
    let z = normal_quantile(1.0 - delta).expect("delta checked above");
    let mean_term = xf / (nf + 1.0);
    // The variance derivative is undefined at x = n; the mean term alone is
    // the first-order change there.
    let sd_term = if x == n {
        0.0
    } else {
        z / (2.0 * (nf + 1.0) * (nf + 2.0).sqrt()) * (xf * (nf - 1.0 - 2.0 * xf))
            / ((xf + 1.0) * (nf - xf)).sqrt()
    };
    (1.0 - epsilon) * (mean_term + sd_term)
}
