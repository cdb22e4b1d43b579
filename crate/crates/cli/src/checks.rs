//! Self-contained theory-validation checks: a Monte-Carlo verification of
//! the coverage guarantee and numeric grids for the risk-decrease
//! predictors. No backends or datasets are involved; synthetic models
//! define the ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use cascade_core::calibration::{
    alpha_decrease_approx, alpha_decrease_linear, alpha_of, calibrate_threshold,
    CalibrationConfig, CalibrationError, CalibrationItem, TheoryParams,
};

/// Monte-Carlo check of the calibration guarantee. A synthetic model is
/// correct with probability equal to its confidence, confidences uniform on
/// [0, 1]. Each replication calibrates a threshold and measures the
/// conditional error on a fresh test set; the guarantee promises the error
/// exceeds `alpha` in at most a `delta` fraction of replications, up to
/// binomial noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuaranteeConfig {
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default = "default_calibration_size")]
    pub calibration_size: u32,
    #[serde(default = "default_test_size")]
    pub test_size: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_replications() -> u32 {
    500
}
fn default_calibration_size() -> u32 {
    2000
}
fn default_test_size() -> u32 {
    5000
}
fn default_alpha() -> f64 {
    0.2
}
fn default_delta() -> f64 {
    0.1
}

impl Default for GuaranteeConfig {
    fn default() -> Self {
        Self {
            replications: default_replications(),
            calibration_size: default_calibration_size(),
            test_size: default_test_size(),
            alpha: default_alpha(),
            delta: default_delta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thm1aGridConfig {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_bs")]
    pub bs: Vec<f64>,
    #[serde(default = "default_ns")]
    pub ns: Vec<u64>,
    #[serde(default = "default_x_ratios")]
    pub x_ratios: Vec<f64>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
}

fn default_epsilons() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}
fn default_bs() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}
fn default_ns() -> Vec<u64> {
    vec![50, 200, 1000]
}
fn default_x_ratios() -> Vec<f64> {
    vec![0.05, 0.1, 0.3]
}
fn default_deltas() -> Vec<f64> {
    vec![0.1, 0.2]
}

impl Default for Thm1aGridConfig {
    fn default() -> Self {
        Self {
            epsilons: default_epsilons(),
            bs: default_bs(),
            ns: default_ns(),
            x_ratios: default_x_ratios(),
            deltas: default_deltas(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thm1bConfig {
    #[serde(default = "d1b_n")]
    pub n: u64,
    #[serde(default = "d1b_x")]
    pub x: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "d1b_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d1b_b")]
    pub b: f64,
    #[serde(default = "d1b_tolerance")]
    pub tolerance: f64,
}

fn d1b_n() -> u64 {
    10_000
}
fn d1b_x() -> u64 {
    1_000
}
fn d1b_epsilon() -> f64 {
    0.5
}
fn d1b_b() -> f64 {
    2.0
}
fn d1b_tolerance() -> f64 {
    0.005
}

impl Default for Thm1bConfig {
    fn default() -> Self {
        Self {
            n: d1b_n(),
            x: d1b_x(),
            delta: default_delta(),
            epsilon: d1b_epsilon(),
            b: d1b_b(),
            tolerance: d1b_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thm2bConfig {
    #[serde(default = "d2b_n")]
    pub n: u64,
    #[serde(default = "d2b_x")]
    pub x: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "d2b_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "d2b_rel_tolerance")]
    pub rel_tolerance: f64,
}

fn d2b_n() -> u64 {
    10_000
}
fn d2b_x() -> u64 {
    500
}
fn d2b_epsilons() -> Vec<f64> {
    vec![0.90, 0.95, 0.99]
}
fn d2b_rel_tolerance() -> f64 {
    0.10
}

impl Default for Thm2bConfig {
    fn default() -> Self {
        Self {
            n: d2b_n(),
            x: d2b_x(),
            delta: default_delta(),
            epsilons: d2b_epsilons(),
            rel_tolerance: d2b_rel_tolerance(),
        }
    }
}

/// Configuration of the `simulate` command.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub seed: u64,
    pub guarantee: GuaranteeConfig,
    pub risk_grid: Thm1aGridConfig,
    pub risk_decrease: Thm1bConfig,
    pub coverage_decrease: Thm2bConfig,
}

/// One check's verdict: `observed` must stay within `bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub observed: f64,
    pub bound: f64,
    pub detail: String,
}

/// Run the Monte-Carlo coverage-guarantee check.
pub fn guarantee_check(config: &GuaranteeConfig, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let calibration_config = CalibrationConfig::new(config.alpha, config.delta);
    let mut violations = 0u32;
    let mut infeasible = 0u32;
    let mut lambda_sum = 0.0f64;
    let mut selected = 0u32;

    for _ in 0..config.replications {
        let items: Vec<CalibrationItem> = (0..config.calibration_size)
            .map(|_| {
                let confidence: f64 = rng.gen();
                let correct = rng.gen::<f64>() < confidence;
                CalibrationItem {
                    confidence,
                    correct,
                }
            })
            .collect();
        let lambda = match calibrate_threshold(&items, &calibration_config) {
            Ok(outcome) => outcome.threshold,
            Err(CalibrationError::NoFeasibleThreshold { .. }) => {
                // No threshold means no acceptance promise: nothing to violate.
                infeasible += 1;
                continue;
            }
            Err(e) => panic!("unexpected calibration failure: {e}"),
        };
        selected += 1;
        lambda_sum += lambda;

        let mut passing = 0u32;
        let mut wrong = 0u32;
        for _ in 0..config.test_size {
            let confidence: f64 = rng.gen();
            let correct = rng.gen::<f64>() < confidence;
            if confidence >= lambda {
                passing += 1;
                if !correct {
                    wrong += 1;
                }
            }
        }
        if passing > 0 && wrong as f64 / passing as f64 > config.alpha {
            violations += 1;
        }
    }

    let r = config.replications as f64;
    let bound = config.delta * r + 3.0 * (r * config.delta * (1.0 - config.delta)).sqrt();
    let mean_lambda = if selected > 0 {
        lambda_sum / selected as f64
    } else {
        f64::NAN
    };
    CheckOutcome {
        name: "guarantee_monte_carlo".into(),
        pass: (violations as f64) <= bound,
        observed: violations as f64,
        bound,
        detail: format!(
            "{violations} violations over {} replications ({infeasible} infeasible), mean selected threshold {mean_lambda:.4}",
            config.replications
        ),
    }
}

fn grid_x(n: u64, ratio: f64) -> u64 {
    (ratio * n as f64).round() as u64
}

/// Grid check that the certified risk never increases when strategies
/// reduce errors (`epsilon <= 1`) or raise coverage (`b >= 1`), at exact
/// Beta-quantile precision, for both the integer-rounded and continuous
/// parameter conventions.
pub fn risk_grid_check(config: &Thm1aGridConfig) -> CheckOutcome {
    let mut worst = f64::NEG_INFINITY;
    let mut cells = 0u64;
    for &n in &config.ns {
        for &ratio in &config.x_ratios {
            let x = grid_x(n, ratio);
            for &delta in &config.deltas {
                let baseline = TheoryParams::new(n, x, delta, 1.0, 1.0).expect("valid grid cell");
                let base_rounded = alpha_of(&baseline);
                let base_continuous = alpha_of_continuous_cell(n, x, delta, 1.0, 1.0);
                for &epsilon in &config.epsilons {
                    for &b in &config.bs {
                        let params =
                            TheoryParams::new(n, x, delta, epsilon, b).expect("valid grid cell");
                        worst = worst.max(alpha_of(&params) - base_rounded);
                        worst = worst.max(
                            alpha_of_continuous_cell(n, x, delta, epsilon, b) - base_continuous,
                        );
                        cells += 1;
                    }
                }
            }
        }
    }
    CheckOutcome {
        name: "risk_never_increases_grid".into(),
        pass: worst <= 1e-12,
        observed: worst,
        bound: 1e-12,
        detail: format!("worst increase over {cells} grid cells"),
    }
}

fn alpha_of_continuous_cell(n: u64, x: u64, delta: f64, epsilon: f64, b: f64) -> f64 {
    cascade_core::calibration::alpha_of_continuous(
        &TheoryParams::new(n, x, delta, epsilon, b).expect("valid grid cell"),
    )
}

/// Check the Normal approximation of the risk decrease against the exact
/// quantile difference.
pub fn risk_decrease_check(config: &Thm1bConfig) -> CheckOutcome {
    let baseline = TheoryParams::new(config.n, config.x, config.delta, 1.0, 1.0).expect("valid");
    let scaled =
        TheoryParams::new(config.n, config.x, config.delta, config.epsilon, config.b).expect("valid");
    let exact = alpha_of(&baseline) - alpha_of(&scaled);
    let approx = alpha_decrease_approx(&scaled);
    let error = (approx - exact).abs();
    CheckOutcome {
        name: "risk_decrease_normal_approx".into(),
        pass: error <= config.tolerance,
        observed: error,
        bound: config.tolerance,
        detail: format!("approx {approx:.6}, exact {exact:.6}"),
    }
}

/// Check the first-order linearity of the risk decrease at fixed coverage,
/// per epsilon, against the exact quantile difference.
pub fn coverage_decrease_checks(config: &Thm2bConfig) -> Vec<CheckOutcome> {
    let baseline = TheoryParams::new(config.n, config.x, config.delta, 1.0, 1.0).expect("valid");
    let base_alpha = alpha_of(&baseline);
    config
        .epsilons
        .iter()
        .map(|&epsilon| {
            let scaled = TheoryParams::new(config.n, config.x, config.delta, epsilon, 1.0)
                .expect("valid");
            let exact = base_alpha - alpha_of(&scaled);
            let linear = alpha_decrease_linear(config.n, config.x, config.delta, epsilon);
            let (observed, pass) = if exact == 0.0 {
                (linear.abs(), linear == 0.0)
            } else {
                let rel = (linear - exact).abs() / exact.abs();
                (rel, rel <= config.rel_tolerance)
            };
            CheckOutcome {
                name: format!("risk_decrease_linear_eps_{epsilon}"),
                pass,
                observed,
                bound: config.rel_tolerance,
                detail: format!("linear {linear:.6}, exact {exact:.6}"),
            }
        })
        .collect()
}

/// Run every check in order.
pub fn run_all(config: &SimulateConfig) -> Vec<CheckOutcome> {
    let mut outcomes = vec![
        guarantee_check(&config.guarantee, config.seed),
        risk_grid_check(&config.risk_grid),
        risk_decrease_check(&config.risk_decrease),
    ];
    outcomes.extend(coverage_decrease_checks(&config.coverage_decrease));
    outcomes
}
