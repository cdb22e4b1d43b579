//! `report`: compare a strategy run against a baseline run over the same
//! stream — token, cost, and strong-call reductions plus side-by-side
//! metrics, in both machine-readable and human-readable form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cascade_core::metrics::{compare_runs, render_metric, MetricReport, Pricing, RunComparison, StreamCounters};

use crate::emit::{
    find_record, metrics_table, read_report_lines, HeaderRecord, MetricsRecord, ReportWriter,
};
use crate::error::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub record: String,
    pub total_queries: u64,
    #[serde(flatten)]
    pub comparison: RunComparison,
    pub ours: MetricReport,
    pub baseline: MetricReport,
}

struct LoadedRun {
    counters: StreamCounters,
    metrics: MetricReport,
    pricing: Pricing,
}

fn load_run(path: &Path) -> Result<LoadedRun, CliError> {
    let lines = read_report_lines(path)?;
    let header: HeaderRecord = find_record(&lines, "header", path)?;
    let metrics: MetricsRecord = find_record(&lines, "metrics", path)?;
    let pricing = header
        .config
        .as_ref()
        .and_then(|c| c.cascade.as_ref())
        .map(|c| c.pricing.clone())
        .unwrap_or_default();
    Ok(LoadedRun {
        counters: metrics.counters,
        metrics: metrics.metrics,
        pricing,
    })
}

pub fn cmd_report(
    ours_path: &Path,
    baseline_path: &Path,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let ours = load_run(ours_path)?;
    let baseline = load_run(baseline_path)?;

    let comparison = compare_runs(
        (&ours.counters, &ours.pricing),
        (&baseline.counters, &baseline.pricing),
    )?;

    let record = ComparisonRecord {
        record: "comparison".into(),
        total_queries: ours.counters.total,
        comparison: comparison.clone(),
        ours: ours.metrics.clone(),
        baseline: baseline.metrics.clone(),
    };

    let mut text = String::new();
    text.push_str(&format!(
        "comparison over {} queries\n",
        ours.counters.total
    ));
    text.push_str(&format!(
        "  token_reduction       {}\n",
        render_metric(comparison.token_reduction)
    ));
    text.push_str(&format!(
        "  cost_reduction        {}\n",
        render_metric(comparison.cost_reduction)
    ));
    text.push_str(&format!(
        "  strong_call_reduction {}\n",
        render_metric(comparison.strong_call_reduction)
    ));
    text.push_str(&metrics_table("ours", &ours.metrics));
    text.push_str(&metrics_table("baseline", &baseline.metrics));

    match output {
        Some(path) => {
            let mut writer = ReportWriter::create(path)?;
            writer.write_line(&HeaderRecord::new("report", None, None))?;
            writer.write_line(&record)?;
            writer.finish()?;
            println!("{text}");
            println!("comparison report: {}", path.display());
        }
        None => {
            println!(
                "{}",
                serde_json::to_string(&record)
                    .map_err(|e| CliError::Validation(e.to_string()))?
            );
            println!("{text}");
        }
    }
    Ok(())
}
