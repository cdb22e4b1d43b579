//! `run`: execute the configured stream in one of the three modes, persist
//! the final repository (strategy modes only), and write the metric report,
//! per-query outcomes, and the weak-tier confidence histogram.

use std::path::{Path, PathBuf};

use cascade_core::metrics::{compute_cost, compute_metrics};
use cascade_core::pipeline::{Cascade, Mode, QueryOutcome};
use cascade_core::repo::StrategyRepo;

use crate::config::{DatasetRole, RunConfigFile};
use crate::dataset::ingest_dataset;
use crate::emit::{
    metrics_table, text_sibling, write_text, HeaderRecord, HistogramRecord, MetricsRecord,
    OutcomeRecord, ReportWriter,
};
use crate::error::CliError;

pub const HISTOGRAM_BINS: usize = 20;

/// Weak-tier confidence histogram: 20 equal bins over [0, 1], the top bin
/// closed at 1.
pub fn confidence_histogram(outcomes: &[QueryOutcome]) -> Vec<u64> {
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for outcome in outcomes {
        if let Some(Some(c)) = outcome.tier_confidences.first() {
            let bin = ((c * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
    }
    counts
}

pub fn run_report_path(out_dir: &Path, mode: Mode) -> PathBuf {
    out_dir.join(format!("run_{}.jsonl", mode.as_str()))
}

pub fn cmd_run(config_path: &Path, mode_override: Option<Mode>) -> Result<(), CliError> {
    let mut config = RunConfigFile::load(config_path)?;
    let mode = mode_override.unwrap_or(config.cascade()?.mode);
    if let Some(cascade) = config.cascade.as_mut() {
        cascade.mode = mode;
    }

    let dataset_path = config.dataset(DatasetRole::Test)?;
    let queries: Vec<_> = ingest_dataset(&dataset_path)?
        .iter()
        .map(|r| r.to_query())
        .collect();

    let registry = config.build_backends()?;
    let (cascade, warnings) = Cascade::new(config.cascade()?.clone(), &registry)?;
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }

    let output = if mode != Mode::Baseline && config.load_repo {
        let repo_path = config.repo_path.as_ref().expect("validated with load_repo");
        let repo = StrategyRepo::load(config.resolve(repo_path))?;
        let mut session = cascade.session_with_repos(vec![repo])?;
        let outcomes: Vec<_> = queries.iter().map(|q| session.step(q)).collect();
        let (counters, repos) = session.finish();
        cascade_core::pipeline::StreamOutput {
            outcomes,
            counters,
            repos,
        }
    } else {
        cascade.run_stream(&queries)?
    };

    let mut metrics = compute_metrics(&output.counters);
    let pricing = &config.cascade()?.pricing;
    if !pricing.is_empty() {
        metrics.cost_total = Some(compute_cost(&output.counters, pricing)?);
    }

    let out_dir = config.output_dir()?;
    std::fs::create_dir_all(&out_dir)?;
    let report_path = run_report_path(&out_dir, mode);
    let mut writer = ReportWriter::create(&report_path)?;
    writer.write_line(&HeaderRecord::new("run", Some(mode.as_str()), Some(&config)))?;
    writer.write_line(&MetricsRecord::new(metrics.clone(), output.counters.clone()))?;
    writer.write_line(&HistogramRecord::new(confidence_histogram(&output.outcomes)))?;
    for outcome in &output.outcomes {
        writer.write_line(&OutcomeRecord::new(outcome.clone()))?;
    }
    writer.finish()?;

    // Strategy modes persist the repository; the baseline has none.
    if mode != Mode::Baseline {
        let repo_path = config
            .repo_path
            .as_ref()
            .map(|p| config.resolve(p))
            .ok_or_else(|| {
                CliError::Validation("config has no 'repo_path' (required outside baseline mode)".into())
            })?;
        if let Some(parent) = repo_path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        // The first tier's repository is the canonical artifact; extra
        // repositories of deeper cascades sit alongside it.
        for (i, repo) in output.repos.iter().enumerate() {
            if i == 0 {
                repo.save(&repo_path)?;
            } else {
                let mut tiered = repo_path.clone().into_os_string();
                tiered.push(format!(".tier{i}"));
                repo.save(PathBuf::from(tiered))?;
            }
        }
    }

    let mut summary = format!(
        "mode {} over {} queries: {} discarded, {} errored\n",
        mode.as_str(),
        output.counters.total,
        output.counters.uncovered,
        output.counters.errored
    );
    summary.push_str(&metrics_table(mode.as_str(), &metrics));
    write_text(&text_sibling(&report_path), &summary)?;
    println!("{summary}");
    println!("run report: {}", report_path.display());
    Ok(())
}
