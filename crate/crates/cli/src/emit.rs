//! Report emission: line-oriented machine-readable JSON with a rendered
//! plain-text summary alongside. Reports are self-describing — the first
//! line embeds the resolved configuration and the tool version — and
//! contain nothing nondeterministic, so identical invocations produce
//! byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use cascade_core::metrics::{render_metric, MetricReport, StreamCounters};
use cascade_core::pipeline::QueryOutcome;

use crate::config::RunConfigFile;
use crate::error::CliError;

pub const TOOL_NAME: &str = "cascade";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize, Deserialize)]
pub struct HeaderRecord {
    pub record: String,
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfigFile>,
}

impl HeaderRecord {
    pub fn new(command: &str, mode: Option<&str>, config: Option<&RunConfigFile>) -> Self {
        Self {
            record: "header".into(),
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            mode: mode.map(String::from),
            config: config.cloned(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub record: String,
    pub metrics: MetricReport,
    pub counters: StreamCounters,
}

impl MetricsRecord {
    pub fn new(metrics: MetricReport, counters: StreamCounters) -> Self {
        Self {
            record: "metrics".into(),
            metrics,
            counters,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HistogramRecord {
    pub record: String,
    pub bins: usize,
    pub counts: Vec<u64>,
}

impl HistogramRecord {
    pub fn new(counts: Vec<u64>) -> Self {
        Self {
            record: "confidence_histogram".into(),
            bins: counts.len(),
            counts,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub record: String,
    #[serde(flatten)]
    pub outcome: QueryOutcome,
}

impl OutcomeRecord {
    pub fn new(outcome: QueryOutcome) -> Self {
        Self {
            record: "outcome".into(),
            outcome,
        }
    }
}

/// Writer for one line-delimited JSON report file.
pub struct ReportWriter {
    out: BufWriter<File>,
}

impl ReportWriter {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write_line<T: Serialize>(&mut self, value: &T) -> Result<(), CliError> {
        let line = serde_json::to_string(value)
            .map_err(|e| CliError::Validation(format!("cannot serialize report line: {e}")))?;
        writeln!(self.out, "{line}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out.flush()?;
        Ok(())
    }
}

/// `report.jsonl` → `report.txt`; extensionless paths gain `.txt`.
pub fn text_sibling(path: &Path) -> PathBuf {
    path.with_extension("txt")
}

pub fn write_text(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, body)?;
    Ok(())
}

/// Render the metric table shared by the run and comparison summaries.
pub fn metrics_table(label: &str, metrics: &MetricReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("[{label}]\n"));
    s.push_str(&format!(
        "  pipeline_accuracy     {}\n",
        render_metric(metrics.pipeline_accuracy)
    ));
    s.push_str(&format!(
        "  weak_accuracy         {}\n",
        render_metric(metrics.weak_accuracy)
    ));
    s.push_str(&format!(
        "  coverage_rate         {}\n",
        render_metric(metrics.coverage_rate)
    ));
    s.push_str(&format!(
        "  strong_call_rate      {}\n",
        render_metric(metrics.strong_call_rate)
    ));
    s.push_str(&format!(
        "  weak_correct_accepted {}\n",
        render_metric(metrics.weak_correct_accepted)
    ));
    s.push_str(&format!("  tokens_total          {}\n", metrics.tokens_total));
    s.push_str(&format!(
        "  cost_total            {}\n",
        render_metric(metrics.cost_total)
    ));
    s
}

/// Read every line of a JSONL report, yielding raw JSON values.
pub fn read_report_lines(path: &Path) -> Result<Vec<serde_json::Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read report {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Find the first record of a given kind in a parsed report and
/// deserialize it.
pub fn find_record<T: DeserializeOwned>(
    lines: &[serde_json::Value],
    kind: &str,
    path: &Path,
) -> Result<T, CliError> {
    let value = lines
        .iter()
        .find(|v| v.get("record").and_then(|r| r.as_str()) == Some(kind))
        .ok_or_else(|| {
            CliError::Validation(format!(
                "{} has no '{kind}' record; is it a cascade report?",
                path.display()
            ))
        })?;
    serde_json::from_value(value.clone())
        .map_err(|e| CliError::Validation(format!("{}: bad '{kind}' record: {e}", path.display())))
}
