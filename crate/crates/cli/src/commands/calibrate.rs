//! `calibrate`: run each tier's backend over the calibration set with the
//! strategy-free template, compute confidences and correctness against the
//! gold answers, search the threshold grid per tier, and write the selected
//! thresholds with their full traces.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cascade_core::backends::GenerationRequest;
use cascade_core::calibration::{
    calibrate_threshold, CalibrationError, CalibrationItem, TraceRow,
};
use cascade_core::prompts::strategy_free_prompt;
use cascade_core::types::{answers_match, compute_confidence};

use crate::config::{DatasetRole, RunConfigFile};
use crate::dataset::ingest_dataset;
use crate::emit::{text_sibling, write_text, HeaderRecord, ReportWriter};
use crate::error::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub record: String,
    pub backend: String,
    pub alpha: f64,
    pub delta: f64,
    pub feasible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_lambda: Option<f64>,
    pub monotonicity_warning: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceRecord {
    pub record: String,
    pub backend: String,
    #[serde(flatten)]
    pub row: TraceRow,
}

pub fn cmd_calibrate(config_path: &Path) -> Result<(), CliError> {
    let config = RunConfigFile::load(config_path)?;
    let cascade = config.cascade()?;
    let dataset_path = config.dataset(DatasetRole::Calibration)?;
    let records = ingest_dataset(&dataset_path)?;
    let registry = config.build_backends()?;

    let out_dir = config.output_dir()?;
    std::fs::create_dir_all(&out_dir)?;
    let report_path = out_dir.join("calibration.jsonl");
    let mut writer = ReportWriter::create(&report_path)?;
    writer.write_line(&HeaderRecord::new("calibrate", None, Some(&config)))?;

    let max_tokens = cascade.max_tokens;
    let mut summary = String::new();
    let mut any_infeasible = false;

    for tier in &cascade.tiers {
        let calibration_config = config.calibration.get(&tier.backend).ok_or_else(|| {
            CliError::Validation(format!(
                "no calibration section for tier backend '{}'",
                tier.backend
            ))
        })?;
        calibration_config
            .validate()
            .map_err(CliError::from_calibration)?;
        let backend = registry
            .get(&tier.backend)
            .expect("config validation checked tier backends");

        let mut items = Vec::with_capacity(records.len());
        for record in &records {
            let request =
                GenerationRequest::new(strategy_free_prompt(&record.question), max_tokens);
            let response = backend.generate(&request).map_err(CliError::from_backend)?;
            let confidence = compute_confidence(&response.answer)
                .map_err(|e| CliError::Validation(format!("query '{}': {e}", record.id)))?;
            items.push(CalibrationItem {
                confidence: confidence.value(),
                correct: answers_match(&response.answer.text, &record.answer),
            });
        }

        let (feasible, selected, warning, trace) =
            match calibrate_threshold(&items, calibration_config) {
                Ok(outcome) => (
                    true,
                    Some(outcome.threshold),
                    outcome.monotonicity_warning,
                    outcome.trace,
                ),
                Err(CalibrationError::NoFeasibleThreshold { trace }) => {
                    any_infeasible = true;
                    (false, None, false, trace)
                }
                Err(other) => return Err(CliError::from_calibration(other)),
            };

        writer.write_line(&CalibrationRecord {
            record: "calibration".into(),
            backend: tier.backend.clone(),
            alpha: calibration_config.alpha,
            delta: calibration_config.delta,
            feasible,
            selected_lambda: selected,
            monotonicity_warning: warning,
        })?;
        for row in &trace {
            writer.write_line(&TraceRecord {
                record: "trace_row".into(),
                backend: tier.backend.clone(),
                row: *row,
            })?;
        }

        summary.push_str(&format!(
            "tier {}: alpha={} delta={} -> {}\n",
            tier.backend,
            calibration_config.alpha,
            calibration_config.delta,
            match selected {
                Some(lambda) => format!("lambda = {lambda}"),
                None => "NO FEASIBLE THRESHOLD".to_string(),
            }
        ));
        if warning {
            summary.push_str("  note: upper bounds were not monotone along the scan\n");
        }
    }

    writer.finish()?;
    write_text(&text_sibling(&report_path), &summary)?;
    println!("{summary}");
    println!("calibration report: {}", report_path.display());

    if any_infeasible {
        Err(CliError::NoFeasibleThreshold(
            "one or more tiers found no feasible threshold; see the report trace".into(),
        ))
    } else {
        Ok(())
    }
}
