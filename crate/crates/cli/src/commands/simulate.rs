//! `simulate`: run the self-contained theory-validation checks and write
//! one pass/fail line per check with the observed values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checks::{run_all, CheckOutcome, SimulateConfig};
use crate::config::RunConfigFile;
use crate::emit::{text_sibling, write_text, HeaderRecord, ReportWriter};
use crate::error::CliError;

#[derive(Debug, Serialize, Deserialize)]
struct CheckRecord {
    record: String,
    #[serde(flatten)]
    outcome: CheckOutcome,
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryRecord {
    record: String,
    all_pass: bool,
    checks: usize,
}

pub fn cmd_simulate(config_path: Option<&Path>) -> Result<bool, CliError> {
    let loaded = config_path.map(RunConfigFile::load).transpose()?;
    let simulate_config = loaded
        .as_ref()
        .and_then(|c| c.simulate.clone())
        .unwrap_or_else(SimulateConfig::default);

    let outcomes = run_all(&simulate_config);
    let all_pass = outcomes.iter().all(|o| o.pass);

    let mut text = String::new();
    for outcome in &outcomes {
        text.push_str(&format!(
            "{} {}: observed {:.6e} vs bound {:.6e} ({})\n",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.name,
            outcome.observed,
            outcome.bound,
            outcome.detail
        ));
    }

    let output_dir = loaded.as_ref().and_then(|c| c.output_dir().ok());
    match output_dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            let report_path = dir.join("simulate.jsonl");
            let mut writer = ReportWriter::create(&report_path)?;
            writer.write_line(&HeaderRecord::new("simulate", None, loaded.as_ref()))?;
            for outcome in &outcomes {
                writer.write_line(&CheckRecord {
                    record: "check".into(),
                    outcome: outcome.clone(),
                })?;
            }
            writer.write_line(&SummaryRecord {
                record: "summary".into(),
                all_pass,
                checks: outcomes.len(),
            })?;
            writer.finish()?;
            write_text(&text_sibling(&report_path), &text)?;
            println!("{text}");
            println!("simulate report: {}", report_path.display());
        }
        None => {
            for outcome in &outcomes {
                println!(
                    "{}",
                    serde_json::to_string(&CheckRecord {
                        record: "check".into(),
                        outcome: outcome.clone(),
                    })
                    .map_err(|e| CliError::Validation(e.to_string()))?
                );
            }
            println!("{text}");
        }
    }
    Ok(all_pass)
}
