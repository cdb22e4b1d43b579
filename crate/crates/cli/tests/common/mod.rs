//! Shared scripted-scenario fixtures: ten query families, each solvable by
//! the weak tier only when a same-family strategy block is in its prompt,
//! and a strong tier that always knows the answer.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use cascade_core::backends::{ModelBackend, ScriptedBackend, ScriptedRule};
use cascade_core::embedding::EmbedderConfig;
use cascade_core::metrics::{Price, Pricing};
use cascade_core::pipeline::{Cascade, CascadeConfig, Mode, TierConfig};
use cascade_core::types::{ModelProfile, Query};

use cascade_cli::config::BackendSpec;

pub const WEAK_THRESHOLD: f64 = 0.8;
pub const STRONG_THRESHOLD: f64 = 0.9;

pub struct Family {
    pub tag: String,
    pub noun: &'static str,
    pub answer: u32,
}

pub fn families() -> Vec<Family> {
    const NOUNS: [&str; 10] = [
        "bolts", "widgets", "lenses", "magnets", "spools", "gears", "prisms", "valves",
        "anchors", "beacons",
    ];
    (0..10)
        .map(|f| Family {
            tag: format!("fam{f:02}"),
            noun: NOUNS[f],
            answer: (f as u32) + 3,
        })
        .collect()
}

pub fn family_question(family: &Family, occurrence: usize) -> String {
    format!(
        "On day {occurrence}, depot {tag} packs crates of {noun}; every crate holds {answer} {noun}. \
         How many {noun} fit in one crate at depot {tag}?",
        tag = family.tag,
        noun = family.noun,
        answer = family.answer,
    )
}

/// Round-robin stream over the ten families.
pub fn scenario_queries(count: usize) -> Vec<Query> {
    let families = families();
    (0..count)
        .map(|i| {
            let family = &families[i % families.len()];
            let occurrence = i / families.len();
            Query::new(
                format!("q{i:04}"),
                family_question(family, occurrence),
            )
            .with_gold(family.answer.to_string())
        })
        .collect()
}

pub fn weak_rules() -> Vec<ScriptedRule> {
    let mut rules: Vec<ScriptedRule> = families()
        .iter()
        .map(|family| ScriptedRule {
            matcher: family.tag.clone(),
            answer_text: family.answer.to_string(),
            correct_confidence: 0.95,
            requires_strategy_tag: Some(family.tag.clone()),
        })
        .collect();
    // Warm-up material the weak tier handles without strategies; used by
    // the calibration fixtures.
    rules.push(ScriptedRule {
        matcher: "warmup".into(),
        answer_text: "1".into(),
        correct_confidence: 0.9,
        requires_strategy_tag: None,
    });
    rules
}

pub fn strong_rules() -> Vec<ScriptedRule> {
    let mut rules: Vec<ScriptedRule> = families()
        .iter()
        .map(|family| ScriptedRule {
            matcher: family.tag.clone(),
            answer_text: family.answer.to_string(),
            correct_confidence: 0.99,
            requires_strategy_tag: None,
        })
        .collect();
    rules.push(ScriptedRule {
        matcher: "warmup".into(),
        answer_text: "1".into(),
        correct_confidence: 0.97,
        requires_strategy_tag: None,
    });
    rules
}

pub fn scenario_pricing() -> Pricing {
    let mut pricing = Pricing::new();
    pricing.insert(
        "weak".into(),
        Price {
            input: 0.5,
            output: 1.5,
        },
    );
    pricing.insert(
        "strong".into(),
        Price {
            input: 2.5,
            output: 10.0,
        },
    );
    pricing
}

pub fn scenario_cascade_config(mode: Mode) -> CascadeConfig {
    CascadeConfig {
        tiers: vec![
            TierConfig {
                backend: "weak".into(),
                threshold: Some(WEAK_THRESHOLD),
                profile: ModelProfile {
                    perf: 0.3,
                    cost: 1.0,
                },
            },
            TierConfig {
                backend: "strong".into(),
                threshold: Some(STRONG_THRESHOLD),
                profile: ModelProfile {
                    perf: 0.9,
                    cost: 10.0,
                },
            },
        ],
        k: 2,
        mode,
        seed: 20_240_801,
        embedder: EmbedderConfig::reference(384),
        pricing: scenario_pricing(),
        max_tokens: 512,
    }
}

pub fn scenario_cascade(mode: Mode) -> Cascade {
    let mut registry: BTreeMap<String, Arc<dyn ModelBackend>> = BTreeMap::new();
    registry.insert(
        "weak".into(),
        Arc::new(ScriptedBackend::new(weak_rules(), "None", 0.3)),
    );
    registry.insert(
        "strong".into(),
        Arc::new(ScriptedBackend::new(strong_rules(), "None", 0.2)),
    );
    let (cascade, warnings) = Cascade::new(scenario_cascade_config(mode), &registry).unwrap();
    assert!(warnings.is_empty());
    cascade
}

pub fn backend_specs() -> BTreeMap<String, BackendSpec> {
    let mut backends = BTreeMap::new();
    backends.insert(
        "weak".to_string(),
        BackendSpec::Scripted {
            rules: weak_rules(),
            default_answer: "None".into(),
            default_confidence: 0.3,
        },
    );
    backends.insert(
        "strong".to_string(),
        BackendSpec::Scripted {
            rules: strong_rules(),
            default_answer: "None".into(),
            default_confidence: 0.2,
        },
    );
    backends
}

/// Calibration set: twenty warm-up items the weak tier solves at 0.9 and
/// twenty family items it cannot solve without strategies.
pub fn calibration_dataset_lines() -> Vec<String> {
    let families = families();
    let mut lines = Vec::new();
    for i in 0..20 {
        lines.push(format!(
            r#"{{"id": "cal-warm-{i:02}", "question": "warmup drill {i}: how many runs make one set?", "answer": "1"}}"#
        ));
    }
    for i in 0..20 {
        let family = &families[i % families.len()];
        let question = family_question(family, 100 + i / families.len());
        lines.push(format!(
            r#"{{"id": "cal-fam-{i:02}", "question": {q}, "answer": "{a}"}}"#,
            q = serde_json::to_string(&question).unwrap(),
            a = family.answer
        ));
    }
    lines
}

pub fn test_dataset_lines(count: usize) -> Vec<String> {
    scenario_queries(count)
        .iter()
        .map(|q| {
            format!(
                r#"{{"id": {id}, "question": {question}, "answer": {answer}}}"#,
                id = serde_json::to_string(&q.id).unwrap(),
                question = serde_json::to_string(&q.text).unwrap(),
                answer = serde_json::to_string(q.gold_answer.as_ref().unwrap()).unwrap(),
            )
        })
        .collect()
}

/// Full config file for the end-to-end fixture, with paths relative to the
/// config directory.
pub fn scenario_config_json() -> String {
    let config = serde_json::json!({
        "cascade": scenario_cascade_config(Mode::InterCascade),
        "backends": backend_specs(),
        "calibration": {
            "weak": {"alpha": 0.2, "delta": 0.5},
            "strong": {"alpha": 0.2, "delta": 0.5}
        },
        "datasets": {
            "calibration": "calibration.jsonl",
            "test": "test.jsonl"
        },
        "repo_path": "out/repo.jsonl",
        "output_path": "out",
        "simulate": {
            "seed": 7,
            "guarantee": {
                "replications": 20,
                "calibration_size": 300,
                "test_size": 600,
                "alpha": 0.2,
                "delta": 0.1
            }
        }
    });
    serde_json::to_string_pretty(&config).unwrap()
}

pub fn write_scenario_fixture(dir: &std::path::Path) -> std::path::PathBuf {
    std::fs::write(
        dir.join("calibration.jsonl"),
        calibration_dataset_lines().join("\n") + "\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("test.jsonl"),
        test_dataset_lines(60).join("\n") + "\n",
    )
    .unwrap();
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, scenario_config_json()).unwrap();
    config_path
}
