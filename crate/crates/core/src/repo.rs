//! The dynamically growing strategy repository: append-only storage of
//! query–strategy pairs with exact top-k cosine retrieval, prompt-block
//! formatting, and line-delimited JSON persistence.
//!
//! Retrieval is brute force and must equal the full-sort oracle: records are
//! ranked by raw cosine similarity descending, ties broken by smaller
//! sequence number (older strategy first). The contract is single-writer,
//! multi-reader; Rust's borrow rules enforce it in-process.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_similarity, EmbeddingVector};
use crate::prompts::STRATEGY_EXAMPLES_HEADER;
use crate::types::{ConfidenceScore, Strategy};

/// One stored entry: insertion sequence number, the solved query, the
/// strategy distilled from it, the producing model's confidence, and the
/// query embedding used for retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRecord {
    pub seq: u64,
    pub query_text: String,
    pub strategy: Strategy,
    pub confidence: ConfidenceScore,
    pub embedding: EmbeddingVector,
}

/// One retrieval hit: the record plus its raw cosine similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedStrategy {
    pub record: StrategyRecord,
    pub similarity: f64,
}

/// Top-k retrieval output, sorted by decreasing similarity, ties by smaller
/// sequence number.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub entries: Vec<RetrievedStrategy>,
}

impl RetrievalResult {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seqs(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.record.seq).collect()
    }
}

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("embedding dimension mismatch: repository is {expected}-dimensional, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("repository capacity of {0} records reached")]
    CapacityExceeded(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    dimension: usize,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    seq: u64,
    query: String,
    strategy: String,
    answer: String,
    confidence: f64,
    embedding: Vec<f64>,
}

/// Append-only repository of strategy records.
#[derive(Debug, Clone)]
pub struct StrategyRepo {
    dimension: usize,
    records: Vec<StrategyRecord>,
    next_seq: u64,
    max_size: Option<usize>,
}

impl StrategyRepo {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension >= 1, "dimension must be positive");
        Self {
            dimension,
            records: Vec::new(),
            next_seq: 0,
            max_size: None,
        }
    }

    /// Cap the number of stored records. Inserts beyond the cap are refused;
    /// nothing is ever evicted.
    pub fn with_max_size(mut self, max_size: usize) -> Self {
        self.max_size = Some(max_size);
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[StrategyRecord] {
        &self.records
    }

    /// Append a record; returns its sequence number (previous max + 1, or 0
    /// for an empty repository). Duplicate query texts are kept as separate
    /// records.
    pub fn insert(
        &mut self,
        query_text: impl Into<String>,
        strategy: Strategy,
        confidence: ConfidenceScore,
        embedding: EmbeddingVector,
    ) -> Result<u64, RepoError> {
        if embedding.dimension() != self.dimension {
            return Err(RepoError::DimensionMismatch {
                expected: self.dimension,
                got: embedding.dimension(),
            });
        }
        if let Some(cap) = self.max_size {
            if self.records.len() >= cap {
                return Err(RepoError::CapacityExceeded(cap));
            }
        }
        let seq = self.next_seq;
        self.records.push(StrategyRecord {
            seq,
            query_text: query_text.into(),
            strategy,
            confidence,
            embedding,
        });
        self.next_seq += 1;
        Ok(seq)
    }

    /// Exact brute-force top-k by raw cosine similarity, ties by smaller
    /// sequence number. Returns `min(k, len)` records.
    pub fn top_k(&self, query_embedding: &EmbeddingVector, k: usize) -> RetrievalResult {
        assert!(k >= 1, "k must be positive");
        assert_eq!(
            query_embedding.dimension(),
            self.dimension,
            "query embedding dimension must match the repository"
        );
        // Bounded insertion keeps this O(N * k); the full-sort oracle in the
        // test suite is the independent reference.
        let mut best: Vec<(f64, u64, usize)> = Vec::with_capacity(k + 1);
        for (idx, record) in self.records.iter().enumerate() {
            let sim = cosine_similarity(query_embedding, &record.embedding)
                .expect("dimensions checked on insert");
            let candidate = (sim, record.seq, idx);
            let pos = best
                .iter()
                .position(|&(s, seq, _)| sim > s || (sim == s && record.seq < seq));
            match pos {
                Some(p) => best.insert(p, candidate),
                None if best.len() < k => best.push(candidate),
                None => continue,
            }
            best.truncate(k);
        }
        RetrievalResult {
            entries: best
                .into_iter()
                .map(|(sim, _, idx)| RetrievedStrategy {
                    record: self.records[idx].clone(),
                    similarity: sim,
                })
                .collect(),
        }
    }

    /// Write the repository as line-delimited JSON; returns the record count.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<usize, RepoError> {
        let file = File::create(path)?;
        let mut out = BufWriter::new(file);
        let header = HeaderLine {
            dimension: self.dimension,
            version: 1,
        };
        writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        for record in &self.records {
            let line = RecordLine {
                seq: record.seq,
                query: record.query_text.clone(),
                strategy: record.strategy.strategy_text.clone(),
                answer: record.strategy.answer_text.clone(),
                confidence: record.confidence.value(),
                embedding: record.embedding.values.clone(),
            };
            writeln!(out, "{}", serde_json::to_string(&line).expect("record serializes"))?;
        }
        out.flush()?;
        Ok(self.records.len())
    }

    /// Load a repository saved by [`StrategyRepo::save`]. The stored
    /// strategy's question text is the record's query text.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RepoError> {
        let file = File::open(path)?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines().enumerate();

        let (_, first) = lines.next().ok_or(RepoError::Format {
            line: 1,
            message: "missing header line".into(),
        })?;
        let header: HeaderLine =
            serde_json::from_str(&first?).map_err(|e| RepoError::Format {
                line: 1,
                message: format!("bad header: {e}"),
            })?;
        if header.version != 1 {
            return Err(RepoError::Format {
                line: 1,
                message: format!("unsupported version {}", header.version),
            });
        }
        if header.dimension == 0 {
            return Err(RepoError::Format {
                line: 1,
                message: "dimension must be positive".into(),
            });
        }

        let mut repo = StrategyRepo::new(header.dimension);
        let mut prev_seq: Option<u64> = None;
        for (idx, line) in lines {
            let line_no = idx + 1;
            let text = line?;
            let parsed: RecordLine =
                serde_json::from_str(&text).map_err(|e| RepoError::Format {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if parsed.embedding.len() != header.dimension {
                return Err(RepoError::Format {
                    line: line_no,
                    message: format!(
                        "embedding has {} values, repository is {}-dimensional",
                        parsed.embedding.len(),
                        header.dimension
                    ),
                });
            }
            if let Some(prev) = prev_seq {
                if parsed.seq <= prev {
                    return Err(RepoError::Format {
                        line: line_no,
                        message: format!("sequence {} not after {}", parsed.seq, prev),
                    });
                }
            }
            prev_seq = Some(parsed.seq);
            repo.records.push(StrategyRecord {
                seq: parsed.seq,
                query_text: parsed.query.clone(),
                strategy: Strategy {
                    question_text: parsed.query,
                    strategy_text: parsed.strategy,
                    answer_text: parsed.answer,
                },
                confidence: ConfidenceScore::new(parsed.confidence),
                embedding: EmbeddingVector::from_stored(parsed.embedding),
            });
        }
        repo.next_seq = prev_seq.map_or(0, |s| s + 1);
        Ok(repo)
    }
}

/// Render retrieved strategies as the numbered examples block used by the
/// strategy-based prompt template. Empty results render the empty string.
pub fn format_strategy_block(results: &RetrievalResult) -> String {
    if results.entries.is_empty() {
        return String::new();
    }
    let blocks: Vec<String> = results
        .entries
        .iter()
        .enumerate()
        .map(|(i, entry)| entry.record.strategy.render_block(i + 1))
        .collect();
    format!("{STRATEGY_EXAMPLES_HEADER}\n{}", blocks.join("\n\n"))
}
