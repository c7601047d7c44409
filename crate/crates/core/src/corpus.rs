//! Essay corpus data model: ingestion, validation, and persistence of
//! line-delimited corpus and annotation files.
//!
//! The corpus format is one JSON record per line with fixed field names
//! (see [`EssayRecord`]); essays must be assembled locally by the user, so
//! ingestion is deliberately strict about the invariants scoring relies on
//! (closed 0–6 scale, unique ids, non-empty essay text).

use crate::types::{Criterion, TraitId};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// One essay with its human ground truth.
///
/// Scores are carried as raw integers rather than [`crate::types::Score`] so
/// that a file with an out-of-range value loads far enough for
/// [`validate_corpus`] to name the offending essay instead of dying inside
/// the JSON parser.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssayRecord {
    pub essay_id: String,
    pub prompt_id: String,
    pub task_directions: String,
    pub prompt_text: String,
    pub essay_text: String,
    pub human_holistic_score: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_feedback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_trait_scores: Option<BTreeMap<String, i64>>,
    pub source_tag: String,
}

impl EssayRecord {
    /// Human score for one trait, if annotated.
    pub fn human_trait_score(&self, trait_id: TraitId) -> Option<i64> {
        self.human_trait_scores.as_ref()?.get(trait_id.as_str()).copied()
    }
}

/// A validated, ordered set of essays plus the rubric texts scoring needs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub records: Vec<EssayRecord>,
    pub rubric_holistic: String,
    pub rubrics_trait: BTreeMap<TraitId, String>,
}

impl Corpus {
    pub fn distinct_prompts(&self) -> usize {
        self.records.iter().map(|r| r.prompt_id.as_str()).collect::<BTreeSet<_>>().len()
    }

    pub fn with_rubrics(
        mut self,
        holistic: String,
        traits: BTreeMap<TraitId, String>,
    ) -> Self {
        self.rubric_holistic = holistic;
        self.rubrics_trait = traits;
        self
    }
}

/// One human annotation of a judged feedback pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub pair_id: String,
    pub criterion: Criterion,
    pub annotator_id: String,
    pub label: AnnotationLabel,
}

/// Closed label set for feedback-pair annotations: which side's feedback the
/// annotator preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnnotationLabel {
    LLM,
    HUMAN,
}

impl fmt::Display for AnnotationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnnotationLabel::LLM => "LLM",
            AnnotationLabel::HUMAN => "HUMAN",
        })
    }
}

/// One violated invariant, identified by name and the essay it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    /// Empty when the finding concerns the corpus as a whole.
    pub essay_id: String,
    pub invariant: String,
    pub detail: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.essay_id.is_empty() {
            write!(f, "[{}] {}", self.invariant, self.detail)
        } else {
            write!(f, "[{}] essay {}: {}", self.invariant, self.essay_id, self.detail)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("empty corpus")]
    Empty,
    #[error("corpus validation failed: {}", findings.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; "))]
    Validation { findings: Vec<Finding> },
    #[error("duplicate annotation for (pair {pair_id}, {criterion}, annotator {annotator_id})")]
    DuplicateAnnotation { pair_id: String, criterion: Criterion, annotator_id: String },
}

/// Loads a line-delimited corpus file and validates every invariant.
/// Record order is preserved. Rubric slots start empty; attach them with
/// [`Corpus::with_rubrics`].
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EssayRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Parse { line: idx + 1, detail: e.to_string() })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(CorpusError::Empty);
    }
    let corpus = Corpus { records, ..Corpus::default() };
    let findings = validate_corpus(&corpus);
    if findings.is_empty() {
        Ok(corpus)
    } else {
        Err(CorpusError::Validation { findings })
    }
}

/// Writes the corpus records back in the line-delimited format. Together
/// with [`load_corpus`] this round-trips every field.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io { path: path.display().to_string(), source };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for record in &corpus.records {
        let line = serde_json::to_string(record)
            .expect("essay records always serialize");
        writeln!(out, "{line}")
            .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    }
    out.flush().map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

/// Checks every corpus invariant and returns one finding per violation.
/// Findings are data, not failures: an empty list means the corpus is clean.
pub fn validate_corpus(corpus: &Corpus) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut seen_ids: BTreeSet<&str> = BTreeSet::new();
    // prompt_id -> (prompt_text, task_directions) of first occurrence.
    let mut prompts: BTreeMap<&str, (&str, &str)> = BTreeMap::new();

    for record in &corpus.records {
        let finding = |invariant: &str, detail: String| Finding {
            essay_id: record.essay_id.clone(),
            invariant: invariant.to_owned(),
            detail,
        };
        if !seen_ids.insert(&record.essay_id) {
            findings.push(finding(
                "essay_id_unique",
                "essay_id appears more than once".to_owned(),
            ));
        }
        if record.essay_text.trim().is_empty() {
            findings.push(finding(
                "essay_text_nonempty",
                "essay_text is empty after trimming whitespace".to_owned(),
            ));
        }
        if !(0..=6).contains(&record.human_holistic_score) {
            findings.push(finding(
                "holistic_score_range",
                format!("human_holistic_score {} outside 0-6", record.human_holistic_score),
            ));
        }
        if let Some(trait_scores) = &record.human_trait_scores {
            for (key, value) in trait_scores {
                if TraitId::parse(key).is_none() {
                    findings.push(finding(
                        "trait_key_known",
                        format!("unknown trait {key:?} in human_trait_scores"),
                    ));
                }
                if !(0..=6).contains(value) {
                    findings.push(finding(
                        "trait_score_range",
                        format!("human_trait_scores[{key}] = {value} outside 0-6"),
                    ));
                }
            }
        }
        if record.prompt_text.trim().is_empty() {
            findings.push(finding(
                "prompt_text_present",
                format!("prompt_id {:?} has no prompt_text", record.prompt_id),
            ));
        }
        match prompts.get(record.prompt_id.as_str()) {
            None => {
                prompts.insert(
                    &record.prompt_id,
                    (&record.prompt_text, &record.task_directions),
                );
            }
            Some(&(text, directions)) => {
                if text != record.prompt_text || directions != record.task_directions {
                    findings.push(finding(
                        "prompt_consistent",
                        format!(
                            "prompt_id {:?} disagrees with an earlier record's \
                             prompt_text/task_directions",
                            record.prompt_id
                        ),
                    ));
                }
            }
        }
    }
    findings
}

/// Loads an annotation file (one JSON record per line). Duplicate
/// (pair_id, criterion, annotator_id) triples are rejected.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records: Vec<AnnotationRecord> = Vec::new();
    let mut seen: BTreeSet<(String, Criterion, String)> = BTreeSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Parse { line: idx + 1, detail: e.to_string() })?;
        let key = (record.pair_id.clone(), record.criterion, record.annotator_id.clone());
        if !seen.insert(key) {
            return Err(CorpusError::DuplicateAnnotation {
                pair_id: record.pair_id,
                criterion: record.criterion,
                annotator_id: record.annotator_id,
            });
        }
        records.push(record);
    }
    Ok(records)
}
