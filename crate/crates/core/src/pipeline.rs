//! Scoring runs: baseline single-prompt mode and the five-agent mode.
//!
//! In the multi-agent mode each essay gets five trait-agent calls (which
//! may run concurrently) and then exactly one orchestrator call that sees
//! all five expert verdicts — the orchestrator must never run with a
//! partial panel, so any trait failure fails the whole essay before the
//! orchestrator is consulted. The orchestrator's holistic score is reported
//! verbatim; the trait average is computed alongside it as a separate
//! ablation signal, never used to adjust it.
//!
//! Runs persist a manifest plus one verdict record per essay under
//! `<out_dir>/<run_id>/`. Given a warm cache or scripted backend, reruns
//! reproduce verdict bytes exactly; only run_id and timestamps vary.

use crate::corpus::{validate_corpus, Corpus, CorpusError, EssayRecord};
use crate::exec::{blocking_scope, map_items, RunOptions};
use crate::gateway::repair::{parse_structured, scorer_fields, RepairStep, Schema};
use crate::gateway::{EndpointSummary, Gateway};
use crate::prompts::{ExpertEntry, OutputFormatSpec, PromptLibrary, TraitSpec};
use crate::types::{AgentId, Score, TraitId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Baseline,
    Magic,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Baseline => "baseline",
            RunMode::Magic => "magic",
        })
    }
}

impl std::str::FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(RunMode::Baseline),
            "magic" => Ok(RunMode::Magic),
            other => Err(format!("unknown mode {other:?} (expected baseline or magic)")),
        }
    }
}

/// One agent's scored output for one essay.
///
/// Deliberately excludes attempt counts and timing: verdict files must be
/// byte-identical between a cold run and its warm replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentVerdict {
    pub agent_id: AgentId,
    pub score: Score,
    pub reasoning: String,
    pub feedback: String,
    pub exchange_ref: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repairs_applied: Vec<RepairStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagicResult {
    pub essay_id: String,
    pub trait_verdicts: BTreeMap<TraitId, AgentVerdict>,
    pub orchestrator_verdict: AgentVerdict,
    /// Exact mean of the five trait scores; rendered to 3 decimals.
    pub trait_average: f64,
}

impl MagicResult {
    pub fn trait_score_sum(&self) -> u64 {
        self.trait_verdicts.values().map(|v| v.score.value() as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result_kind", rename_all = "lowercase")]
pub enum EssayResult {
    Baseline { essay_id: String, verdict: AgentVerdict },
    Magic(MagicResult),
}

impl EssayResult {
    pub fn essay_id(&self) -> &str {
        match self {
            EssayResult::Baseline { essay_id, .. } => essay_id,
            EssayResult::Magic(result) => &result.essay_id,
        }
    }

    /// The verdict carrying the holistic score and consolidated feedback.
    pub fn holistic(&self) -> &AgentVerdict {
        match self {
            EssayResult::Baseline { verdict, .. } => verdict,
            EssayResult::Magic(result) => &result.orchestrator_verdict,
        }
    }
}

/// Why one essay failed; the run carries on without it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssayFailure {
    pub essay_id: String,
    /// Which call failed: "baseline", a trait id, or "orchestrator".
    pub stage: String,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub mode: RunMode,
    pub endpoint: EndpointSummary,
    pub corpus_digest: String,
    /// essay_ids scored successfully, in corpus order.
    pub results: Vec<String>,
    pub failures: Vec<EssayFailure>,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("run I/O at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt run data at {path}: {detail}")]
    CorruptRun { path: PathBuf, detail: String },
    #[error("missing or empty rubric for {which}")]
    MissingRubric { which: String },
}

/// A failed stage of one essay's scoring, with the failing agent named.
#[derive(Debug, Clone)]
pub struct StageError {
    pub stage: String,
    pub cause: String,
}

impl StageError {
    fn new(stage: impl Into<String>, cause: impl fmt::Display) -> Self {
        Self { stage: stage.into(), cause: cause.to_string() }
    }
}

/// Parses a scorer response into a verdict. Baseline and orchestrator
/// verdicts must carry non-empty feedback; trait verdicts may leave it
/// blank (only their scores and reasoning feed the orchestrator).
fn scored_verdict(
    agent_id: AgentId,
    raw_response: &str,
    exchange_ref: String,
    stage: &str,
) -> Result<AgentVerdict, StageError> {
    let repaired = parse_structured(raw_response, Schema::Scorer)
        .map_err(|e| StageError::new(stage, e))?;
    let (score, reasoning, feedback) = scorer_fields(&repaired.value);
    let score = Score::new(score).expect("schema-validated score is in range");
    let feedback_required = matches!(agent_id, AgentId::Baseline | AgentId::Orchestrator);
    if feedback_required && feedback.trim().is_empty() {
        return Err(StageError::new(stage, "feedback must be non-empty"));
    }
    Ok(AgentVerdict {
        agent_id,
        score,
        reasoning: reasoning.to_owned(),
        feedback: feedback.to_owned(),
        exchange_ref,
        repairs_applied: repaired.repairs_applied,
    })
}

/// Scores one essay with the single holistic prompt: exactly one call.
pub fn score_baseline(
    gateway: &Gateway,
    library: &PromptLibrary,
    essay: &EssayRecord,
    rubric: &str,
) -> Result<AgentVerdict, StageError> {
    let stage = "baseline";
    let messages = library
        .baseline_messages(essay, rubric, &OutputFormatSpec::scorer())
        .map_err(|e| StageError::new(stage, e))?;
    let exchange = gateway.complete(&messages).map_err(|e| StageError::new(stage, e))?;
    scored_verdict(AgentId::Baseline, &exchange.raw_response, exchange.cache_key, stage)
}

/// Scores one essay with the five trait agents, then the orchestrator.
///
/// Trait calls may run concurrently; the orchestrator call happens strictly
/// after all five succeed. If any trait fails, the essay fails with zero
/// orchestrator calls.
pub fn score_magic(
    gateway: &Gateway,
    library: &PromptLibrary,
    essay: &EssayRecord,
    traits: &[TraitSpec],
    options: RunOptions,
) -> Result<MagicResult, StageError> {
    if traits.len() != TraitId::ALL.len() {
        return Err(StageError::new(
            "magic",
            format!("expected {} trait specs, got {}", TraitId::ALL.len(), traits.len()),
        ));
    }
    let outcomes = map_items(traits, options, |spec| {
        let stage = spec.trait_id.to_string();
        let messages = library
            .trait_messages(spec, essay, &OutputFormatSpec::scorer())
            .map_err(|e| StageError::new(&stage, e))?;
        let exchange = gateway.complete(&messages).map_err(|e| StageError::new(&stage, e))?;
        scored_verdict(
            AgentId::Trait(spec.trait_id),
            &exchange.raw_response,
            exchange.cache_key,
            &stage,
        )
    });

    let mut trait_verdicts = BTreeMap::new();
    for outcome in outcomes {
        let verdict = outcome?;
        let AgentId::Trait(trait_id) = verdict.agent_id else {
            unreachable!("trait scoring yields trait agent ids")
        };
        trait_verdicts.insert(trait_id, verdict);
    }

    let entries: Vec<ExpertEntry<'_>> = trait_verdicts
        .iter()
        .map(|(&trait_id, verdict)| ExpertEntry {
            trait_id,
            score: verdict.score,
            reasoning: &verdict.reasoning,
            feedback: &verdict.feedback,
        })
        .collect();
    let stage = "orchestrator";
    let messages = library
        .orchestrator_messages(&entries, essay, &OutputFormatSpec::scorer())
        .map_err(|e| StageError::new(stage, e))?;
    let exchange = gateway.complete(&messages).map_err(|e| StageError::new(stage, e))?;
    let orchestrator_verdict =
        scored_verdict(AgentId::Orchestrator, &exchange.raw_response, exchange.cache_key, stage)?;

    let score_sum: u64 = trait_verdicts.values().map(|v| v.score.value() as u64).sum();
    Ok(MagicResult {
        essay_id: essay.essay_id.clone(),
        trait_verdicts,
        orchestrator_verdict,
        trait_average: score_sum as f64 / TraitId::ALL.len() as f64,
    })
}

/// SHA-256 over the corpus records' serialized form; ties a manifest to the
/// exact data it scored.
pub fn corpus_digest(corpus: &Corpus) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for record in &corpus.records {
        hasher.update(serde_json::to_vec(record).expect("record serializes"));
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub results: Vec<EssayResult>,
    pub run_dir: PathBuf,
}

/// Scores every record once, isolating per-essay failures, and persists
/// `manifest.json` + `verdicts.jsonl` under `<out_dir>/<run_id>/`.
pub fn run_corpus(
    gateway: &Gateway,
    library: &PromptLibrary,
    corpus: &Corpus,
    mode: RunMode,
    run_id: &str,
    out_dir: &Path,
    options: RunOptions,
) -> Result<RunOutput, PipelineError> {
    let findings = validate_corpus(corpus);
    if !findings.is_empty() {
        return Err(CorpusError::Validation { findings }.into());
    }
    if corpus.records.is_empty() {
        return Err(CorpusError::Empty.into());
    }
    // Rubric problems would fail every single essay; reject the run upfront.
    match mode {
        RunMode::Baseline => {
            if corpus.rubric_holistic.trim().is_empty() {
                return Err(PipelineError::MissingRubric { which: "holistic".into() });
            }
        }
        RunMode::Magic => {
            for &trait_id in &TraitId::ALL {
                let present = corpus
                    .rubrics_trait
                    .get(&trait_id)
                    .is_some_and(|r| !r.trim().is_empty());
                if !present {
                    return Err(PipelineError::MissingRubric { which: trait_id.to_string() });
                }
            }
        }
    }

    let traits: Vec<TraitSpec> = TraitId::ALL
        .iter()
        .map(|&id| {
            TraitSpec::standard(id, corpus.rubrics_trait.get(&id).cloned().unwrap_or_default())
        })
        .collect();

    let started_at = chrono::Utc::now().to_rfc3339();
    // Calls block on the network, not the CPU: size the worker pool to the
    // endpoint's in-flight cap so a small machine still fills it.
    let outcomes = blocking_scope(gateway.endpoint().max_concurrency, options, || {
        map_items(&corpus.records, options, |essay| {
            let outcome = match mode {
                RunMode::Baseline => {
                    score_baseline(gateway, library, essay, &corpus.rubric_holistic).map(
                        |verdict| EssayResult::Baseline {
                            essay_id: essay.essay_id.clone(),
                            verdict,
                        },
                    )
                }
                RunMode::Magic => {
                    score_magic(gateway, library, essay, &traits, options).map(EssayResult::Magic)
                }
            };
            match &outcome {
                Ok(_) => log::info!("scored {} ({mode})", essay.essay_id),
                Err(e) => {
                    log::warn!("failed {} at {}: {}", essay.essay_id, e.stage, e.cause)
                }
            }
            outcome.map_err(|e| EssayFailure {
                essay_id: essay.essay_id.clone(),
                stage: e.stage,
                cause: e.cause,
            })
        })
    });
    let finished_at = chrono::Utc::now().to_rfc3339();

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(result) => results.push(result),
            Err(failure) => failures.push(failure),
        }
    }

    let manifest = RunManifest {
        run_id: run_id.to_owned(),
        mode,
        endpoint: gateway.endpoint().summary(),
        corpus_digest: corpus_digest(corpus),
        results: results.iter().map(|r| r.essay_id().to_owned()).collect(),
        failures,
        started_at,
        finished_at,
    };

    let run_dir = out_dir.join(run_id);
    persist_run(&run_dir, &manifest, &results)?;
    Ok(RunOutput { manifest, results, run_dir })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_owned(), source }
}

fn persist_run(
    run_dir: &Path,
    manifest: &RunManifest,
    results: &[EssayResult],
) -> Result<(), PipelineError> {
    std::fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;

    let manifest_path = run_dir.join("manifest.json");
    let mut manifest_bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    manifest_bytes.push(b'\n');
    std::fs::write(&manifest_path, manifest_bytes).map_err(io_err(&manifest_path))?;

    let verdicts_path = run_dir.join("verdicts.jsonl");
    let mut file = std::fs::File::create(&verdicts_path).map_err(io_err(&verdicts_path))?;
    for result in results {
        let line = serde_json::to_string(result).expect("result serializes");
        writeln!(file, "{line}").map_err(io_err(&verdicts_path))?;
    }
    Ok(())
}

/// Reads a persisted run back; reporting works from these files alone.
pub fn load_run(run_dir: &Path) -> Result<(RunManifest, Vec<EssayResult>), PipelineError> {
    let manifest_path = run_dir.join("manifest.json");
    let manifest_bytes = std::fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: RunManifest =
        serde_json::from_slice(&manifest_bytes).map_err(|e| PipelineError::CorruptRun {
            path: manifest_path.clone(),
            detail: e.to_string(),
        })?;

    let verdicts_path = run_dir.join("verdicts.jsonl");
    let file = std::fs::File::open(&verdicts_path).map_err(io_err(&verdicts_path))?;
    let mut results = Vec::new();
    for (number, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&verdicts_path))?;
        if line.trim().is_empty() {
            continue;
        }
        let result = serde_json::from_str(&line).map_err(|e| PipelineError::CorruptRun {
            path: verdicts_path.clone(),
            detail: format!("line {}: {e}", number + 1),
        })?;
        results.push(result);
    }
    Ok((manifest, results))
}
