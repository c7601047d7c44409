//! Offline analysis of persisted scoring runs: agreement tables, the
//! orchestrator-vs-trait-average comparison, score distributions, and
//! feedback-length statistics.
//!
//! A report is built purely from a corpus plus already-persisted run results
//! — no model calls — and is deterministic in its inputs: no timestamps, no
//! environment probes, stable section order. The same report serializes as
//! line-delimited JSON (one section per line) and renders as text tables.

use crate::corpus::{Corpus, EssayRecord};
use crate::metrics::{
    length_summary, percent_difference, round_half_up_mean, score_distribution,
    AgreementSummary, DistributionSummary, MetricsError,
};
use crate::pipeline::{EssayResult, RunManifest, RunMode};
use crate::types::TraitId;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no runs supplied")]
    NoRuns,
    #[error("run {run_id}: essay {essay_id} is not in the corpus")]
    UnknownEssay { run_id: String, essay_id: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {detail}")]
    Malformed { path: String, line: usize, detail: String },
}

/// One self-describing line of a serialized report.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "section", rename_all = "snake_case")]
pub enum ReportSection {
    /// Agreement between a run's holistic scores and the human scores.
    HolisticAgreement { run_id: String, mode: RunMode, agreement: AgreementSummary },
    /// Per-trait agreement for essays with human trait annotations.
    TraitAgreement {
        run_id: String,
        per_trait: BTreeMap<TraitId, AgreementSummary>,
        /// Traits that could not be compared, with the reason.
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        skipped: BTreeMap<TraitId, String>,
    },
    /// Does the orchestrator add signal over simply averaging the five trait
    /// scores? Positive delta means it does.
    OrchestratorVsAverage {
        run_id: String,
        orchestrator: AgreementSummary,
        trait_average: AgreementSummary,
        delta: f64,
    },
    ScoreDistribution {
        /// `human`, or the run id.
        source: String,
        distribution: DistributionSummary,
        /// For run sections: whether this run's scores spread less than the
        /// human scores over the same essays.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        narrower_than_human: Option<bool>,
    },
    /// Word counts of the feedback texts from one source.
    FeedbackLength { source: String, lengths: DistributionSummary },
    /// Relative feedback length, first run vs second.
    FeedbackLengthComparison {
        run_id: String,
        baseline_run_id: String,
        run_mean_words: f64,
        baseline_mean_words: f64,
        percent_difference: f64,
    },
    /// Something was skipped; the report is still valid.
    Warning { context: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Report {
    pub sections: Vec<ReportSection>,
}

/// A persisted run as the reporting layer consumes it.
pub type Run = (RunManifest, Vec<EssayResult>);

fn record_index(corpus: &Corpus) -> BTreeMap<&str, &EssayRecord> {
    corpus.records.iter().map(|r| (r.essay_id.as_str(), r)).collect()
}

/// Human and model holistic scores plus the records they came from.
type PairedScores<'a> = (Vec<i64>, Vec<i64>, Vec<&'a EssayRecord>);

/// Human/LLM holistic score vectors for one run, in result order.
fn holistic_vectors<'a>(
    run_id: &str,
    results: &[EssayResult],
    index: &BTreeMap<&str, &'a EssayRecord>,
) -> Result<PairedScores<'a>, ReportError> {
    let mut human = Vec::with_capacity(results.len());
    let mut llm = Vec::with_capacity(results.len());
    let mut records = Vec::with_capacity(results.len());
    for result in results {
        let record = index.get(result.essay_id()).ok_or_else(|| ReportError::UnknownEssay {
            run_id: run_id.to_string(),
            essay_id: result.essay_id().to_string(),
        })?;
        human.push(record.human_holistic_score);
        llm.push(result.holistic().score.value());
        records.push(*record);
    }
    Ok((human, llm, records))
}

fn warn(sections: &mut Vec<ReportSection>, context: &str, err: &MetricsError) {
    sections.push(ReportSection::Warning {
        context: context.to_string(),
        detail: err.to_string(),
    });
}

/// Builds every section the supplied runs support, in a fixed order:
/// holistic agreement per run, then per-trait agreement and the
/// orchestrator-vs-average comparison for multi-agent runs, then score
/// distributions (human first), then feedback lengths with a relative
/// comparison of the first multi-agent run against the first baseline run.
/// Sections that cannot be computed degrade to [`ReportSection::Warning`]
/// entries; only a corpus/run mismatch is fatal.
pub fn build_report(corpus: &Corpus, runs: &[Run]) -> Result<Report, ReportError> {
    if runs.is_empty() {
        return Err(ReportError::NoRuns);
    }
    let index = record_index(corpus);
    let mut sections = Vec::new();

    for (manifest, results) in runs {
        let run_id = manifest.run_id.as_str();
        let (human, llm, _) = holistic_vectors(run_id, results, &index)?;
        match AgreementSummary::from_qwk(&llm, &human) {
            Ok(agreement) => sections.push(ReportSection::HolisticAgreement {
                run_id: run_id.to_string(),
                mode: manifest.mode,
                agreement,
            }),
            Err(err) => warn(&mut sections, &format!("holistic agreement for {run_id}"), &err),
        }
    }

    for (manifest, results) in runs {
        if manifest.mode != RunMode::Magic {
            continue;
        }
        let run_id = manifest.run_id.as_str();
        let (_, _, records) = holistic_vectors(run_id, results, &index)?;

        let mut per_trait = BTreeMap::new();
        let mut skipped = BTreeMap::new();
        let mut any_ground_truth = false;
        for t in TraitId::ALL {
            let mut human = Vec::new();
            let mut llm = Vec::new();
            for (result, record) in results.iter().zip(&records) {
                let EssayResult::Magic(magic) = result else { continue };
                let Some(truth) = record.human_trait_score(t) else { continue };
                human.push(truth);
                llm.push(magic.trait_verdicts[&t].score.value());
            }
            if human.is_empty() {
                skipped.insert(t, "no human trait scores".to_string());
                continue;
            }
            any_ground_truth = true;
            match AgreementSummary::from_qwk(&llm, &human) {
                Ok(summary) => {
                    per_trait.insert(t, summary);
                }
                Err(err) => {
                    skipped.insert(t, err.to_string());
                }
            }
        }
        if any_ground_truth {
            sections.push(ReportSection::TraitAgreement {
                run_id: run_id.to_string(),
                per_trait,
                skipped,
            });
        } else {
            sections.push(ReportSection::Warning {
                context: format!("per-trait agreement for {run_id}"),
                detail: "corpus has no human trait scores; section skipped".to_string(),
            });
        }

        let mut human = Vec::new();
        let mut orchestrator = Vec::new();
        let mut averaged = Vec::new();
        for (result, record) in results.iter().zip(&records) {
            let EssayResult::Magic(magic) = result else { continue };
            human.push(record.human_holistic_score);
            orchestrator.push(magic.orchestrator_verdict.score.value());
            // Half-up rounding: the orchestrator competes against the
            // nearest integer category to the trait mean.
            let rounded = round_half_up_mean(magic.trait_score_sum(), 5)
                .expect("five trait scores") as i64;
            averaged.push(rounded);
        }
        let comparison = AgreementSummary::from_qwk(&orchestrator, &human).and_then(|orch| {
            AgreementSummary::from_qwk(&averaged, &human).map(|avg| (orch, avg))
        });
        match comparison {
            Ok((orch, avg)) => {
                let delta = orch.value - avg.value;
                sections.push(ReportSection::OrchestratorVsAverage {
                    run_id: run_id.to_string(),
                    orchestrator: orch,
                    trait_average: avg,
                    delta,
                });
            }
            Err(err) =>

                warn(&mut sections, &format!("orchestrator-vs-average for {run_id}"), &err),
        }
    }

    let human_scores: Vec<i64> = corpus.records.iter().map(|r| r.human_holistic_score).collect();
    match score_distribution(&human_scores) {
        Ok(distribution) => sections.push(ReportSection::ScoreDistribution {
            source: "human".to_string(),
            distribution,
            narrower_than_human: None,
        }),
        Err(err) => warn(&mut sections, "human score distribution", &err),
    }
    for (manifest, results) in runs {
        let run_id = manifest.run_id.as_str();
        let (human, llm, _) = holistic_vectors(run_id, results, &index)?;
        let run_dist = score_distribution(&llm);
        let human_dist = score_distribution(&human);
        match (run_dist, human_dist) {
            (Ok(distribution), Ok(paired_human)) => {
                let narrower = distribution.stddev < paired_human.stddev;
                sections.push(ReportSection::ScoreDistribution {
                    source: run_id.to_string(),
                    distribution,
                    narrower_than_human: Some(narrower),
                });
            }
            (Err(err), _) | (_, Err(err)) => {
                warn(&mut sections, &format!("score distribution for {run_id}"), &err)
            }
        }
    }

    let human_feedback: Vec<&str> =
        corpus.records.iter().filter_map(|r| r.human_feedback.as_deref()).collect();
    if !human_feedback.is_empty() {
        match length_summary(human_feedback.iter().copied()) {
            Ok(lengths) => sections.push(ReportSection::FeedbackLength {
                source: "human".to_string(),
                lengths,
            }),
            Err(err) => warn(&mut sections, "human feedback length", &err),
        }
    }
    let mut mean_words: BTreeMap<&str, f64> = BTreeMap::new();
    for (manifest, results) in runs {
        let run_id = manifest.run_id.as_str();
        let texts: Vec<&str> = results.iter().map(|r| r.holistic().feedback.as_str()).collect();
        match length_summary(texts) {
            Ok(lengths) => {
                mean_words.insert(run_id, lengths.mean);
                sections.push(ReportSection::FeedbackLength {
                    source: run_id.to_string(),
                    lengths,
                });
            }
            Err(err) => warn(&mut sections, &format!("feedback length for {run_id}"), &err),
        }
    }

    let first_of = |mode: RunMode| runs.iter().find(|(m, _)| m.mode == mode).map(|(m, _)| m);
    if let (Some(magic), Some(baseline)) = (first_of(RunMode::Magic), first_of(RunMode::Baseline))
    {
        if let (Some(&run_mean), Some(&base_mean)) = (
            mean_words.get(magic.run_id.as_str()),
            mean_words.get(baseline.run_id.as_str()),
        ) {
            match percent_difference(run_mean, base_mean) {
                Ok(pct) => sections.push(ReportSection::FeedbackLengthComparison {
                    run_id: magic.run_id.clone(),
                    baseline_run_id: baseline.run_id.clone(),
                    run_mean_words: run_mean,
                    baseline_mean_words: base_mean,
                    percent_difference: pct,
                }),
                Err(err) => warn(
                    &mut sections,
                    &format!("feedback length {} vs {}", magic.run_id, baseline.run_id),
                    &err,
                ),
            }
        }
    }

    Ok(Report { sections })
}

fn fmt_value(v: f64) -> String {
    format!("{v:.3}")
}

fn fmt_signed(v: f64) -> String {
    format!("{v:+.3}")
}

fn fmt_agreement(s: &AgreementSummary) -> String {
    let mut out = format!("{} {} ({}, n={})", s.statistic, fmt_value(s.value), s.band, s.n);
    if s.degenerate {
        out.push_str(" [degenerate]");
    }
    out
}

fn fmt_distribution_row(source: &str, d: &DistributionSummary, extra: &str) -> String {
    let counts: Vec<String> =
        d.counts.iter().map(|(category, count)| format!("{category}:{count}")).collect();
    format!(
        "  {source:<16} n={:<4} mean={:<8} stddev={:<8} min={} max={}  [{}]{extra}\n",
        d.n,
        fmt_value(d.mean),
        fmt_value(d.stddev),
        d.min,
        d.max,
        counts.join(" "),
    )
}

/// Fixed-order plain-text rendering of the report. Same bytes for the same
/// sections, every time.
pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let mut warnings = Vec::new();
    for section in &report.sections {
        match section {
            ReportSection::HolisticAgreement { run_id, mode, agreement } => {
                let _ = writeln!(
                    out,
                    "holistic agreement  {run_id} ({mode}): {}",
                    fmt_agreement(agreement)
                );
            }
            ReportSection::TraitAgreement { run_id, per_trait, skipped } => {
                let _ = writeln!(out, "per-trait agreement  {run_id}:");
                for (t, summary) in per_trait {
                    let _ = writeln!(out, "  {t}: {}", fmt_agreement(summary));
                }
                for (t, reason) in skipped {
                    let _ = writeln!(out, "  {t}: skipped ({reason})");
                }
            }
            ReportSection::OrchestratorVsAverage { run_id, orchestrator, trait_average, delta } => {
                let _ = writeln!(out, "orchestrator vs trait average  {run_id}:");
                let _ = writeln!(out, "  orchestrator:  {}", fmt_agreement(orchestrator));
                let _ = writeln!(out, "  trait average: {}", fmt_agreement(trait_average));
                let _ = writeln!(out, "  delta:         {}", fmt_signed(*delta));
            }
            ReportSection::ScoreDistribution { source, distribution, narrower_than_human } => {
                let extra = match narrower_than_human {
                    Some(true) => "  (narrower than human)",
                    Some(false) => "",
                    None => "",
                };
                let _ = writeln!(out, "score distribution");
                out.push_str(&fmt_distribution_row(source, distribution, extra));
            }
            ReportSection::FeedbackLength { source, lengths } => {
                let _ = writeln!(out, "feedback length (words)");
                out.push_str(&fmt_distribution_row(source, lengths, ""));
            }
            ReportSection::FeedbackLengthComparison {
                run_id,
                baseline_run_id,
                run_mean_words,
                baseline_mean_words,
                percent_difference,
            } => {
                let _ = writeln!(
                    out,
                    "feedback length  {run_id} vs {baseline_run_id}: {percent_difference:+.1}% \
                     (mean {:.1} vs {:.1} words)",
                    run_mean_words, baseline_mean_words
                );
            }
            ReportSection::Warning { context, detail } => {
                warnings.push(format!("  {context}: {detail}"));
            }
        }
    }
    if !warnings.is_empty() {
        out.push_str("warnings\n");
        for w in warnings {
            out.push_str(&w);
            out.push('\n');
        }
    }
    out
}

/// One JSON object per line, each carrying its `section` tag.
pub fn write_jsonl(report: &Report, path: &Path) -> Result<(), ReportError> {
    let to_io = |source| ReportError::Io { path: path.display().to_string(), source };
    let mut file = std::fs::File::create(path).map_err(to_io)?;
    for section in &report.sections {
        let line = serde_json::to_string(section).expect("section serializes");
        writeln!(file, "{line}").map_err(to_io)?;
    }
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Report, ReportError> {
    let file = std::fs::File::open(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut sections = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let section = serde_json::from_str(&line).map_err(|e| ReportError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        sections.push(section);
    }
    Ok(Report { sections })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{AgentVerdict, MagicResult};
    use crate::testkit;
    use crate::types::{AgentId, Score};

    fn verdict(agent_id: AgentId, score: i64, feedback: &str) -> AgentVerdict {
        AgentVerdict {
            agent_id,
            score: Score::new(score).unwrap(),
            reasoning: "because".to_string(),
            feedback: feedback.to_string(),
            exchange_ref: "cafe".to_string(),
            repairs_applied: Vec::new(),
        }
    }

    fn magic_run(corpus: &Corpus, run_id: &str) -> Run {
        let results: Vec<EssayResult> = corpus
            .records
            .iter()
            .enumerate()
            .map(|(i, record)| {
                let trait_verdicts: BTreeMap<TraitId, AgentVerdict> = TraitId::ALL
                    .into_iter()
                    .map(|t| {
                        (t, verdict(AgentId::Trait(t), testkit::scripted_trait_score(i, t), "f"))
                    })
                    .collect();
                let sum: i64 = trait_verdicts.values().map(|v| v.score.value()).sum();
                EssayResult::Magic(MagicResult {
                    essay_id: record.essay_id.clone(),
                    trait_verdicts,
                    orchestrator_verdict: verdict(
                        AgentId::Orchestrator,
                        testkit::scripted_orchestrator_score(i),
                        &testkit::magic_feedback(i),
                    ),
                    trait_average: sum as f64 / 5.0,
                })
            })
            .collect();
        (manifest(run_id, RunMode::Magic, corpus), results)
    }

    fn baseline_run(corpus: &Corpus, run_id: &str) -> Run {
        let results: Vec<EssayResult> = corpus
            .records
            .iter()
            .enumerate()
            .map(|(i, record)| EssayResult::Baseline {
                essay_id: record.essay_id.clone(),
                verdict: verdict(
                    AgentId::Baseline,
                    testkit::scripted_baseline_score(i),
                    &testkit::baseline_feedback(i),
                ),
            })
            .collect();
        (manifest(run_id, RunMode::Baseline, corpus), results)
    }

    fn manifest(run_id: &str, mode: RunMode, corpus: &Corpus) -> RunManifest {
        RunManifest {
            run_id: run_id.to_string(),
            mode,
            endpoint: crate::gateway::ModelEndpoint::scripted_for_tests("m").summary(),
            corpus_digest: "d".to_string(),
            results: corpus.records.iter().map(|r| r.essay_id.clone()).collect(),
            failures: Vec::new(),
            started_at: String::new(),
            finished_at: String::new(),
        }
    }

    #[test]
    fn full_report_emits_every_section_kind() {
        let corpus = testkit::synthetic_corpus(14, 2);
        let runs = vec![magic_run(&corpus, "run-magic"), baseline_run(&corpus, "run-base")];
        let report = build_report(&corpus, &runs).unwrap();

        let tags: Vec<&str> = report
            .sections
            .iter()
            .map(|s| match s {
                ReportSection::HolisticAgreement { .. } => "holistic",
                ReportSection::TraitAgreement { .. } => "trait",
                ReportSection::OrchestratorVsAverage { .. } => "ablation",
                ReportSection::ScoreDistribution { .. } => "dist",
                ReportSection::FeedbackLength { .. } => "len",
                ReportSection::FeedbackLengthComparison { .. } => "len-cmp",
                ReportSection::Warning { .. } => "warning",
            })
            .collect();
        assert_eq!(
            tags,
            [
                "holistic", "holistic", "trait", "ablation", "dist", "dist", "dist", "len",
                "len", "len", "len-cmp"
            ]
        );
        let text = render_text(&report);
        assert!(!text.contains("warnings"), "unexpected warnings in:\n{text}");
    }

    #[test]
    fn identical_scores_give_perfect_holistic_agreement() {
        let corpus = testkit::synthetic_corpus(14, 2);
        let (manifest, _) = baseline_run(&corpus, "run-echo");
        // An agent that parrots the human score exactly.
        let results: Vec<EssayResult> = corpus
            .records
            .iter()
            .map(|r| EssayResult::Baseline {
                essay_id: r.essay_id.clone(),
                verdict: verdict(AgentId::Baseline, r.human_holistic_score, "f"),
            })
            .collect();
        let report = build_report(&corpus, &[(manifest, results)]).unwrap();
        let ReportSection::HolisticAgreement { agreement, .. } = &report.sections[0] else {
            panic!("expected holistic section first");
        };
        assert_eq!(agreement.value, 1.0);
        assert_eq!(agreement.band.to_string(), "perfect");
    }

    #[test]
    fn corpus_without_trait_scores_degrades_to_warning() {
        let mut corpus = testkit::synthetic_corpus(14, 2);
        for record in &mut corpus.records {
            record.human_trait_scores = None;
        }
        let runs = vec![magic_run(&corpus, "run-magic")];
        let report = build_report(&corpus, &runs).unwrap();
        assert!(report.sections.iter().any(|s| matches!(
            s,
            ReportSection::Warning { context, .. } if context.contains("per-trait")
        )));
        assert!(!report
            .sections
            .iter()
            .any(|s| matches!(s, ReportSection::TraitAgreement { .. })));
    }

    #[test]
    fn mismatched_corpus_is_fatal() {
        let corpus = testkit::synthetic_corpus(3, 1);
        let mut run = baseline_run(&corpus, "run-base");
        if let EssayResult::Baseline { essay_id, .. } = &mut run.1[1] {
            *essay_id = "essay-999".to_string();
        }
        let err = build_report(&corpus, &[run]).unwrap_err();
        assert!(matches!(err, ReportError::UnknownEssay { essay_id, .. } if essay_id == "essay-999"));
    }

    #[test]
    fn jsonl_round_trip_is_lossless_and_text_is_stable() {
        let corpus = testkit::synthetic_corpus(14, 2);
        let runs = vec![magic_run(&corpus, "run-magic"), baseline_run(&corpus, "run-base")];
        let report = build_report(&corpus, &runs).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.jsonl");
        write_jsonl(&report, &path).unwrap();
        let restored = read_jsonl(&path).unwrap();
        assert_eq!(report, restored);

        let again = build_report(&corpus, &runs).unwrap();
        assert_eq!(render_text(&report), render_text(&again));
    }

    #[test]
    fn narrowing_flag_compares_against_paired_human_scores() {
        let corpus = testkit::synthetic_corpus(14, 2);
        // Constant LLM scores: stddev 0, strictly narrower than the human spread.
        let (manifest, _) = baseline_run(&corpus, "run-flat");
        let results: Vec<EssayResult> = corpus
            .records
            .iter()
            .map(|r| EssayResult::Baseline {
                essay_id: r.essay_id.clone(),
                verdict: verdict(AgentId::Baseline, 4, "f"),
            })
            .collect();
        let report = build_report(&corpus, &[(manifest, results)]).unwrap();
        let flagged = report.sections.iter().any(|s| {
            matches!(
                s,
                ReportSection::ScoreDistribution { source, narrower_than_human: Some(true), .. }
                    if source == "run-flat"
            )
        });
        assert!(flagged);
    }
}
