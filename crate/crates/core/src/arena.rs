//! Pairwise feedback battles judged by a model, plus annotator agreement.
//!
//! Two pieces of feedback for the same essay enter anonymously as
//! `feedback_1` / `feedback_2`; the judge picks a winner on each of the
//! five comparison criteria. Source labels never reach the judge — only
//! the presentation order ties a verdict's raw 1/2 choices back to sides,
//! via the fixed un-swap mapping. Position bias is handled by optionally
//! judging each pair in both orders and counting each order as an
//! independent vote.

use crate::corpus::{AnnotationLabel, AnnotationRecord, Corpus, EssayRecord};
use crate::exec::{blocking_scope, map_items, RunOptions};
use crate::gateway::repair::{judge_choices, parse_structured, ParseError, RepairStep, Schema};
use crate::gateway::{Gateway, GatewayError};
use crate::metrics::{cohen_kappa, KappaValue, MetricsError};
use crate::prompts::{OutputFormatSpec, PromptError, PromptLibrary};
use crate::types::Criterion;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Which feedback goes in slot 1: `Ab` puts side A first, `Ba` side B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresentationOrder {
    Ab,
    Ba,
}

impl PresentationOrder {
    pub fn swapped(self) -> Self {
        match self {
            PresentationOrder::Ab => PresentationOrder::Ba,
            PresentationOrder::Ba => PresentationOrder::Ab,
        }
    }
}

impl fmt::Display for PresentationOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PresentationOrder::Ab => "ab",
            PresentationOrder::Ba => "ba",
        })
    }
}

/// A labeled side of a battle. The label identifies the feedback source
/// ("magic", "baseline", "human", ...) in results — never in prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackSide {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackPair {
    pub pair_id: String,
    pub essay_id: String,
    pub side_a: FeedbackSide,
    pub side_b: FeedbackSide,
    pub presentation_order: PresentationOrder,
}

impl FeedbackPair {
    pub fn validate(&self) -> Result<(), ArenaError> {
        let invalid = |detail: &str| {
            Err(ArenaError::InvalidPair {
                pair_id: self.pair_id.clone(),
                detail: detail.to_owned(),
            })
        };
        if self.side_a.label == self.side_b.label {
            return invalid("side labels must be distinct");
        }
        if self.side_a.text.trim().is_empty() || self.side_b.text.trim().is_empty() {
            return invalid("feedback texts must be non-empty");
        }
        Ok(())
    }

    /// The same pair presented in the opposite order.
    pub fn with_swapped_order(&self) -> Self {
        Self {
            presentation_order: self.presentation_order.swapped(),
            ..self.clone()
        }
    }
}

/// Feedback texts for one arena participant, keyed by essay id.
#[derive(Debug, Clone)]
pub struct Participant {
    pub label: String,
    pub feedback: BTreeMap<String, String>,
}

/// Deterministic pair id for an essay-level battle between two labels.
pub fn pair_id(essay_id: &str, label_a: &str, label_b: &str) -> String {
    format!("{essay_id}--{label_a}-vs-{label_b}")
}

/// One pair per essay per unordered participant pairing, corpus order,
/// earlier-listed participant on side A, stored order `Ab`. Every
/// participant must cover every corpus essay; the first gap is an error
/// naming the participant and essay.
pub fn build_pairs(
    corpus: &Corpus,
    participants: &[Participant],
) -> Result<Vec<FeedbackPair>, ArenaError> {
    let distinct: BTreeSet<&String> = participants.iter().map(|p| &p.label).collect();
    if participants.len() < 2 || distinct.len() != participants.len() {
        return Err(ArenaError::BadParticipants);
    }
    for participant in participants {
        for record in &corpus.records {
            if !participant.feedback.contains_key(record.essay_id.as_str()) {
                return Err(ArenaError::MissingFeedback {
                    label: participant.label.clone(),
                    essay_id: record.essay_id.clone(),
                });
            }
        }
    }
    let mut pairs = Vec::new();
    for record in &corpus.records {
        for i in 0..participants.len() {
            for j in (i + 1)..participants.len() {
                let (a, b) = (&participants[i], &participants[j]);
                pairs.push(FeedbackPair {
                    pair_id: pair_id(&record.essay_id, &a.label, &b.label),
                    essay_id: record.essay_id.clone(),
                    side_a: FeedbackSide {
                        label: a.label.clone(),
                        text: a.feedback[&record.essay_id].clone(),
                    },
                    side_b: FeedbackSide {
                        label: b.label.clone(),
                        text: b.feedback[&record.essay_id].clone(),
                    },
                    presentation_order: PresentationOrder::Ab,
                });
            }
        }
    }
    Ok(pairs)
}

/// Which original side a raw judge choice refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// Fixed un-swap mapping: (1,ab)->A, (2,ab)->B, (1,ba)->B, (2,ba)->A.
pub fn un_swap(choice: u8, order: PresentationOrder) -> Side {
    debug_assert!(choice == 1 || choice == 2, "choices are schema-validated");
    match (choice, order) {
        (1, PresentationOrder::Ab) | (2, PresentationOrder::Ba) => Side::A,
        _ => Side::B,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub pair_id: String,
    pub a_label: String,
    pub b_label: String,
    pub presentation_order: PresentationOrder,
    /// Raw slot choices straight from the judge, per criterion.
    pub choices: BTreeMap<Criterion, u8>,
    /// Winning source label per criterion, after un-swapping.
    pub resolved: BTreeMap<Criterion, String>,
    pub exchange_ref: String,
    pub repairs_applied: Vec<RepairStep>,
}

#[derive(Debug, thiserror::Error)]
pub enum ArenaError {
    #[error("invalid pair {pair_id}: {detail}")]
    InvalidPair { pair_id: String, detail: String },
    #[error("pair {pair_id} references unknown essay {essay_id}")]
    UnknownEssay { pair_id: String, essay_id: String },
    #[error("pair {pair_id} unjudged for order {order}: {reason}")]
    Unjudged { pair_id: String, order: PresentationOrder, reason: String },
    #[error("no verdicts between {system} and {reference}")]
    NoVerdicts { system: String, reference: String },
    #[error("participants must be at least two distinct labels")]
    BadParticipants,
    #[error("participant {label} has no feedback for essay {essay_id}")]
    MissingFeedback { label: String, essay_id: String },
    #[error("no verdicts for participant pairing {a} vs {b}")]
    MissingPairing { a: String, b: String },
    #[error("annotation set must come from exactly two annotators, found {found:?}")]
    NotTwoAnnotators { found: Vec<String> },
    #[error("annotator {annotator_id} has no label for pair {pair_id} criterion {criterion}")]
    IncompleteAnnotations { pair_id: String, criterion: Criterion, annotator_id: String },
    #[error("annotators disagree on pair {pair_id} criterion {criterion} and no adjudication exists")]
    MissingAdjudication { pair_id: String, criterion: Criterion },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Judges one pair in its stored presentation order with a single call.
pub fn judge_pair(
    gateway: &Gateway,
    library: &PromptLibrary,
    essay: &EssayRecord,
    rubric: &str,
    pair: &FeedbackPair,
) -> Result<JudgeVerdict, ArenaError> {
    pair.validate()?;
    let (feedback_1, feedback_2) = match pair.presentation_order {
        PresentationOrder::Ab => (&pair.side_a.text, &pair.side_b.text),
        PresentationOrder::Ba => (&pair.side_b.text, &pair.side_a.text),
    };
    let messages =
        library.judge_messages(feedback_1, feedback_2, essay, rubric, &OutputFormatSpec::judge())?;
    let exchange = gateway.complete(&messages)?;
    let repaired =
        parse_structured(&exchange.raw_response, Schema::Judge).map_err(|e: ParseError| {
            ArenaError::Unjudged {
                pair_id: pair.pair_id.clone(),
                order: pair.presentation_order,
                reason: e.to_string(),
            }
        })?;
    let choices = judge_choices(&repaired.value);
    let resolved = choices
        .iter()
        .map(|(&criterion, &choice)| {
            let label = match un_swap(choice, pair.presentation_order) {
                Side::A => pair.side_a.label.clone(),
                Side::B => pair.side_b.label.clone(),
            };
            (criterion, label)
        })
        .collect();
    Ok(JudgeVerdict {
        pair_id: pair.pair_id.clone(),
        a_label: pair.side_a.label.clone(),
        b_label: pair.side_b.label.clone(),
        presentation_order: pair.presentation_order,
        choices,
        resolved,
        exchange_ref: exchange.cache_key,
        repairs_applied: repaired.repairs_applied,
    })
}

/// Whether each pair is judged once (its stored order) or in both orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderPolicy {
    Single,
    Both,
}

/// A pair/order combination that produced no verdict, and why.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnjudgedPair {
    pub pair_id: String,
    pub order: PresentationOrder,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BattleOutcome {
    pub verdicts: Vec<JudgeVerdict>,
    pub unjudged: Vec<UnjudgedPair>,
}

/// Judges a batch of pairs concurrently. Failures (parse or transport) do
/// not abort the batch; affected orders are recorded as unjudged.
pub fn judge_pairs(
    gateway: &Gateway,
    library: &PromptLibrary,
    corpus: &Corpus,
    rubric: &str,
    pairs: &[FeedbackPair],
    policy: OrderPolicy,
    options: RunOptions,
) -> Result<BattleOutcome, ArenaError> {
    let essays: BTreeMap<&str, &EssayRecord> =
        corpus.records.iter().map(|r| (r.essay_id.as_str(), r)).collect();
    let mut jobs = Vec::new();
    for pair in pairs {
        pair.validate()?;
        if !essays.contains_key(pair.essay_id.as_str()) {
            return Err(ArenaError::UnknownEssay {
                pair_id: pair.pair_id.clone(),
                essay_id: pair.essay_id.clone(),
            });
        }
        jobs.push(pair.clone());
        if policy == OrderPolicy::Both {
            jobs.push(pair.with_swapped_order());
        }
    }

    // Judge calls block on the network: pool sized to the in-flight cap.
    let outcomes = blocking_scope(gateway.endpoint().max_concurrency, options, || {
        map_items(&jobs, options, |pair| {
            let essay = essays[pair.essay_id.as_str()];
            judge_pair(gateway, library, essay, rubric, pair).map_err(|e| UnjudgedPair {
                pair_id: pair.pair_id.clone(),
                order: pair.presentation_order,
                reason: e.to_string(),
            })
        })
    });

    let mut verdicts = Vec::new();
    let mut unjudged = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(verdict) => verdicts.push(verdict),
            Err(miss) => unjudged.push(miss),
        }
    }
    Ok(BattleOutcome { verdicts, unjudged })
}

/// Wins over judged votes; the denominator always travels with the rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinRate {
    pub wins: u64,
    pub judged: u64,
}

impl WinRate {
    pub fn fraction(&self) -> f64 {
        self.wins as f64 / self.judged as f64
    }

    pub fn percent(&self) -> f64 {
        self.fraction() * 100.0
    }
}

/// Per-criterion win rate of `system` over `reference`. Every resolved
/// verdict between the two labels counts as one vote per criterion.
pub fn winrate_vs_reference(
    verdicts: &[JudgeVerdict],
    system: &str,
    reference: &str,
) -> Result<BTreeMap<Criterion, WinRate>, ArenaError> {
    let mut table: BTreeMap<Criterion, WinRate> = Criterion::ALL
        .iter()
        .map(|&c| (c, WinRate { wins: 0, judged: 0 }))
        .collect();
    for verdict in verdicts {
        let labels = [verdict.a_label.as_str(), verdict.b_label.as_str()];
        if !(labels.contains(&system) && labels.contains(&reference)) {
            continue;
        }
        for (&criterion, winner) in &verdict.resolved {
            let entry = table.get_mut(&criterion).expect("all criteria present");
            entry.judged += 1;
            if winner == system {
                entry.wins += 1;
            }
        }
    }
    if table.values().any(|rate| rate.judged == 0) {
        return Err(ArenaError::NoVerdicts {
            system: system.to_owned(),
            reference: reference.to_owned(),
        });
    }
    Ok(table)
}

/// Win-rate matrix over every unordered participant pairing.
///
/// Cells hold integer win/judged counts, so the anti-symmetry invariant
/// `wins(i,j) + wins(j,i) == judged` is exact; the rendered fraction is
/// derived. The overall layer pools all five criteria (each criterion of
/// each verdict is one vote); per-criterion layers break the same counts
/// out.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WinMatrix {
    pub participants: Vec<String>,
    pub overall: Vec<Vec<Option<WinRate>>>,
    pub per_criterion: BTreeMap<Criterion, Vec<Vec<Option<WinRate>>>>,
}

pub fn battle_matrix(
    participants: &[String],
    verdicts: &[JudgeVerdict],
) -> Result<WinMatrix, ArenaError> {
    let distinct: BTreeSet<&String> = participants.iter().collect();
    if participants.len() < 2 || distinct.len() != participants.len() {
        return Err(ArenaError::BadParticipants);
    }
    let size = participants.len();
    let empty = vec![vec![None; size]; size];
    let mut overall = empty.clone();
    let mut per_criterion: BTreeMap<Criterion, Vec<Vec<Option<WinRate>>>> =
        Criterion::ALL.iter().map(|&c| (c, empty.clone())).collect();

    for i in 0..size {
        for j in (i + 1)..size {
            let (pi, pj) = (&participants[i], &participants[j]);
            let rates = match winrate_vs_reference(verdicts, pi, pj) {
                Ok(rates) => rates,
                Err(ArenaError::NoVerdicts { .. }) => {
                    return Err(ArenaError::MissingPairing { a: pi.clone(), b: pj.clone() })
                }
                Err(other) => return Err(other),
            };
            let mut pooled = WinRate { wins: 0, judged: 0 };
            for (&criterion, rate) in &rates {
                pooled.wins += rate.wins;
                pooled.judged += rate.judged;
                let layer = per_criterion.get_mut(&criterion).expect("criterion layer");
                layer[i][j] = Some(*rate);
                layer[j][i] = Some(WinRate {
                    wins: rate.judged - rate.wins,
                    judged: rate.judged,
                });
            }
            overall[i][j] = Some(pooled);
            overall[j][i] = Some(WinRate {
                wins: pooled.judged - pooled.wins,
                judged: pooled.judged,
            });
        }
    }
    Ok(WinMatrix { participants: participants.to_vec(), overall, per_criterion })
}

/// Consensus-or-adjudicator gold labels per (pair, criterion).
pub type GoldLabels = BTreeMap<(String, Criterion), AnnotationLabel>;

fn annotation_index(
    records: &[AnnotationRecord],
) -> BTreeMap<(String, Criterion, String), AnnotationLabel> {
    records
        .iter()
        .map(|r| ((r.pair_id.clone(), r.criterion, r.annotator_id.clone()), r.label))
        .collect()
}

/// Merges two annotators' labels into gold: their consensus where they
/// agree, the adjudicator's call where they differ.
pub fn adjudicate(
    annotations: &[AnnotationRecord],
    adjudicator: &[AnnotationRecord],
) -> Result<GoldLabels, ArenaError> {
    let annotators: BTreeSet<String> =
        annotations.iter().map(|r| r.annotator_id.clone()).collect();
    if annotators.len() != 2 {
        return Err(ArenaError::NotTwoAnnotators {
            found: annotators.into_iter().collect(),
        });
    }
    let mut ids = annotators.into_iter();
    let (first, second) = (ids.next().unwrap(), ids.next().unwrap());

    let index = annotation_index(annotations);
    // The adjudicator's own annotator_id carries no information here.
    let adjudications: BTreeMap<(String, Criterion), AnnotationLabel> = adjudicator
        .iter()
        .map(|r| ((r.pair_id.clone(), r.criterion), r.label))
        .collect();
    let items: BTreeSet<(String, Criterion)> = annotations
        .iter()
        .map(|r| (r.pair_id.clone(), r.criterion))
        .collect();

    let mut gold = GoldLabels::new();
    for (pair_id, criterion) in items {
        let look = |annotator: &str| {
            index
                .get(&(pair_id.clone(), criterion, annotator.to_owned()))
                .copied()
                .ok_or_else(|| ArenaError::IncompleteAnnotations {
                    pair_id: pair_id.clone(),
                    criterion,
                    annotator_id: annotator.to_owned(),
                })
        };
        let label_1 = look(&first)?;
        let label_2 = look(&second)?;
        let label = if label_1 == label_2 {
            label_1
        } else {
            adjudications
                .get(&(pair_id.clone(), criterion))
                .copied()
                .ok_or(ArenaError::MissingAdjudication { pair_id: pair_id.clone(), criterion })?
        };
        gold.insert((pair_id, criterion), label);
    }
    Ok(gold)
}

/// Agreement for one criterion: two annotators against each other, and the
/// judge against the adjudicated gold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionAgreement {
    pub kappa_iaa: KappaValue,
    /// Absent when no pair had a usable judge label for this criterion.
    pub kappa_aja: Option<KappaValue>,
    /// Pairs where the judge's verdicts were unanimous across orders.
    pub aja_pairs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgreementTable {
    pub per_criterion: BTreeMap<Criterion, CriterionAgreement>,
    pub overall_iaa: f64,
    pub overall_aja: Option<f64>,
}

/// Arithmetic mean of per-criterion kappa values; rendering rounds to 3
/// decimals.
pub fn mean_kappa(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// The judge's LLM-or-HUMAN call for one pair and criterion, or None when
/// its verdicts across presentation orders disagree (position-biased pairs
/// carry no signal) or no verdict exists.
fn judge_label(
    verdicts: &[&JudgeVerdict],
    criterion: Criterion,
    llm_label: &str,
) -> Option<AnnotationLabel> {
    let winners: BTreeSet<&str> = verdicts
        .iter()
        .filter_map(|v| v.resolved.get(&criterion).map(String::as_str))
        .collect();
    if verdicts.is_empty() || winners.len() != 1 {
        return None;
    }
    let winner = winners.into_iter().next().unwrap();
    Some(if winner == llm_label { AnnotationLabel::LLM } else { AnnotationLabel::HUMAN })
}

/// Builds the annotator-agreement table: per-criterion κ between the two
/// annotators (IAA) and between adjudicated gold and the judge (AJA), plus
/// overall means.
pub fn agreement_report(
    annotations: &[AnnotationRecord],
    adjudicator: &[AnnotationRecord],
    verdicts: &[JudgeVerdict],
    llm_label: &str,
) -> Result<AgreementTable, ArenaError> {
    let annotators: BTreeSet<String> =
        annotations.iter().map(|r| r.annotator_id.clone()).collect();
    if annotators.len() != 2 {
        return Err(ArenaError::NotTwoAnnotators {
            found: annotators.into_iter().collect(),
        });
    }
    let mut ids = annotators.into_iter();
    let (first, second) = (ids.next().unwrap(), ids.next().unwrap());
    let index = annotation_index(annotations);
    let gold = adjudicate(annotations, adjudicator)?;

    let mut by_pair: BTreeMap<&str, Vec<&JudgeVerdict>> = BTreeMap::new();
    for verdict in verdicts {
        by_pair.entry(verdict.pair_id.as_str()).or_default().push(verdict);
    }

    let pair_ids: BTreeSet<&str> =
        annotations.iter().map(|r| r.pair_id.as_str()).collect();

    let mut per_criterion = BTreeMap::new();
    let mut iaa_values = Vec::new();
    let mut aja_values = Vec::new();
    for &criterion in &Criterion::ALL {
        let mut one = Vec::new();
        let mut two = Vec::new();
        let mut gold_vec = Vec::new();
        let mut judge_vec = Vec::new();
        for &pair_id in &pair_ids {
            let fetch = |annotator: &str| {
                index
                    .get(&(pair_id.to_owned(), criterion, annotator.to_owned()))
                    .copied()
                    .ok_or_else(|| ArenaError::IncompleteAnnotations {
                        pair_id: pair_id.to_owned(),
                        criterion,
                        annotator_id: annotator.to_owned(),
                    })
            };
            one.push(fetch(&first)?);
            two.push(fetch(&second)?);
            let verdicts_for_pair = by_pair.get(pair_id).map(Vec::as_slice).unwrap_or(&[]);
            if let Some(label) = judge_label(verdicts_for_pair, criterion, llm_label) {
                gold_vec.push(gold[&(pair_id.to_owned(), criterion)]);
                judge_vec.push(label);
            }
        }
        let kappa_iaa = cohen_kappa(&one, &two)?;
        iaa_values.push(kappa_iaa.value);
        let kappa_aja = if judge_vec.is_empty() {
            None
        } else {
            let kappa = cohen_kappa(&gold_vec, &judge_vec)?;
            aja_values.push(kappa.value);
            Some(kappa)
        };
        per_criterion.insert(
            criterion,
            CriterionAgreement { kappa_iaa, kappa_aja, aja_pairs: judge_vec.len() },
        );
    }

    let overall_aja = if aja_values.len() == Criterion::ALL.len() {
        Some(mean_kappa(&aja_values))
    } else {
        None
    };
    Ok(AgreementTable {
        per_criterion,
        overall_iaa: mean_kappa(&iaa_values),
        overall_aja,
    })
}
