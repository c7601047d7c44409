//! Deterministic fixtures for tests, benches, and offline end-to-end runs.
//!
//! Three families live here: a synthetic corpus whose ground truth is a pure
//! function of the essay index, scripted-backend rule builders keyed on
//! stable phrases from the prompt templates, and a frozen two-annotator
//! agreement fixture whose per-criterion kappas reduce to small fractions.
//! Everything is formula-driven — no RNG — so expected values can be
//! recomputed independently inside assertions and runs replay byte-for-byte.
//!
//! This module is compiled into the library (benches and the CLI's own test
//! suite consume it) but is not part of the scoring API proper.

use crate::arena::Participant;
use crate::corpus::{AnnotationLabel, AnnotationRecord, Corpus, EssayRecord};
use crate::gateway::scripted::{
    ScriptFile, ScriptFileResponse, ScriptFileRule, ScriptKey, ScriptResponse, ScriptRule,
};
use crate::types::{Criterion, TraitId};
use std::collections::BTreeMap;

/// Phrase unique to the single-prompt scorer template.
pub const BASELINE_MARKER: &str = "according to the specified rubric";
/// Tag unique to the argument-trait template (serves T1, T2, T3).
pub const ARGUMENT_MARKER: &str = "<argumentative_rubric>";
/// Tag unique to the vocabulary template.
pub const VOCABULARY_MARKER: &str = "<vocabulary_rubric>";
/// Tag unique to the grammar template.
pub const GRAMMAR_MARKER: &str = "<grammar_rubric>";
/// Phrase unique to the orchestrator template.
pub const ORCHESTRATOR_MARKER: &str = "The expert grader's scores and reasoning are as follows";
/// Tag unique to the judge template.
pub const JUDGE_MARKER: &str = "<criteria>";

/// Openings that make each feedback author recognizable inside a judge
/// prompt; scripted judge rules key on `<feedback_N>\n` + opening + essay id
/// to tell the two slots apart.
pub const MAGIC_FEEDBACK_OPENING: &str = "Merged feedback for ";
pub const BASELINE_FEEDBACK_OPENING: &str = "Holistic feedback for ";
pub const HUMAN_FEEDBACK_OPENING: &str = "Human feedback for ";

const WORD_BANK: [&str; 11] = [
    "evidence", "claims", "support", "development", "paragraphs", "clarity", "transitions",
    "examples", "counterpoints", "structure", "precision",
];

/// `n` whitespace-separated words, deterministic in `n` and `salt`.
pub fn filler_words(n: usize, salt: usize) -> String {
    (0..n).map(|k| WORD_BANK[(k + salt) % WORD_BANK.len()]).collect::<Vec<_>>().join(" ")
}

/// Unique substring planted in every synthetic essay so scripted rules can
/// match on essay identity wherever the essay text is quoted.
pub fn essay_token(essay_id: &str) -> String {
    format!("[[{essay_id}]]")
}

pub fn essay_id(index: usize) -> String {
    format!("essay-{:03}", index + 1)
}

// Ground-truth and scripted-score formulas. All reduce mod 7 so every
// category in the 0–6 range is exercised, and the scripted scores are offset
// from the human ones so agreement is high but never perfect.

pub fn human_holistic(index: usize) -> i64 {
    (index % 7) as i64
}

fn trait_ordinal(trait_id: TraitId) -> usize {
    TraitId::ALL.iter().position(|t| *t == trait_id).expect("known trait") + 1
}

fn criterion_ordinal(criterion: Criterion) -> usize {
    Criterion::ALL.iter().position(|c| *c == criterion).expect("known criterion") + 1
}

pub fn human_trait(index: usize, trait_id: TraitId) -> i64 {
    ((index + trait_ordinal(trait_id)) % 7) as i64
}

pub fn scripted_trait_score(index: usize, trait_id: TraitId) -> i64 {
    ((index + 2 * trait_ordinal(trait_id)) % 7) as i64
}

pub fn scripted_orchestrator_score(index: usize) -> i64 {
    ((index + 1) % 7) as i64
}

pub fn scripted_baseline_score(index: usize) -> i64 {
    ((index + 2) % 7) as i64
}

/// Whether the scripted judge prefers the higher-ranked feedback author for
/// this essay and criterion (the judge dissents on every fifth combination).
pub fn prefers_higher_rank(index: usize, criterion: Criterion) -> bool {
    !(index + criterion_ordinal(criterion)).is_multiple_of(5)
}

/// Feedback authors a synthetic arena can pit against each other, ranked by
/// how often the scripted judge sides with them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackVoice {
    Magic,
    Baseline,
    Human,
}

impl FeedbackVoice {
    pub fn opening(self) -> &'static str {
        match self {
            FeedbackVoice::Magic => MAGIC_FEEDBACK_OPENING,
            FeedbackVoice::Baseline => BASELINE_FEEDBACK_OPENING,
            FeedbackVoice::Human => HUMAN_FEEDBACK_OPENING,
        }
    }

    fn rank(self) -> u8 {
        match self {
            FeedbackVoice::Magic => 2,
            FeedbackVoice::Baseline => 1,
            FeedbackVoice::Human => 0,
        }
    }

    pub fn feedback(self, index: usize) -> String {
        match self {
            FeedbackVoice::Magic => magic_feedback(index),
            FeedbackVoice::Baseline => baseline_feedback(index),
            FeedbackVoice::Human => human_feedback(index),
        }
    }
}

/// Arena participant whose feedback for every corpus essay comes from one
/// synthetic voice.
pub fn voice_participant(corpus: &Corpus, label: &str, voice: FeedbackVoice) -> Participant {
    Participant {
        label: label.to_owned(),
        feedback: corpus
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.essay_id.clone(), voice.feedback(i)))
            .collect(),
    }
}

pub fn magic_feedback(index: usize) -> String {
    let id = essay_id(index);
    format!("{MAGIC_FEEDBACK_OPENING}{id}: {}", filler_words(40 + 2 * (index % 13), index))
}

pub fn baseline_feedback(index: usize) -> String {
    let id = essay_id(index);
    format!("{BASELINE_FEEDBACK_OPENING}{id}: {}", filler_words(22 + index % 11, index + 3))
}

pub fn human_feedback(index: usize) -> String {
    let id = essay_id(index);
    format!("{HUMAN_FEEDBACK_OPENING}{id}: {}", filler_words(30 + index % 17, index + 5))
}

fn holistic_rubric() -> String {
    "Score 6: command of argument, organization, vocabulary, and mechanics.\n\
     Score 4: competent response with adequate development.\n\
     Score 2: weak development with frequent errors.\n\
     Score 0: off-topic, blank, or not written in English."
        .to_string()
}

fn trait_rubric(trait_id: TraitId) -> String {
    format!(
        "Score 6: excellent {name}.\nScore 3: uneven {name}.\nScore 0: no evidence of {name}.",
        name = trait_id.description().to_lowercase()
    )
}

/// Corpus of `essays` synthetic records spread round-robin over `prompts`
/// writing prompts, with rubrics attached and every optional human field
/// populated. Passes corpus validation by construction.
pub fn synthetic_corpus(essays: usize, prompts: usize) -> Corpus {
    assert!(prompts >= 1, "need at least one prompt");
    let records = (0..essays)
        .map(|i| {
            let id = essay_id(i);
            let prompt_no = i % prompts + 1;
            let trait_scores: BTreeMap<String, i64> = TraitId::ALL
                .into_iter()
                .map(|t| (t.as_str().to_string(), human_trait(i, t)))
                .collect();
            EssayRecord {
                essay_id: id.clone(),
                prompt_id: format!("prompt-{prompt_no}"),
                task_directions: format!(
                    "Write an argumentative essay responding to prompt {prompt_no}. \
                     Take a clear position and support it."
                ),
                prompt_text: format!(
                    "Prompt {prompt_no}: Some people believe technology improves education. \
                     Others disagree. Variant {prompt_no}."
                ),
                essay_text: format!(
                    "Essay {id} {token} responding to prompt {prompt_no}. {body}",
                    token = essay_token(&id),
                    body = filler_words(60 + 3 * i, i)
                ),
                human_holistic_score: human_holistic(i),
                human_feedback: Some(human_feedback(i)),
                human_trait_scores: Some(trait_scores),
                source_tag: "synthetic".to_string(),
            }
        })
        .collect();
    let rubrics = TraitId::ALL.into_iter().map(|t| (t, trait_rubric(t))).collect();
    Corpus { records, rubric_holistic: holistic_rubric(), rubrics_trait: rubrics }
}

/// JSON body a scorer agent would return.
pub fn scorer_response(score: i64, reasoning: &str, feedback: &str) -> String {
    serde_json::json!({ "score": score, "reasoning": reasoning, "feedback": feedback })
        .to_string()
}

/// JSON body a judge would return.
pub fn judge_response(choices: &BTreeMap<Criterion, u8>) -> String {
    let map: BTreeMap<&str, u8> = choices.iter().map(|(c, v)| (c.as_str(), *v)).collect();
    serde_json::to_string(&map).expect("judge choices serialize")
}

/// Rules answering every scoring call (five traits, orchestrator, baseline)
/// for every essay in the corpus. A sprinkling of responses arrive dressed up
/// — fenced, or with the score as a string — so full runs exercise the repair
/// path; the dressing is a function of the index, keeping replays identical.
pub fn scoring_rules(corpus: &Corpus) -> Vec<ScriptRule> {
    let mut rules = Vec::new();
    for (i, record) in corpus.records.iter().enumerate() {
        let token = essay_token(&record.essay_id);
        for t in TraitId::ALL {
            let mut needles = vec![token.clone()];
            match t {
                TraitId::T1 | TraitId::T2 | TraitId::T3 => {
                    needles.push(ARGUMENT_MARKER.to_string());
                    needles.push(t.description().to_string());
                }
                TraitId::T4 => needles.push(VOCABULARY_MARKER.to_string()),
                TraitId::T5 => needles.push(GRAMMAR_MARKER.to_string()),
            }
            let body = scorer_response(
                scripted_trait_score(i, t),
                &format!("Assessment of {} for {}.", t.description(), record.essay_id),
                &format!("Improve {}: {}", t.description().to_lowercase(), filler_words(12, i)),
            );
            rules.push(ScriptRule::content(ScriptKey::AllOf(needles), body));
        }

        let orch_score = scripted_orchestrator_score(i);
        let orch_body = if i % 11 == 5 {
            // Score smuggled in as a string; the repair pass coerces it.
            serde_json::json!({
                "score": orch_score.to_string(),
                "reasoning": format!("Balanced the five expert views on {}.", record.essay_id),
                "feedback": magic_feedback(i),
            })
            .to_string()
        } else {
            scorer_response(
                orch_score,
                &format!("Balanced the five expert views on {}.", record.essay_id),
                &magic_feedback(i),
            )
        };
        rules.push(ScriptRule::content(
            ScriptKey::AllOf(vec![token.clone(), ORCHESTRATOR_MARKER.to_string()]),
            orch_body,
        ));

        let base_inner = scorer_response(
            scripted_baseline_score(i),
            &format!("Holistic read of {}.", record.essay_id),
            &baseline_feedback(i),
        );
        let base_body =
            if i % 7 == 3 { format!("```json\n{base_inner}\n```") } else { base_inner };
        rules.push(ScriptRule::content(
            ScriptKey::AllOf(vec![token, BASELINE_MARKER.to_string()]),
            base_body,
        ));
    }
    rules
}

/// Rules answering every judge call between the given feedback authors, in
/// either slot order. The winner per criterion follows the author ranking
/// except where [`prefers_higher_rank`] dissents, and is the same regardless
/// of slot order, so order-swapped verdicts agree.
pub fn judge_rules(corpus: &Corpus, voices: &[FeedbackVoice]) -> Vec<ScriptRule> {
    let mut rules = Vec::new();
    for (i, record) in corpus.records.iter().enumerate() {
        for &slot1 in voices {
            for &slot2 in voices {
                if slot1 == slot2 {
                    continue;
                }
                let needles = vec![
                    JUDGE_MARKER.to_string(),
                    format!("<feedback_1>\n{}{}", slot1.opening(), record.essay_id),
                    format!("<feedback_2>\n{}{}", slot2.opening(), record.essay_id),
                ];
                let choices: BTreeMap<Criterion, u8> = Criterion::ALL
                    .into_iter()
                    .map(|c| {
                        let slot1_wins =
                            (slot1.rank() > slot2.rank()) == prefers_higher_rank(i, c);
                        (c, if slot1_wins { 1 } else { 2 })
                    })
                    .collect();
                rules.push(ScriptRule::content(
                    ScriptKey::AllOf(needles),
                    judge_response(&choices),
                ));
            }
        }
    }
    rules
}

/// File form of content-matched rules, for endpoints configured with a
/// script path. Cache-key rules have no file representation.
pub fn to_script_file(rules: &[ScriptRule]) -> ScriptFile {
    let file_rules = rules
        .iter()
        .map(|rule| {
            let when_contains = match &rule.key {
                ScriptKey::Fallback => Vec::new(),
                ScriptKey::MessageContains(needle) => vec![needle.clone()],
                ScriptKey::AllOf(needles) => needles.clone(),
                ScriptKey::CacheKey(_) => panic!("cache-key rules have no file form"),
            };
            let responses = rule
                .responses
                .iter()
                .map(|r| match r {
                    ScriptResponse::Content(content) => {
                        ScriptFileResponse::Content { content: content.clone() }
                    }
                    ScriptResponse::Status(status) => {
                        ScriptFileResponse::Status { status: *status }
                    }
                    ScriptResponse::TransportError => {
                        ScriptFileResponse::Transport { transport_error: true }
                    }
                })
                .collect();
            ScriptFileRule { when_contains, responses, repeat: rule.repeat_last }
        })
        .collect();
    ScriptFile { rules: file_rules }
}

/// Two annotators, an adjudicator, and twelve judged pairs.
///
/// Per criterion the (agree-first, split, split, agree-second) cell counts
/// are chosen so Cohen's kappa lands on a small exact fraction:
/// C1 (9,1,0,2) → 3/4, C2 (5,2,1,4) → 1/2, C3 (5,2,2,3) → 11/35,
/// C4 (8,1,0,3) → 4/5, C5 (5,3,0,4) → 10/19. Their mean renders as 0.578.
#[derive(Debug, Clone)]
pub struct AgreementFixture {
    pub pair_ids: Vec<String>,
    /// 12 pairs × 5 criteria × 2 annotators = 120 records.
    pub annotations: Vec<AnnotationRecord>,
    /// One adjudicator record per (pair, criterion) the annotators split on.
    pub adjudications: Vec<AnnotationRecord>,
    pub expected_per_criterion: [(Criterion, f64); 5],
    pub expected_overall_3dp: &'static str,
}

const AGREEMENT_CELLS: [(Criterion, [usize; 4]); 5] = [
    (Criterion::C1, [9, 1, 0, 2]),
    (Criterion::C2, [5, 2, 1, 4]),
    (Criterion::C3, [5, 2, 2, 3]),
    (Criterion::C4, [8, 1, 0, 3]),
    (Criterion::C5, [5, 3, 0, 4]),
];

/// The fixture over its default pair ids `pair-01` … `pair-12`.
pub fn agreement_fixture() -> AgreementFixture {
    let ids: Vec<String> = (1..=12).map(|n| format!("pair-{n:02}")).collect();
    agreement_fixture_for(&ids)
}

/// The same annotation layout over caller-supplied pair ids (exactly 12,
/// already in the order the cells should be dealt over).
pub fn agreement_fixture_for(pair_ids: &[String]) -> AgreementFixture {
    assert_eq!(pair_ids.len(), 12, "fixture is laid out over exactly 12 pairs");
    let mut annotations = Vec::new();
    let mut adjudications = Vec::new();
    for (criterion, cells) in AGREEMENT_CELLS {
        let [both_llm, first_llm, first_human, _both_human] = cells;
        for (p, pair_id) in pair_ids.iter().enumerate() {
            let (a1, a2) = if p < both_llm {
                (AnnotationLabel::LLM, AnnotationLabel::LLM)
            } else if p < both_llm + first_llm {
                (AnnotationLabel::LLM, AnnotationLabel::HUMAN)
            } else if p < both_llm + first_llm + first_human {
                (AnnotationLabel::HUMAN, AnnotationLabel::LLM)
            } else {
                (AnnotationLabel::HUMAN, AnnotationLabel::HUMAN)
            };
            annotations.push(AnnotationRecord {
                pair_id: pair_id.clone(),
                criterion,
                annotator_id: "ann-1".to_string(),
                label: a1,
            });
            annotations.push(AnnotationRecord {
                pair_id: pair_id.clone(),
                criterion,
                annotator_id: "ann-2".to_string(),
                label: a2,
            });
            if a1 != a2 {
                adjudications.push(AnnotationRecord {
                    pair_id: pair_id.clone(),
                    criterion,
                    annotator_id: "adjudicator".to_string(),
                    label: if p % 2 == 0 { AnnotationLabel::LLM } else { AnnotationLabel::HUMAN },
                });
            }
        }
    }
    AgreementFixture {
        pair_ids: pair_ids.to_vec(),
        annotations,
        adjudications,
        expected_per_criterion: [
            (Criterion::C1, 0.75),
            (Criterion::C2, 0.5),
            (Criterion::C3, 11.0 / 35.0),
            (Criterion::C4, 0.8),
            (Criterion::C5, 10.0 / 19.0),
        ],
        expected_overall_3dp: "0.578",
    }
}
