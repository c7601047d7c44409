//! The six prompt templates are frozen artifacts: their bytes are pinned by
//! digest, and rendering is checked against an independent substitution
//! oracle rather than against the renderer's own machinery.

use magic_core::corpus::EssayRecord;
use magic_core::prompts::{
    parse_expert_block, routed_template, ExpertEntry, OutputFormatSpec, PromptLibrary,
    TemplateId, TraitSpec,
};
use magic_core::types::TraitId;
use proptest::prelude::*;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Digest of each template body as transcribed in `prompts/`. A diff here
/// means the wording drifted, which silently changes every model exchange.
const FROZEN: [(TemplateId, &str); 6] = [
    (
        TemplateId::Baseline,
        "fe33bc89191ec9414f1f206cf3098a0e4ee668c1b7ed017554abc66c3d098ffa",
    ),
    (
        TemplateId::ArgumentAgent,
        "ff22d0905fb1da6d8dcb36b68970c0a56164a85f3e5f25dae8b2a0b0d7c92445",
    ),
    (
        TemplateId::VocabularyAgent,
        "cc9023ddf60645f43ca5b305b94d09315264f70d2dd5fb73fdb20e7f8e84837b",
    ),
    (
        TemplateId::GrammarAgent,
        "5e2cb14b311fc42238c58713405ffa410030df108e328e4c7a4887a44d4dcb7b",
    ),
    (
        TemplateId::Orchestrator,
        "5912f84a272133c128af6a2d4608b53487af470d3131bb71875cdfe18c5fb7b0",
    ),
    (TemplateId::Judge, "b273b57f3ea451409c21554c80940ca09291610c98aa90603f910529586b63f5"),
];

fn hex_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn essay() -> EssayRecord {
    EssayRecord {
        essay_id: "essay-001".to_string(),
        prompt_id: "prompt-1".to_string(),
        task_directions: "Write an argumentative essay.".to_string(),
        prompt_text: "Is homework beneficial?".to_string(),
        essay_text: "Homework helps students practice. It also builds discipline.".to_string(),
        human_holistic_score: 4,
        human_feedback: None,
        human_trait_scores: None,
        source_tag: "test".to_string(),
    }
}

#[test]
fn template_bodies_match_frozen_digests() {
    let library = PromptLibrary::embedded();
    for (id, expected) in FROZEN {
        assert_eq!(
            hex_digest(&library.get(id).body),
            expected,
            "template {id:?} drifted from its transcription"
        );
    }
}

#[test]
fn embedded_library_matches_the_files_on_disk() {
    let from_dir = PromptLibrary::from_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/../../prompts"))
        .expect("template directory loads");
    let embedded = PromptLibrary::embedded();
    for (id, _) in FROZEN {
        assert_eq!(embedded.get(id).body, from_dir.get(id).body, "{id:?}");
    }
}

/// Renders with the dumbest possible oracle — sequential `str::replace` of
/// each `{name}` — and demands byte identity. Binding values are chosen
/// brace- and marker-free so the oracle's replace chain cannot cascade.
#[test]
fn render_matches_independent_substitution_oracle() {
    let library = PromptLibrary::embedded();
    for (id, _) in FROZEN {
        let template = library.get(id);
        let mut bindings = BTreeMap::new();
        let mut oracle = template.body.clone();
        for (i, name) in template.placeholders.iter().enumerate() {
            let value = format!("VALUE-{i}-for-{name}");
            oracle = oracle.replace(&format!("{{{name}}}"), &value);
            bindings.insert(name.clone(), value);
        }
        let rendered = template.render(&bindings).expect("render succeeds");
        assert_eq!(rendered, oracle, "template {id:?}");
    }
}

#[test]
fn routing_sends_each_trait_to_its_template() {
    let expected = [
        (TraitId::T1, TemplateId::ArgumentAgent),
        (TraitId::T2, TemplateId::ArgumentAgent),
        (TraitId::T3, TemplateId::ArgumentAgent),
        (TraitId::T4, TemplateId::VocabularyAgent),
        (TraitId::T5, TemplateId::GrammarAgent),
    ];
    for (trait_id, template_id) in expected {
        assert_eq!(routed_template(trait_id), template_id, "{trait_id}");
    }

    // And the rendered system prompt carries the matching rubric tag, with
    // the trait description leading the rubric slot for the shared template.
    let library = PromptLibrary::embedded();
    let essay = essay();
    let fmt = OutputFormatSpec::scorer();
    for trait_id in TraitId::ALL {
        let spec = TraitSpec::standard(trait_id, "Score 6: strong. Score 0: absent.");
        let messages = library.trait_messages(&spec, &essay, &fmt).unwrap();
        assert_eq!(messages.len(), 2);
        let system = &messages[0].content;
        let tag = match trait_id {
            TraitId::T1 | TraitId::T2 | TraitId::T3 => "<argumentative_rubric>",
            TraitId::T4 => "<vocabulary_rubric>",
            TraitId::T5 => "<grammar_rubric>",
        };
        assert!(system.contains(tag), "{trait_id}: missing {tag}");
        if routed_template(trait_id) == TemplateId::ArgumentAgent {
            let slot_start = system.find(&format!("{tag}\n")).unwrap() + tag.len() + 1;
            assert!(
                system[slot_start..].starts_with(trait_id.description()),
                "{trait_id}: description does not lead the rubric slot"
            );
        }
        assert!(messages[1].content.contains("<student_essay>"));
    }
}

#[test]
fn orchestrator_block_lists_all_five_scores_in_trait_order() {
    let library = PromptLibrary::embedded();
    let scores = [4, 4, 3, 5, 5];
    let entries: Vec<ExpertEntry<'_>> = TraitId::ALL
        .into_iter()
        .zip(scores)
        .map(|(trait_id, score)| ExpertEntry {
            trait_id,
            score: magic_core::types::Score::new(score).unwrap(),
            reasoning: "solid work",
            feedback: "keep going",
        })
        .collect();
    let messages = library
        .orchestrator_messages(&entries, &essay(), &OutputFormatSpec::scorer())
        .unwrap();
    let parsed = parse_expert_block(&messages[0].content);
    let expected: Vec<(TraitId, i64)> = TraitId::ALL.into_iter().zip(scores).collect();
    assert_eq!(parsed, expected);
}

#[test]
fn judge_prompt_embeds_criteria_and_both_feedbacks_in_one_message() {
    let library = PromptLibrary::embedded();
    let messages = library
        .judge_messages(
            "Work on your thesis.",
            "Add more evidence.",
            &essay(),
            "Score 6: strong.",
            &OutputFormatSpec::judge(),
        )
        .unwrap();
    assert_eq!(messages.len(), 1, "judge prompt is a single system message");
    let text = &messages[0].content;
    assert!(text.contains("C1: Which feedback is more relevant to the essay content?"));
    assert!(text.contains("<feedback_1>\nWork on your thesis."));
    assert!(text.contains("<feedback_2>\nAdd more evidence."));
}

#[test]
fn judge_accepts_identical_feedback_texts() {
    let library = PromptLibrary::embedded();
    let messages = library
        .judge_messages("Same words.", "Same words.", &essay(), "rubric", &OutputFormatSpec::judge())
        .unwrap();
    assert!(messages[0].content.matches("Same words.").count() >= 2);
}

fn marker_free_value() -> impl Strategy<Value = String> {
    // No '<' (escaped on injection) and no braces (placeholder syntax).
    proptest::string::string_regex("[a-z0-9 .,!?]{0,40}").expect("valid regex")
}

proptest! {
    /// Distinct marker-free binding sets render to distinct strings: the
    /// literal separators between slots all contain '<', which no
    /// marker-free value can fake.
    #[test]
    fn render_is_injective_in_marker_free_bindings(
        a in proptest::collection::vec(marker_free_value(), 4),
        b in proptest::collection::vec(marker_free_value(), 4),
    ) {
        let library = PromptLibrary::embedded();
        let template = library.get(TemplateId::Baseline);
        let names: Vec<&String> = template.placeholders.iter().collect();
        prop_assert_eq!(names.len(), 4);
        let bind = |values: &[String]| -> BTreeMap<String, String> {
            names.iter().zip(values).map(|(n, v)| ((*n).clone(), v.clone())).collect()
        };
        let bound_a = bind(&a);
        let bound_b = bind(&b);
        let rendered_a = template.render(&bound_a).unwrap();
        let rendered_b = template.render(&bound_b).unwrap();
        prop_assert_eq!(bound_a == bound_b, rendered_a == rendered_b);
    }
}
