//! Hand-parsed fixtures for the model-output repair cascade. Every expected
//! value below was derived by reading the raw text, not by running the
//! parser — if the cascade and a human disagree, the human wins.

use magic_core::gateway::repair::{
    judge_choices, parse_structured, scorer_fields, ParseError, RepairStep, Schema,
};
use magic_core::types::Criterion;
use proptest::prelude::*;

fn parse_scorer(raw: &str) -> (i64, String, String, Vec<RepairStep>) {
    let repaired = parse_structured(raw, Schema::Scorer).expect("fixture should parse");
    let (score, reasoning, feedback) = scorer_fields(&repaired.value);
    (score, reasoning.to_string(), feedback.to_string(), repaired.repairs_applied)
}

#[test]
fn clean_object_needs_no_repair() {
    let raw = r#"{"score": 4, "reasoning": "Well organized.", "feedback": "Add evidence."}"#;
    let (score, reasoning, feedback, repairs) = parse_scorer(raw);
    assert_eq!((score, reasoning.as_str(), feedback.as_str()), (4, "Well organized.", "Add evidence."));
    assert!(repairs.is_empty());
}

#[test]
fn fenced_block_with_language_tag() {
    let raw = "```json\n{\"score\": 5, \"reasoning\": \"r\", \"feedback\": \"f\"}\n```";
    let (score, _, _, repairs) = parse_scorer(raw);
    assert_eq!(score, 5);
    assert_eq!(repairs, vec![RepairStep::StripCodeFences]);
}

#[test]
fn fenced_block_without_language_tag() {
    let raw = "```\n{\"score\": 0, \"reasoning\": \"r\", \"feedback\": \"f\"}\n```";
    let (score, _, _, repairs) = parse_scorer(raw);
    assert_eq!(score, 0);
    assert_eq!(repairs, vec![RepairStep::StripCodeFences]);
}

#[test]
fn unclosed_fence_runs_to_end_of_text() {
    let raw = "```json\n{\"score\": 2, \"reasoning\": \"r\", \"feedback\": \"f\"}";
    let (score, _, _, repairs) = parse_scorer(raw);
    assert_eq!(score, 2);
    assert_eq!(repairs, vec![RepairStep::StripCodeFences]);
}

#[test]
fn email_style_prose_around_the_object() {
    let raw = "Hi! Thanks for the essay. Here's my assessment:\n\n\
               {\"score\": 3, \"reasoning\": \"Decent structure.\", \"feedback\": \"Vary sentences.\"}\n\n\
               Best regards,\nThe Grader";
    let (score, reasoning, _, repairs) = parse_scorer(raw);
    assert_eq!(score, 3);
    assert_eq!(reasoning, "Decent structure.");
    assert_eq!(repairs, vec![RepairStep::ExtractBracedRegion]);
}

#[test]
fn smart_quoted_object() {
    let raw = "{\u{201C}score\u{201D}: 6, \u{201C}reasoning\u{201D}: \u{201C}Excellent.\u{201D}, \
               \u{201C}feedback\u{201D}: \u{201C}Keep it up.\u{201D}}";
    let (score, reasoning, feedback, repairs) = parse_scorer(raw);
    assert_eq!((score, reasoning.as_str(), feedback.as_str()), (6, "Excellent.", "Keep it up."));
    assert_eq!(repairs, vec![RepairStep::NormalizeSmartQuotes]);
}

#[test]
fn smart_quoted_value_containing_a_closing_brace() {
    // The brace scanner must treat curly quotes as string delimiters, or it
    // would cut the region at the '}' inside the reasoning text.
    let raw = "Result: {\u{201C}score\u{201D}: 1, \u{201C}reasoning\u{201D}: \u{201C}uses {braces} oddly\u{201D}, \
               \u{201C}feedback\u{201D}: \u{201C}ok\u{201D}}";
    let (score, reasoning, _, repairs) = parse_scorer(raw);
    assert_eq!(score, 1);
    assert_eq!(reasoning, "uses {braces} oddly");
    assert_eq!(
        repairs,
        vec![RepairStep::ExtractBracedRegion, RepairStep::NormalizeSmartQuotes]
    );
}

#[test]
fn score_as_numeric_string_is_coerced() {
    let raw = r#"{"score": "4", "reasoning": "r", "feedback": "f"}"#;
    let (score, _, _, repairs) = parse_scorer(raw);
    assert_eq!(score, 4);
    assert_eq!(repairs, vec![RepairStep::CoerceNumericStrings]);
}

#[test]
fn fence_smart_quotes_and_string_score_stack() {
    let raw = "```json\n{\u{201C}score\u{201D}: \u{201C}5\u{201D}, \u{201C}reasoning\u{201D}: \u{201C}r\u{201D}, \
               \u{201C}feedback\u{201D}: \u{201C}f\u{201D}}\n```";
    let (score, _, _, repairs) = parse_scorer(raw);
    assert_eq!(score, 5);
    assert_eq!(
        repairs,
        vec![
            RepairStep::StripCodeFences,
            RepairStep::NormalizeSmartQuotes,
            RepairStep::CoerceNumericStrings,
        ]
    );
}

#[test]
fn valid_json_containing_backticks_is_left_untouched() {
    // A naive "strip fences first" pass would mangle this valid object.
    let raw = r#"{"score": 2, "reasoning": "uses ```code``` blocks", "feedback": "drop the ```"}"#;
    let (score, reasoning, feedback, repairs) = parse_scorer(raw);
    assert_eq!(score, 2);
    assert_eq!(reasoning, "uses ```code``` blocks");
    assert_eq!(feedback, "drop the ```");
    assert!(repairs.is_empty());
}

#[test]
fn integral_float_score_is_accepted() {
    let raw = r#"{"score": 4.0, "reasoning": "r", "feedback": "f"}"#;
    let (score, _, _, repairs) = parse_scorer(raw);
    assert_eq!(score, 4);
    assert!(repairs.is_empty());
}

#[test]
fn fractional_score_is_a_schema_violation() {
    let err = parse_structured(r#"{"score": 4.5, "reasoning": "r", "feedback": "f"}"#, Schema::Scorer)
        .unwrap_err();
    assert!(matches!(err, ParseError::SchemaViolation { ref field, .. } if field == "score"), "{err:?}");
}

#[test]
fn out_of_range_scores_are_schema_violations() {
    for raw in [
        r#"{"score": 9, "reasoning": "r", "feedback": "f"}"#,
        r#"{"score": -1, "reasoning": "r", "feedback": "f"}"#,
    ] {
        let err = parse_structured(raw, Schema::Scorer).unwrap_err();
        assert!(matches!(err, ParseError::SchemaViolation { ref field, .. } if field == "score"));
    }
}

#[test]
fn missing_and_mistyped_fields_name_the_field() {
    let err = parse_structured(r#"{"score": 4, "reasoning": "r"}"#, Schema::Scorer).unwrap_err();
    assert!(matches!(err, ParseError::SchemaViolation { ref field, .. } if field == "feedback"));

    let err =
        parse_structured(r#"{"score": 4, "reasoning": 7, "feedback": "f"}"#, Schema::Scorer)
            .unwrap_err();
    assert!(matches!(err, ParseError::SchemaViolation { ref field, .. } if field == "reasoning"));
}

#[test]
fn clean_judge_object() {
    let raw = r#"{"C1": 1, "C2": 2, "C3": 1, "C4": 1, "C5": 2}"#;
    let repaired = parse_structured(raw, Schema::Judge).unwrap();
    assert!(repaired.repairs_applied.is_empty());
    let choices = judge_choices(&repaired.value);
    assert_eq!(choices[&Criterion::C1], 1);
    assert_eq!(choices[&Criterion::C2], 2);
    assert_eq!(choices[&Criterion::C5], 2);
    assert_eq!(choices.len(), 5);
}

#[test]
fn judge_choices_as_strings_are_coerced() {
    let raw = r#"{"C1": "1", "C2": "2", "C3": "1", "C4": "2", "C5": "1"}"#;
    let repaired = parse_structured(raw, Schema::Judge).unwrap();
    assert_eq!(repaired.repairs_applied, vec![RepairStep::CoerceNumericStrings]);
    assert_eq!(judge_choices(&repaired.value)[&Criterion::C4], 2);
}

#[test]
fn judge_choice_out_of_range_and_missing_criterion() {
    let err = parse_structured(r#"{"C1": 1, "C2": 2, "C3": 3, "C4": 1, "C5": 2}"#, Schema::Judge)
        .unwrap_err();
    assert!(matches!(err, ParseError::SchemaViolation { ref field, .. } if field == "C3"));

    let err =
        parse_structured(r#"{"C1": 1, "C2": 2, "C3": 1, "C4": 1}"#, Schema::Judge).unwrap_err();
    assert!(matches!(err, ParseError::SchemaViolation { ref field, .. } if field == "C5"));
}

#[test]
fn refusals_and_truncations_are_unparseable_with_raw_preserved() {
    for raw in [
        "I cannot score this essay, sorry.",
        "{\"score\": 4, \"reasoning\": \"cut off mid-",
        "",
    ] {
        let err = parse_structured(raw, Schema::Scorer).unwrap_err();
        match err {
            ParseError::Unparseable { raw: carried } => assert_eq!(carried, raw),
            other => panic!("expected Unparseable, got {other:?}"),
        }
    }
}

fn tricky_text() -> impl Strategy<Value = String> {
    // Newlines, braces, quotes, unicode — but no backticks (the fence
    // decorator below would become ambiguous).
    proptest::string::string_regex("[a-zA-Z0-9 {}\"'\u{201C}\u{201D}\n.,:!?-]{0,60}")
        .expect("valid regex")
}

proptest! {
    /// A schema-valid object survives any of the observed decoration styles,
    /// and re-parsing the recovered value's serialization is a fixed point:
    /// clean in, clean out, nothing further to repair.
    #[test]
    fn recovery_then_reparse_is_idempotent(
        score in 0i64..=6,
        reasoning in tricky_text(),
        feedback in tricky_text(),
        decoration in 0usize..4,
    ) {
        let object = serde_json::json!({
            "score": score,
            "reasoning": reasoning,
            "feedback": feedback,
        })
        .to_string();
        let raw = match decoration {
            0 => object.clone(),
            1 => format!("```json\n{object}\n```"),
            2 => format!("```\n{object}\n```"),
            _ => format!("Here is my verdict:\n{object}\nLet me know if unclear."),
        };
        let first = parse_structured(&raw, Schema::Scorer).expect("decorated object recovers");
        let (got_score, got_reasoning, got_feedback) = scorer_fields(&first.value);
        prop_assert_eq!(got_score, score);
        prop_assert_eq!(got_reasoning, reasoning.as_str());
        prop_assert_eq!(got_feedback, feedback.as_str());

        let reserialized = first.value.to_string();
        let second = parse_structured(&reserialized, Schema::Scorer).expect("fixed point");
        prop_assert!(second.repairs_applied.is_empty());
        prop_assert_eq!(first.value, second.value);
    }

    /// The cascade never panics, whatever arrives.
    #[test]
    fn arbitrary_text_never_panics(raw in "[\\x00-\\x7F\u{201C}\u{201D}]{0,120}") {
        let _ = parse_structured(&raw, Schema::Scorer);
        let _ = parse_structured(&raw, Schema::Judge);
    }
}
