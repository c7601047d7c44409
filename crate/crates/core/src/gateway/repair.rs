//! Structured-output recovery for model responses.
//!
//! Models wrap JSON in code fences, bury it in letter-style prose, type
//! curly quotes, or stringify numbers. [`parse_structured`] first tries the
//! text as-is, then applies a fixed repair sequence — strip code fences,
//! extract the first balanced-brace region, normalize smart quotes — and
//! finally coerces numeric strings on the parsed object, recording each
//! step it actually used so runs can audit how often a model needed repair.
//! Values that parse but violate the schema (score 9, judge choice 3, a
//! non-integral score) are rejected as schema violations, never silently
//! clamped.

use crate::types::Criterion;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt;

/// Which response schema to enforce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// `{"score": 0..=6, "reasoning": string, "feedback": string}`
    Scorer,
    /// `{"C1".."C5": 1 or 2}`
    Judge,
}

/// A schema-valid value plus the repair steps that were needed to get it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairedJson {
    pub value: Value,
    pub repairs_applied: Vec<RepairStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairStep {
    StripCodeFences,
    ExtractBracedRegion,
    NormalizeSmartQuotes,
    CoerceNumericStrings,
}

impl fmt::Display for RepairStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RepairStep::StripCodeFences => "strip_code_fences",
            RepairStep::ExtractBracedRegion => "extract_braced_region",
            RepairStep::NormalizeSmartQuotes => "normalize_smart_quotes",
            RepairStep::CoerceNumericStrings => "coerce_numeric_strings",
        })
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ParseError {
    /// No JSON object could be recovered. Carries the raw text for audit.
    #[error("no parseable JSON object in model output")]
    Unparseable { raw: String },
    /// A JSON object was recovered but breaks the schema.
    #[error("schema violation in field {field:?}: {detail}")]
    SchemaViolation { field: String, detail: String, raw: String },
}

/// Recovers a schema-valid JSON object from raw model output.
pub fn parse_structured(raw: &str, schema: Schema) -> Result<RepairedJson, ParseError> {
    let mut repairs = Vec::new();
    let mut text = raw.trim().to_owned();
    let mut parsed = try_parse_object(&text);

    if parsed.is_none() {
        if let Some(inner) = strip_code_fences(&text) {
            if inner != text {
                repairs.push(RepairStep::StripCodeFences);
                text = inner;
            }
            parsed = try_parse_object(&text);
        }
    }

    if parsed.is_none() {
        if let Some(region) = extract_braced_region(&text) {
            if region != text {
                repairs.push(RepairStep::ExtractBracedRegion);
                text = region;
            }
            parsed = try_parse_object(&text);
        }
    }

    if parsed.is_none() {
        let normalized = normalize_smart_quotes(&text);
        if normalized != text {
            repairs.push(RepairStep::NormalizeSmartQuotes);
            text = normalized;
            parsed = try_parse_object(&text);
        }
    }

    let Some(mut value) = parsed else {
        return Err(ParseError::Unparseable { raw: raw.to_owned() });
    };

    if coerce_numeric_strings(&mut value, schema) {
        repairs.push(RepairStep::CoerceNumericStrings);
    }

    validate(&value, schema, raw)?;
    Ok(RepairedJson { value, repairs_applied: repairs })
}

fn try_parse_object(text: &str) -> Option<Value> {
    match serde_json::from_str::<Value>(text) {
        Ok(v) if v.is_object() => Some(v),
        _ => None,
    }
}

/// Returns the content inside the first ``` fence pair, if any. A language
/// tag on the opening fence line is discarded; an unclosed fence runs to the
/// end of the text.
fn strip_code_fences(text: &str) -> Option<String> {
    let open = text.find("```")?;
    let after_open = &text[open + 3..];
    let content = match after_open.find('\n') {
        Some(newline) => &after_open[newline + 1..],
        None => after_open,
    };
    let inner = match content.find("```") {
        Some(close) => &content[..close],
        None => content,
    };
    Some(inner.trim().to_owned())
}

/// Returns the first balanced `{...}` region. String literals are tracked so
/// braces inside them do not count; curly double quotes count as string
/// delimiters too, since smart-quoted output is exactly what this pipeline
/// repairs.
fn extract_braced_region(text: &str) -> Option<String> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    // The delimiter that opened the current string, if inside one. A
    // straight-quoted string closes only on an unescaped straight quote —
    // curly quotes are ordinary content there, so valid JSON that merely
    // contains them still scans correctly. A curly-opened string closes on
    // any quote, since such text is about to be normalized anyway.
    let mut open_quote: Option<char> = None;
    let mut escaped = false;
    for (offset, c) in text[start..].char_indices() {
        if let Some(opener) = open_quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if opener == '"' {
                if c == '"' {
                    open_quote = None;
                }
            } else if matches!(c, '"' | '\u{201C}' | '\u{201D}') {
                open_quote = None;
            }
            continue;
        }
        match c {
            '"' | '\u{201C}' | '\u{201D}' => open_quote = Some(c),
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(text[start..start + offset + 1].to_owned());
                }
            }
            _ => {}
        }
    }
    None
}

/// Replaces curly double and single quotes with their ASCII forms.
fn normalize_smart_quotes(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '\u{201C}' | '\u{201D}' => '"',
            '\u{2018}' | '\u{2019}' => '\'',
            other => other,
        })
        .collect()
}

/// Rewrites string-typed numeric fields (e.g. `"score": "4"`) to integers.
/// Returns whether anything changed.
fn coerce_numeric_strings(value: &mut Value, schema: Schema) -> bool {
    let fields: &[&str] = match schema {
        Schema::Scorer => &["score"],
        Schema::Judge => &["C1", "C2", "C3", "C4", "C5"],
    };
    let Some(map) = value.as_object_mut() else { return false };
    let mut changed = false;
    for field in fields {
        if let Some(Value::String(s)) = map.get(*field) {
            if let Ok(n) = s.trim().parse::<i64>() {
                map.insert((*field).to_owned(), Value::from(n));
                changed = true;
            }
        }
    }
    changed
}

/// Reads an integer field, accepting integral floats (4.0) but rejecting
/// fractional ones (4.5).
fn integer_field(value: &Value, field: &str, raw: &str) -> Result<i64, ParseError> {
    let violation = |detail: String| ParseError::SchemaViolation {
        field: field.to_owned(),
        detail,
        raw: raw.to_owned(),
    };
    let entry = value
        .get(field)
        .ok_or_else(|| violation("field is missing".to_owned()))?;
    if let Some(n) = entry.as_i64() {
        return Ok(n);
    }
    if let Some(f) = entry.as_f64() {
        if f.fract() == 0.0 && f.abs() < i64::MAX as f64 {
            return Ok(f as i64);
        }
        return Err(violation(format!("{f} is not an integer")));
    }
    Err(violation(format!("expected an integer, found {entry}")))
}

fn string_field<'v>(value: &'v Value, field: &str, raw: &str) -> Result<&'v str, ParseError> {
    value
        .get(field)
        .and_then(Value::as_str)
        .ok_or_else(|| ParseError::SchemaViolation {
            field: field.to_owned(),
            detail: "field is missing or not a string".to_owned(),
            raw: raw.to_owned(),
        })
}

fn validate(value: &Value, schema: Schema, raw: &str) -> Result<(), ParseError> {
    match schema {
        Schema::Scorer => {
            let score = integer_field(value, "score", raw)?;
            if !(0..=6).contains(&score) {
                return Err(ParseError::SchemaViolation {
                    field: "score".to_owned(),
                    detail: format!("score {score} outside 0-6"),
                    raw: raw.to_owned(),
                });
            }
            string_field(value, "reasoning", raw)?;
            string_field(value, "feedback", raw)?;
        }
        Schema::Judge => {
            for criterion in Criterion::ALL {
                let choice = integer_field(value, criterion.as_str(), raw)?;
                if choice != 1 && choice != 2 {
                    return Err(ParseError::SchemaViolation {
                        field: criterion.as_str().to_owned(),
                        detail: format!("choice {choice} is not 1 or 2"),
                        raw: raw.to_owned(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Typed view of a validated scorer object.
pub fn scorer_fields(value: &Value) -> (i64, &str, &str) {
    let score = value
        .get("score")
        .and_then(|v| v.as_i64().or_else(|| v.as_f64().map(|f| f as i64)))
        .expect("validated scorer object");
    let reasoning = value["reasoning"].as_str().expect("validated scorer object");
    let feedback = value["feedback"].as_str().expect("validated scorer object");
    (score, reasoning, feedback)
}

/// Typed view of a validated judge object.
pub fn judge_choices(value: &Value) -> std::collections::BTreeMap<Criterion, u8> {
    Criterion::ALL
        .iter()
        .map(|&c| {
            let choice = value
                .get(c.as_str())
                .and_then(|v| v.as_i64().or_else(|| v.as_f64().map(|f| f as i64)))
                .expect("validated judge object");
            (c, choice as u8)
        })
        .collect()
}
