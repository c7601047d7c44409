//! Prompt templates and chat-message construction.
//!
//! The six template bodies live as golden files under `prompts/` and are
//! embedded into the binary; [`PromptLibrary::from_dir`] loads overrides.
//! Rendering is a single left-to-right pass: substituted values are never
//! re-scanned, so template syntax inside a binding value stays literal.
//!
//! All externally sourced text (essay bodies, rubrics, model-produced
//! reasoning and feedback) is injected through [`escape_markers`], which
//! rewrites `<` to `&lt;`. The templates delimit every slot with
//! angle-bracket markers, so escaped content cannot forge or close a marker,
//! and — because each slot's closing text contains a `<` — two distinct
//! escaped binding sets always produce distinct renders.

use crate::types::{ChatMessage, Criterion, Score, TraitId};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

/// The six template roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Baseline,
    ArgumentAgent,
    VocabularyAgent,
    GrammarAgent,
    Orchestrator,
    Judge,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::Baseline,
        TemplateId::ArgumentAgent,
        TemplateId::VocabularyAgent,
        TemplateId::GrammarAgent,
        TemplateId::Orchestrator,
        TemplateId::Judge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Baseline => "baseline",
            TemplateId::ArgumentAgent => "argument_agent",
            TemplateId::VocabularyAgent => "vocabulary_agent",
            TemplateId::GrammarAgent => "grammar_agent",
            TemplateId::Orchestrator => "orchestrator",
            TemplateId::Judge => "judge",
        }
    }

    /// The rubric-slot placeholder differs per template; everything else is
    /// shared.
    pub fn expected_placeholders(self) -> BTreeSet<&'static str> {
        let mut set: BTreeSet<&'static str> =
            ["task_directions", "prompt", "output_format"].into();
        match self {
            TemplateId::Baseline => {
                set.insert("rubric");
            }
            TemplateId::ArgumentAgent => {
                set.insert("argumentative_rubric");
            }
            TemplateId::VocabularyAgent => {
                set.insert("vocabulary_rubric");
            }
            TemplateId::GrammarAgent => {
                set.insert("grammar_rubric");
            }
            TemplateId::Orchestrator => {
                set.insert("expert_grader_scores_and_reasoning");
            }
            TemplateId::Judge => {
                set.extend(["rubric", "feedback_1", "feedback_2", "student_essay"]);
            }
        }
        set
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A template body plus the placeholder names it declares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: TemplateId,
    pub body: String,
    pub placeholders: BTreeSet<String>,
}

#[derive(Debug, Clone)]
enum Segment {
    Literal(std::ops::Range<usize>),
    Placeholder { name: std::ops::Range<usize> },
}

/// Splits a body into literal runs and `{identifier}` placeholder spans.
/// Brace pairs whose content is not a lowercase identifier stay literal.
fn segments(body: &str) -> Vec<Segment> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut literal_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = find_placeholder_end(bytes, i + 1) {
                if literal_start < i {
                    out.push(Segment::Literal(literal_start..i));
                }
                out.push(Segment::Placeholder { name: i + 1..end });
                i = end + 1;
                literal_start = i;
                continue;
            }
        }
        i += 1;
    }
    if literal_start < bytes.len() {
        out.push(Segment::Literal(literal_start..bytes.len()));
    }
    out
}

/// Returns the index of the closing `}` when the bytes from `start` form an
/// identifier placeholder.
fn find_placeholder_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut i = start;
    while i < bytes.len() {
        match bytes[i] {
            b'}' => return (i > start && !bytes[start].is_ascii_digit()).then_some(i),
            b'a'..=b'z' | b'0'..=b'9' | b'_' => i += 1,
            _ => return None,
        }
    }
    None
}

impl PromptTemplate {
    pub fn parse(template_id: TemplateId, body: impl Into<String>) -> Self {
        let body = body.into();
        let placeholders = segments(&body)
            .iter()
            .filter_map(|seg| match seg {
                Segment::Placeholder { name } => Some(body[name.clone()].to_owned()),
                Segment::Literal(_) => None,
            })
            .collect();
        PromptTemplate { template_id, body, placeholders }
    }

    /// Substitutes every placeholder in one pass. The binding keys must
    /// cover the template's placeholders exactly.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, PromptError> {
        for name in &self.placeholders {
            if !bindings.contains_key(name) {
                return Err(PromptError::MissingBinding(name.clone()));
            }
        }
        for key in bindings.keys() {
            if !self.placeholders.contains(key) {
                return Err(PromptError::UnknownBinding(key.clone()));
            }
        }
        let mut out = String::with_capacity(self.body.len());
        for seg in segments(&self.body) {
            match seg {
                Segment::Literal(range) => out.push_str(&self.body[range]),
                Segment::Placeholder { name } => {
                    out.push_str(&bindings[&self.body[name]]);
                }
            }
        }
        Ok(out)
    }
}

/// Rewrites `<` to `&lt;` so injected text cannot introduce or close an
/// angle-bracket structural marker.
pub fn escape_markers(text: &str) -> String {
    text.replace('<', "&lt;")
}

/// Instructions appended through the `{output_format}` slot telling the
/// model what JSON object to emit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFormatSpec {
    pub schema_text: String,
}

impl OutputFormatSpec {
    /// Schema for scoring agents: score, reasoning, feedback.
    pub fn scorer() -> Self {
        OutputFormatSpec {
            schema_text: "Respond with only a single JSON object, with no prose before or \
                          after it, in exactly this shape:\n\
                          {\"score\": <an integer from 0 to 6>, \"reasoning\": <a string \
                          explaining why you chose the score>, \"feedback\": <a string of \
                          feedback for the student>}"
                .to_owned(),
        }
    }

    /// Schema for the judge: one 1-or-2 choice per criterion.
    pub fn judge() -> Self {
        OutputFormatSpec {
            schema_text: "Respond with only a single JSON object, with no prose before or \
                          after it, in exactly this shape:\n\
                          {\"C1\": <1 or 2>, \"C2\": <1 or 2>, \"C3\": <1 or 2>, \
                          \"C4\": <1 or 2>, \"C5\": <1 or 2>}"
                .to_owned(),
        }
    }
}

/// One trait agent's configuration: what it grades, which template serves
/// it, and the sub-rubric it scores against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraitSpec {
    pub trait_id: TraitId,
    pub description: String,
    pub template_id: TemplateId,
    pub sub_rubric: String,
}

/// Fixed routing: T1–T3 share the argumentative template (specialised by
/// trait description), T4 and T5 have dedicated templates.
pub fn routed_template(trait_id: TraitId) -> TemplateId {
    match trait_id {
        TraitId::T1 | TraitId::T2 | TraitId::T3 => TemplateId::ArgumentAgent,
        TraitId::T4 => TemplateId::VocabularyAgent,
        TraitId::T5 => TemplateId::GrammarAgent,
    }
}

impl TraitSpec {
    pub fn standard(trait_id: TraitId, sub_rubric: impl Into<String>) -> Self {
        TraitSpec {
            trait_id,
            description: trait_id.description().to_owned(),
            template_id: routed_template(trait_id),
            sub_rubric: sub_rubric.into(),
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.template_id != routed_template(self.trait_id) {
            return Err(PromptError::BadRouting {
                trait_id: self.trait_id,
                template_id: self.template_id,
            });
        }
        if self.sub_rubric.trim().is_empty() {
            return Err(PromptError::EmptySubRubric(self.trait_id));
        }
        Ok(())
    }

    /// Content for the template's rubric slot. The argumentative template is
    /// shared by three traits, so the trait description leads the rubric to
    /// specialise it; the dedicated templates already name their trait.
    fn rubric_slot(&self) -> String {
        if self.template_id == TemplateId::ArgumentAgent {
            format!("{}\n\n{}", self.description, self.sub_rubric)
        } else {
            self.sub_rubric.clone()
        }
    }
}

/// One trait verdict as the orchestrator sees it.
#[derive(Debug, Clone, Copy)]
pub struct ExpertEntry<'a> {
    pub trait_id: TraitId,
    pub score: Score,
    pub reasoning: &'a str,
    pub feedback: &'a str,
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("no binding provided for placeholder {0:?}")]
    MissingBinding(String),
    #[error("binding {0:?} does not correspond to any placeholder")]
    UnknownBinding(String),
    #[error("missing verdict for trait {0}")]
    MissingTrait(TraitId),
    #[error("more than one verdict for trait {0}")]
    DuplicateTrait(TraitId),
    #[error("feedback_{0} is empty")]
    EmptyFeedback(u8),
    #[error("rubric text is empty")]
    EmptyRubric,
    #[error("sub-rubric for trait {0} is empty")]
    EmptySubRubric(TraitId),
    #[error("trait {trait_id} must not use template {template_id}")]
    BadRouting { trait_id: TraitId, template_id: TemplateId },
    #[error("cannot read template {path}: {source}")]
    TemplateIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("template {id} is malformed: {detail}")]
    BadTemplate { id: TemplateId, detail: String },
}

/// The six templates, loaded once and immutable afterwards.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

const EMBEDDED_BODIES: [(TemplateId, &str); 6] = [
    (TemplateId::Baseline, include_str!("../../../prompts/baseline.txt")),
    (TemplateId::ArgumentAgent, include_str!("../../../prompts/argument_agent.txt")),
    (TemplateId::VocabularyAgent, include_str!("../../../prompts/vocabulary_agent.txt")),
    (TemplateId::GrammarAgent, include_str!("../../../prompts/grammar_agent.txt")),
    (TemplateId::Orchestrator, include_str!("../../../prompts/orchestrator.txt")),
    (TemplateId::Judge, include_str!("../../../prompts/judge.txt")),
];

impl PromptLibrary {
    /// The golden templates compiled into the binary.
    pub fn embedded() -> Self {
        let templates = EMBEDDED_BODIES
            .into_iter()
            .map(|(id, body)| {
                let template = PromptTemplate::parse(id, body);
                check_placeholders(&template).expect("embedded templates are golden-tested");
                (id, template)
            })
            .collect();
        PromptLibrary { templates }
    }

    /// Loads `<dir>/<template_id>.txt` for each template, checking that the
    /// declared placeholder set matches what the pipeline will bind.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let mut templates = BTreeMap::new();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{}.txt", id.as_str()));
            let body = std::fs::read_to_string(&path).map_err(|source| {
                PromptError::TemplateIo { path: path.display().to_string(), source }
            })?;
            let template = PromptTemplate::parse(id, body);
            check_placeholders(&template)?;
            templates.insert(id, template);
        }
        Ok(PromptLibrary { templates })
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    /// System + user messages for the single-prompt baseline grader.
    pub fn baseline_messages(
        &self,
        essay: &crate::corpus::EssayRecord,
        rubric: &str,
        fmt: &OutputFormatSpec,
    ) -> Result<Vec<ChatMessage>, PromptError> {
        if rubric.trim().is_empty() {
            return Err(PromptError::EmptyRubric);
        }
        let bindings = bindings([
            ("rubric", escape_markers(rubric)),
            ("task_directions", escape_markers(&essay.task_directions)),
            ("prompt", escape_markers(&essay.prompt_text)),
            ("output_format", fmt.schema_text.clone()),
        ]);
        let system = self.get(TemplateId::Baseline).render(&bindings)?;
        Ok(vec![ChatMessage::system(system), student_essay_message(&essay.essay_text)])
    }

    /// System + user messages for one trait agent.
    pub fn trait_messages(
        &self,
        spec: &TraitSpec,
        essay: &crate::corpus::EssayRecord,
        fmt: &OutputFormatSpec,
    ) -> Result<Vec<ChatMessage>, PromptError> {
        spec.validate()?;
        let rubric_placeholder = match spec.template_id {
            TemplateId::ArgumentAgent => "argumentative_rubric",
            TemplateId::VocabularyAgent => "vocabulary_rubric",
            TemplateId::GrammarAgent => "grammar_rubric",
            other => {
                return Err(PromptError::BadRouting {
                    trait_id: spec.trait_id,
                    template_id: other,
                })
            }
        };
        let bindings = bindings([
            (rubric_placeholder, escape_markers(&spec.rubric_slot())),
            ("task_directions", escape_markers(&essay.task_directions)),
            ("prompt", escape_markers(&essay.prompt_text)),
            ("output_format", fmt.schema_text.clone()),
        ]);
        let system = self.get(spec.template_id).render(&bindings)?;
        Ok(vec![ChatMessage::system(system), student_essay_message(&essay.essay_text)])
    }

    /// System + user messages for the orchestrator. Requires exactly one
    /// entry per trait; the expert block lists them in T1..T5 order.
    pub fn orchestrator_messages(
        &self,
        entries: &[ExpertEntry<'_>],
        essay: &crate::corpus::EssayRecord,
        fmt: &OutputFormatSpec,
    ) -> Result<Vec<ChatMessage>, PromptError> {
        let mut by_trait: BTreeMap<TraitId, &ExpertEntry<'_>> = BTreeMap::new();
        for entry in entries {
            if by_trait.insert(entry.trait_id, entry).is_some() {
                return Err(PromptError::DuplicateTrait(entry.trait_id));
            }
        }
        let mut blocks = Vec::with_capacity(TraitId::ALL.len());
        for trait_id in TraitId::ALL {
            let entry =
                by_trait.get(&trait_id).ok_or(PromptError::MissingTrait(trait_id))?;
            blocks.push(format!(
                "Expert grader for trait {} ({}):\nScore: {}\nReasoning: {}\nFeedback: {}",
                trait_id,
                trait_id.description(),
                entry.score,
                escape_markers(entry.reasoning),
                escape_markers(entry.feedback),
            ));
        }
        let bindings = bindings([
            ("expert_grader_scores_and_reasoning", blocks.join("\n\n")),
            ("task_directions", escape_markers(&essay.task_directions)),
            ("prompt", escape_markers(&essay.prompt_text)),
            ("output_format", fmt.schema_text.clone()),
        ]);
        let system = self.get(TemplateId::Orchestrator).render(&bindings)?;
        Ok(vec![ChatMessage::system(system), student_essay_message(&essay.essay_text)])
    }

    /// The judge prompt embeds everything — both feedbacks and the essay —
    /// in its body, so the result is a single system message.
    pub fn judge_messages(
        &self,
        feedback_1: &str,
        feedback_2: &str,
        essay: &crate::corpus::EssayRecord,
        rubric: &str,
        fmt: &OutputFormatSpec,
    ) -> Result<Vec<ChatMessage>, PromptError> {
        if feedback_1.trim().is_empty() {
            return Err(PromptError::EmptyFeedback(1));
        }
        if feedback_2.trim().is_empty() {
            return Err(PromptError::EmptyFeedback(2));
        }
        let bindings = bindings([
            ("rubric", escape_markers(rubric)),
            ("feedback_1", escape_markers(feedback_1)),
            ("feedback_2", escape_markers(feedback_2)),
            ("task_directions", escape_markers(&essay.task_directions)),
            ("prompt", escape_markers(&essay.prompt_text)),
            ("student_essay", escape_markers(&essay.essay_text)),
            ("output_format", fmt.schema_text.clone()),
        ]);
        let system = self.get(TemplateId::Judge).render(&bindings)?;
        Ok(vec![ChatMessage::system(system)])
    }
}

fn bindings<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

fn student_essay_message(essay_text: &str) -> ChatMessage {
    ChatMessage::user(format!(
        "<student_essay>\n{}\n</student_essay>",
        escape_markers(essay_text)
    ))
}

fn check_placeholders(template: &PromptTemplate) -> Result<(), PromptError> {
    let expected = template.template_id.expected_placeholders();
    let actual: BTreeSet<&str> =
        template.placeholders.iter().map(String::as_str).collect();
    if actual != expected {
        let missing: Vec<_> = expected.difference(&actual).collect();
        let extra: Vec<_> = actual.difference(&expected).collect();
        return Err(PromptError::BadTemplate {
            id: template.template_id,
            detail: format!("placeholders missing {missing:?}, unexpected {extra:?}"),
        });
    }
    Ok(())
}

/// Parses the expert block back into (trait, score) pairs. Test support for
/// verifying the orchestrator assembly; the production consumer is the
/// orchestrator model itself.
pub fn parse_expert_block(block: &str) -> Vec<(TraitId, i64)> {
    let mut out = Vec::new();
    let mut current: Option<TraitId> = None;
    for line in block.lines() {
        if let Some(rest) = line.strip_prefix("Expert grader for trait ") {
            current = rest.split_whitespace().next().and_then(TraitId::parse);
        } else if let (Some(trait_id), Some(score)) = (
            current,
            line.strip_prefix("Score: ").and_then(|s| s.trim().parse::<i64>().ok()),
        ) {
            out.push((trait_id, score));
            current = None;
        }
    }
    out
}

/// The judge's criteria block, reused by tests asserting verbatim presence.
pub fn criteria_block() -> String {
    let lines: Vec<String> = Criterion::ALL
        .iter()
        .map(|c| format!("- {}: {}", c.as_str(), c.question()))
        .collect();
    format!("<criteria>\n{}\n</criteria>", lines.join("\n"))
}
