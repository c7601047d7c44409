//! Shared domain vocabulary: scores, traits, judge criteria, agent
//! identities, and chat messages.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Integer essay score on the 0–6 scale. The scale is closed: construction
/// outside the range is impossible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Score(u8);

impl Score {
    pub const MIN: i64 = 0;
    pub const MAX: i64 = 6;

    pub fn new(value: i64) -> Result<Self, ScoreOutOfRange> {
        if (Self::MIN..=Self::MAX).contains(&value) {
            Ok(Score(value as u8))
        } else {
            Err(ScoreOutOfRange(value))
        }
    }

    pub fn value(self) -> i64 {
        i64::from(self.0)
    }
}

impl TryFrom<i64> for Score {
    type Error = ScoreOutOfRange;
    fn try_from(value: i64) -> Result<Self, Self::Error> {
        Score::new(value)
    }
}

impl From<Score> for i64 {
    fn from(s: Score) -> i64 {
        s.value()
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("score {0} outside the 0-6 scale")]
pub struct ScoreOutOfRange(pub i64);

/// The five decomposed writing dimensions, in fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TraitId {
    T1,
    T2,
    T3,
    T4,
    T5,
}

impl TraitId {
    pub const ALL: [TraitId; 5] =
        [TraitId::T1, TraitId::T2, TraitId::T3, TraitId::T4, TraitId::T5];

    pub fn as_str(self) -> &'static str {
        match self {
            TraitId::T1 => "T1",
            TraitId::T2 => "T2",
            TraitId::T3 => "T3",
            TraitId::T4 => "T4",
            TraitId::T5 => "T5",
        }
    }

    /// What the trait measures, used to specialise the shared argumentative
    /// prompt and to label report rows.
    pub fn description(self) -> &'static str {
        match self {
            TraitId::T1 => "Quality of the response to the prompt instructions",
            TraitId::T2 => "Considering the complexities of the issue",
            TraitId::T3 => "Organizing, developing, and expressing ideas",
            TraitId::T4 => "Vocabulary and sentence variety",
            TraitId::T5 => "Grammar and mechanics",
        }
    }

    pub fn parse(s: &str) -> Option<TraitId> {
        TraitId::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for TraitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The five feedback-comparison criteria put to the judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criterion {
    C1,
    C2,
    C3,
    C4,
    C5,
}

impl Criterion {
    pub const ALL: [Criterion; 5] =
        [Criterion::C1, Criterion::C2, Criterion::C3, Criterion::C4, Criterion::C5];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::C1 => "C1",
            Criterion::C2 => "C2",
            Criterion::C3 => "C3",
            Criterion::C4 => "C4",
            Criterion::C5 => "C5",
        }
    }

    /// The question the judge answers for this criterion, exactly as it
    /// appears in the judge prompt's `<criteria>` block.
    pub fn question(self) -> &'static str {
        match self {
            Criterion::C1 => "Which feedback is more relevant to the essay content?",
            Criterion::C2 => "Which feedback is better at highlighting weakness?",
            Criterion::C3 => "Which feedback is better at highlighting strengths?",
            Criterion::C4 => "Which feedback is more specific and actionable?",
            Criterion::C5 => "Which feedback is overall more helpful for a student?",
        }
    }

    pub fn parse(s: &str) -> Option<Criterion> {
        Criterion::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which agent produced a verdict. Serialized as `"baseline"`, `"T1"`..`"T5"`,
/// or `"orchestrator"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AgentId {
    Baseline,
    Trait(TraitId),
    Orchestrator,
}

impl AgentId {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentId::Baseline => "baseline",
            AgentId::Trait(t) => t.as_str(),
            AgentId::Orchestrator => "orchestrator",
        }
    }
}

impl TryFrom<String> for AgentId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        match s.as_str() {
            "baseline" => Ok(AgentId::Baseline),
            "orchestrator" => Ok(AgentId::Orchestrator),
            other => TraitId::parse(other)
                .map(AgentId::Trait)
                .ok_or_else(|| format!("unknown agent id {other:?}")),
        }
    }
}

impl From<AgentId> for String {
    fn from(a: AgentId) -> String {
        a.as_str().to_owned()
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One chat message in an exchange with a model endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}
