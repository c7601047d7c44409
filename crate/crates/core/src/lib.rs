//! Multi-agent essay scoring and feedback pipeline.
//!
//! Five trait agents (prompt adherence, complexity, organization, vocabulary,
//! grammar) each score an essay independently; an orchestrator merges their
//! verdicts into a holistic score and consolidated feedback. Any
//! OpenAI-compatible chat endpoint can serve the agents. The evaluation
//! harness measures agreement with human scores (quadratic weighted kappa,
//! Cohen's kappa), runs LLM-as-judge pairwise feedback battles, and reports
//! score distributions and feedback-length statistics.
//!
//! The crate is organised in layers: [`corpus`] defines the data model,
//! [`prompts`] renders chat messages from golden template files,
//! [`gateway`] talks to model endpoints (with caching, retries, and a
//! deterministic scripted backend for tests), [`pipeline`] executes scoring
//! runs, and [`metrics`], [`arena`], and [`report`] evaluate the results.

pub mod arena;
pub mod corpus;
pub mod exec;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod testkit;
pub mod types;
