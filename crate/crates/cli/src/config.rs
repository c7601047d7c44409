//! Run configuration: one TOML file holds everything a run needs, so a
//! config plus a cache directory is a complete, replayable experiment.
//! Environment variables appear only as *names* here (API keys); relative
//! paths resolve against the config file's own directory so configs stay
//! portable.

use crate::error::CliError;
use clap::ValueEnum;
use magic_core::arena::OrderPolicy;
use magic_core::corpus::{load_corpus, Corpus};
use magic_core::gateway::cache::DiskCache;
use magic_core::gateway::http::OpenAiBackend;
use magic_core::gateway::scripted::ScriptedBackend;
use magic_core::gateway::{ChatBackend, Gateway, ModelEndpoint, ReasoningEffort};
use magic_core::pipeline::RunMode;
use magic_core::prompts::PromptLibrary;
use magic_core::types::TraitId;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

/// Scoring mode selector shared by the config file and `--mode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeChoice {
    Baseline,
    Magic,
    Both,
}

impl ModeChoice {
    /// The run modes this choice expands to, in execution order.
    pub fn modes(self) -> Vec<RunMode> {
        match self {
            ModeChoice::Baseline => vec![RunMode::Baseline],
            ModeChoice::Magic => vec![RunMode::Magic],
            ModeChoice::Both => vec![RunMode::Baseline, RunMode::Magic],
        }
    }
}

/// Presentation-order policy shared by the config file and `--orders`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OrdersChoice {
    Single,
    Both,
}

impl From<OrdersChoice> for OrderPolicy {
    fn from(c: OrdersChoice) -> Self {
        match c {
            OrdersChoice::Single => OrderPolicy::Single,
            OrdersChoice::Both => OrderPolicy::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointKind {
    /// Live OpenAI-compatible chat completion server.
    Openai,
    /// Canned responses from a script file; no network.
    Scripted,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EndpointTable {
    kind: EndpointKind,
    /// Required for `openai` endpoints.
    base_url: Option<String>,
    model: String,
    /// Required for `scripted` endpoints: path to the response script.
    script: Option<PathBuf>,
    /// Name of the environment variable holding the API key.
    api_key_env: Option<String>,
    temperature: Option<f64>,
    max_tokens: Option<u32>,
    reasoning_effort: Option<ReasoningEffort>,
    timeout_secs: Option<u64>,
    max_retries: Option<u32>,
    max_concurrency: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RubricTable {
    holistic: PathBuf,
    #[serde(rename = "T1")]
    t1: Option<PathBuf>,
    #[serde(rename = "T2")]
    t2: Option<PathBuf>,
    #[serde(rename = "T3")]
    t3: Option<PathBuf>,
    #[serde(rename = "T4")]
    t4: Option<PathBuf>,
    #[serde(rename = "T5")]
    t5: Option<PathBuf>,
}

impl RubricTable {
    fn trait_paths(&self) -> BTreeMap<TraitId, &PathBuf> {
        [
            (TraitId::T1, &self.t1),
            (TraitId::T2, &self.t2),
            (TraitId::T3, &self.t3),
            (TraitId::T4, &self.t4),
            (TraitId::T5, &self.t5),
        ]
        .into_iter()
        .filter_map(|(t, p)| p.as_ref().map(|p| (t, p)))
        .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParticipantKind {
    /// Feedback from a persisted scoring run directory.
    Run,
    /// Feedback from the corpus's human feedback field.
    Human,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantTable {
    pub label: String,
    pub kind: ParticipantKind,
    /// Required for `run` participants.
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenaTable {
    /// Label every other participant is compared against.
    pub reference: String,
    pub participants: Vec<ParticipantTable>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgreementTable {
    /// Line-delimited annotation records from the two annotators.
    pub annotations: PathBuf,
    /// Adjudicator records for the pairs the annotators split on.
    pub adjudicated: PathBuf,
    /// Judge verdicts persisted by an arena run; omit for annotator-only
    /// agreement.
    pub verdicts: Option<PathBuf>,
    /// Which participant label counts as the LLM side of a verdict.
    pub llm_label: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    corpus: PathBuf,
    out_dir: PathBuf,
    cache_dir: Option<PathBuf>,
    scorer_endpoint: String,
    judge_endpoint: Option<String>,
    mode: Option<ModeChoice>,
    orders: Option<OrdersChoice>,
    /// Override directory for prompt templates; embedded set otherwise.
    prompts_dir: Option<PathBuf>,
    endpoints: BTreeMap<String, EndpointTable>,
    rubrics: RubricTable,
    arena: Option<ArenaTable>,
    agreement: Option<AgreementTable>,
}

/// Values from the command line that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub mode: Option<ModeChoice>,
    pub out_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub orders: Option<OrdersChoice>,
}

/// A named endpoint resolved to connection details plus backend flavor.
#[derive(Debug, Clone)]
pub struct EndpointSpec {
    pub name: String,
    pub kind: EndpointKind,
    pub endpoint: ModelEndpoint,
    /// Script path for scripted endpoints.
    pub script: Option<PathBuf>,
}

impl EndpointSpec {
    /// Builds the gateway for this endpoint, attaching the disk cache when
    /// a cache directory is configured.
    pub fn gateway(&self, cache_dir: Option<&Path>) -> Result<Gateway, CliError> {
        let backend: Arc<dyn ChatBackend> = match self.kind {
            EndpointKind::Openai => Arc::new(OpenAiBackend::new()),
            EndpointKind::Scripted => {
                let path = self.script.as_ref().expect("validated at load");
                Arc::new(ScriptedBackend::load_script(path).map_err(|e| {
                    CliError::environment(format!("endpoint {}: {e}", self.name))
                })?)
            }
        };
        let cache = cache_dir.map(DiskCache::new);
        Ok(Gateway::new(self.endpoint.clone(), backend, cache)?)
    }
}

/// Fully resolved configuration: every path absolute-ish (anchored at the
/// config directory), every endpoint reference checked.
#[derive(Debug)]
pub struct RunConfig {
    pub corpus_path: PathBuf,
    pub out_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub mode: ModeChoice,
    pub orders: OrdersChoice,
    pub scorer: EndpointSpec,
    pub judge: Option<EndpointSpec>,
    pub prompts_dir: Option<PathBuf>,
    pub rubric_holistic_path: PathBuf,
    pub rubric_trait_paths: BTreeMap<TraitId, PathBuf>,
    pub arena: Option<ArenaTable>,
    pub agreement: Option<AgreementTable>,
}

fn resolve_endpoint(
    name: &str,
    endpoints: &BTreeMap<String, EndpointTable>,
    base: &Path,
) -> Result<EndpointSpec, CliError> {
    let table = endpoints.get(name).ok_or_else(|| {
        CliError::domain(format!(
            "endpoint {name:?} is not defined under [endpoints]; defined: {:?}",
            endpoints.keys().collect::<Vec<_>>()
        ))
    })?;
    let base_url = match (table.kind, &table.base_url) {
        (EndpointKind::Openai, Some(url)) => url.clone(),
        (EndpointKind::Openai, None) => {
            return Err(CliError::domain(format!(
                "endpoint {name:?}: kind \"openai\" requires base_url"
            )))
        }
        (EndpointKind::Scripted, _) => "scripted://local".to_string(),
    };
    let script = match (table.kind, &table.script) {
        (EndpointKind::Scripted, Some(path)) => Some(base.join(path)),
        (EndpointKind::Scripted, None) => {
            return Err(CliError::domain(format!(
                "endpoint {name:?}: kind \"scripted\" requires script"
            )))
        }
        (EndpointKind::Openai, _) => None,
    };
    let mut endpoint = ModelEndpoint::new(base_url, table.model.clone());
    endpoint.api_key_ref = table.api_key_env.clone();
    if let Some(t) = table.temperature {
        endpoint.temperature = t;
    }
    if let Some(m) = table.max_tokens {
        endpoint.max_tokens = m;
    }
    endpoint.reasoning_effort = table.reasoning_effort;
    if let Some(secs) = table.timeout_secs {
        endpoint.request_timeout = Duration::from_secs(secs);
    }
    if let Some(r) = table.max_retries {
        endpoint.max_retries = r;
    }
    if let Some(c) = table.max_concurrency {
        endpoint.max_concurrency = c;
    }
    endpoint.validate()?;
    Ok(EndpointSpec { name: name.to_owned(), kind: table.kind, endpoint, script })
}

impl RunConfig {
    /// Loads and resolves a config file, applying command-line overrides.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::environment(format!("cannot read {}: {e}", path.display())))?;
        let file: ConfigFile = toml::from_str(&text)
            .map_err(|e| CliError::domain(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

        let scorer = resolve_endpoint(&file.scorer_endpoint, &file.endpoints, &base)?;
        let judge = file
            .judge_endpoint
            .as_deref()
            .map(|name| resolve_endpoint(name, &file.endpoints, &base))
            .transpose()?;

        let mut arena = file.arena;
        if let Some(table) = &mut arena {
            for participant in &mut table.participants {
                match (&participant.kind, &participant.run_dir) {
                    (ParticipantKind::Run, Some(dir)) => {
                        participant.run_dir = Some(base.join(dir));
                    }
                    (ParticipantKind::Run, None) => {
                        return Err(CliError::domain(format!(
                            "arena participant {:?}: kind \"run\" requires run_dir",
                            participant.label
                        )))
                    }
                    (ParticipantKind::Human, _) => {}
                }
            }
            let labels: Vec<&str> =
                table.participants.iter().map(|p| p.label.as_str()).collect();
            if !labels.contains(&table.reference.as_str()) {
                return Err(CliError::domain(format!(
                    "arena reference {:?} is not among the participants {labels:?}",
                    table.reference
                )));
            }
        }

        let mut agreement = file.agreement;
        if let Some(table) = &mut agreement {
            table.annotations = base.join(&table.annotations);
            table.adjudicated = base.join(&table.adjudicated);
            if let Some(v) = &table.verdicts {
                table.verdicts = Some(base.join(v));
                if table.llm_label.is_none() {
                    return Err(CliError::domain(
                        "[agreement]: verdicts requires llm_label to interpret them",
                    ));
                }
            }
        }

        Ok(RunConfig {
            corpus_path: base.join(&file.corpus),
            out_dir: overrides
                .out_dir
                .clone()
                .unwrap_or_else(|| base.join(&file.out_dir)),
            cache_dir: overrides
                .cache_dir
                .clone()
                .or_else(|| file.cache_dir.as_ref().map(|d| base.join(d))),
            mode: overrides.mode.or(file.mode).unwrap_or(ModeChoice::Magic),
            orders: overrides.orders.or(file.orders).unwrap_or(OrdersChoice::Single),
            scorer,
            judge,
            prompts_dir: file.prompts_dir.map(|d| base.join(d)),
            rubric_holistic_path: base.join(&file.rubrics.holistic),
            rubric_trait_paths: file
                .rubrics
                .trait_paths()
                .into_iter()
                .map(|(t, p)| (t, base.join(p)))
                .collect(),
            arena,
            agreement,
        })
    }

    /// Loads the corpus and attaches rubric texts from the configured
    /// paths. Traits without a configured rubric get an empty slot, which
    /// magic-mode scoring rejects by name.
    pub fn load_corpus(&self) -> Result<Corpus, CliError> {
        let read = |path: &Path| -> Result<String, CliError> {
            std::fs::read_to_string(path).map_err(|e| {
                CliError::environment(format!("cannot read rubric {}: {e}", path.display()))
            })
        };
        let holistic = read(&self.rubric_holistic_path)?;
        let mut traits = BTreeMap::new();
        for (&trait_id, path) in &self.rubric_trait_paths {
            traits.insert(trait_id, read(path)?);
        }
        Ok(load_corpus(&self.corpus_path)?.with_rubrics(holistic, traits))
    }

    pub fn prompt_library(&self) -> Result<PromptLibrary, CliError> {
        match &self.prompts_dir {
            Some(dir) => Ok(PromptLibrary::from_dir(dir)?),
            None => Ok(PromptLibrary::embedded()),
        }
    }

    /// The judge endpoint, required for arena judging.
    pub fn judge(&self) -> Result<&EndpointSpec, CliError> {
        self.judge.as_ref().ok_or_else(|| {
            CliError::domain("no judge_endpoint configured; arena judging needs one")
        })
    }
}
