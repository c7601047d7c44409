use crate::config::RunConfig;
use crate::error::CliError;
use magic_core::pipeline::load_run;
use magic_core::report::{build_report, render_text, write_jsonl, Run};
use std::path::Path;

/// Renders the evaluation tables for one or more persisted runs. Works
/// entirely from files on disk; no model endpoint is contacted.
pub fn run(config: &RunConfig, run_dirs: &[&Path], out: Option<&Path>) -> Result<(), CliError> {
    if run_dirs.is_empty() {
        return Err(CliError::domain(
            "report needs at least one run directory argument",
        ));
    }
    let corpus = config.load_corpus()?;
    let mut runs: Vec<Run> = Vec::with_capacity(run_dirs.len());
    for dir in run_dirs {
        runs.push(load_run(dir)?);
    }
    let report = build_report(&corpus, &runs)?;
    print!("{}", render_text(&report));
    if let Some(path) = out {
        write_jsonl(&report, path)?;
        log::info!("report written to {}", path.display());
    }
    Ok(())
}
