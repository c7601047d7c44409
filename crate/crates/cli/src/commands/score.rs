use crate::config::RunConfig;
use crate::error::CliError;
use magic_core::exec::RunOptions;
use magic_core::pipeline::{run_corpus, RunMode};

fn default_run_id(mode: RunMode) -> String {
    format!("{mode}-{}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ"))
}

/// Scores the corpus under the configured mode(s) and persists each run
/// under the output directory. A cold cache triggers a connectivity
/// preflight so an unreachable endpoint fails before any essay is sent.
pub fn run(config: &RunConfig, run_id: Option<&str>) -> Result<(), CliError> {
    let corpus = config.load_corpus()?;
    let library = config.prompt_library()?;
    let gateway = config.scorer.gateway(config.cache_dir.as_deref())?;
    gateway.preflight_if_cold()?;

    let modes = config.mode.modes();
    let suffix_ids = modes.len() > 1;
    for mode in modes {
        let id = match run_id {
            // `--mode both` produces two runs; keep their ids distinct.
            Some(base) if suffix_ids => format!("{base}-{mode}"),
            Some(base) => base.to_string(),
            None => default_run_id(mode),
        };
        log::info!("scoring {} essays in {mode} mode as run {id}", corpus.records.len());
        let output = run_corpus(
            &gateway,
            &library,
            &corpus,
            mode,
            &id,
            &config.out_dir,
            RunOptions::default(),
        )?;
        println!(
            "run {}: {} scored, {} failed -> {}",
            output.manifest.run_id,
            output.results.len(),
            output.manifest.failures.len(),
            output.run_dir.display()
        );
        for failure in &output.manifest.failures {
            println!("  failed {} at {}: {}", failure.essay_id, failure.stage, failure.cause);
        }
    }
    Ok(())
}
