use crate::config::RunConfig;
use crate::error::CliError;
use magic_core::arena::{agreement_report, JudgeVerdict};
use magic_core::corpus::load_annotations;
use magic_core::metrics::KappaValue;
use magic_core::types::Criterion;
use std::path::Path;

fn read_verdicts(path: &Path) -> Result<Vec<JudgeVerdict>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::environment(format!("cannot read verdicts {}: {e}", path.display()))
    })?;
    let mut verdicts = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        verdicts.push(serde_json::from_str(line).map_err(|e| {
            CliError::domain(format!("{} line {}: {e}", path.display(), index + 1))
        })?);
    }
    Ok(verdicts)
}

fn kappa_cell(kappa: Option<&KappaValue>) -> String {
    match kappa {
        None => "-".to_string(),
        // A degenerate table (every label identical) carries no evidence
        // of chance-corrected agreement; flag it rather than hide it.
        Some(k) if k.degenerate => format!("{:.3}*", k.value),
        Some(k) => format!("{:.3}", k.value),
    }
}

/// Computes inter-annotator agreement and, when judge verdicts are
/// supplied, annotator-judge agreement against adjudicated gold labels.
/// Everything is read from files; nothing is sent to a model.
pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let cfg = config
        .agreement
        .as_ref()
        .ok_or_else(|| CliError::domain("no [agreement] section in the config"))?;
    let annotations = load_annotations(&cfg.annotations)?;
    let adjudicated = load_annotations(&cfg.adjudicated)?;
    let verdicts = match &cfg.verdicts {
        Some(path) => read_verdicts(path)?,
        None => Vec::new(),
    };
    let llm_label = cfg.llm_label.as_deref().unwrap_or("");
    let table = agreement_report(&annotations, &adjudicated, &verdicts, llm_label)?;

    println!("criterion  kappa_iaa  kappa_aja  aja_pairs");
    for criterion in Criterion::ALL {
        let row = &table.per_criterion[&criterion];
        println!(
            "{:<9}  {:>9}  {:>9}  {:>9}",
            criterion.as_str(),
            kappa_cell(Some(&row.kappa_iaa)),
            kappa_cell(row.kappa_aja.as_ref()),
            row.aja_pairs
        );
    }
    println!("overall IAA kappa: {:.3}", table.overall_iaa);
    match table.overall_aja {
        Some(value) => println!("overall AJA kappa: {value:.3}"),
        None => println!("overall AJA kappa: -"),
    }
    if table.per_criterion.values().any(|r| r.kappa_iaa.degenerate)
        || table
            .per_criterion
            .values()
            .any(|r| r.kappa_aja.as_ref().is_some_and(|k| k.degenerate))
    {
        println!("* one-category table; kappa reported as exact agreement");
    }
    Ok(())
}
