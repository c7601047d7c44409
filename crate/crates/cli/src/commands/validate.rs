use crate::error::CliError;
use magic_core::corpus::load_corpus;
use std::path::Path;

/// Loads and validates a corpus file, printing its size on success.
/// Structural problems (bad JSON, out-of-range scores, duplicate ids)
/// surface as domain errors naming the offending line or record.
pub fn run(corpus_path: &Path) -> Result<(), CliError> {
    let corpus = load_corpus(corpus_path)?;
    println!("{} records, {} prompts", corpus.records.len(), corpus.distinct_prompts());
    Ok(())
}
