use crate::config::{ParticipantKind, RunConfig};
use crate::error::CliError;
use magic_core::arena::{
    battle_matrix, build_pairs, judge_pairs, winrate_vs_reference, BattleOutcome, Participant,
    WinMatrix, WinRate,
};
use magic_core::corpus::Corpus;
use magic_core::exec::RunOptions;
use magic_core::pipeline::{corpus_digest, load_run};
use magic_core::types::Criterion;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

/// Collects each participant's per-essay feedback from its configured
/// source. Coverage gaps are left in place so pair construction can name
/// exactly which participant is missing which essay.
fn collect_participants(config: &RunConfig, corpus: &Corpus) -> Result<Vec<Participant>, CliError> {
    let arena = config.arena.as_ref().expect("checked by caller");
    let digest = corpus_digest(corpus);
    let mut participants = Vec::with_capacity(arena.participants.len());
    for entry in &arena.participants {
        let feedback = match entry.kind {
            ParticipantKind::Run => {
                let dir = entry.run_dir.as_ref().expect("validated at load");
                let (manifest, results) = load_run(dir)?;
                if manifest.corpus_digest != digest {
                    return Err(CliError::domain(format!(
                        "run {} at {} was scored against a different corpus (digest mismatch)",
                        manifest.run_id,
                        dir.display()
                    )));
                }
                results
                    .iter()
                    .map(|r| (r.essay_id().to_string(), r.holistic().feedback.clone()))
                    .collect()
            }
            ParticipantKind::Human => corpus
                .records
                .iter()
                .filter_map(|r| {
                    r.human_feedback.as_ref().map(|f| (r.essay_id.clone(), f.clone()))
                })
                .collect(),
        };
        participants.push(Participant { label: entry.label.clone(), feedback });
    }
    Ok(participants)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).expect("verdict serializes"));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn cell(rate: Option<&WinRate>) -> String {
    match rate {
        None => "-".to_string(),
        Some(r) if r.judged == 0 => format!("{}/{}", r.wins, r.judged),
        Some(r) => format!("{}/{} ({:.1}%)", r.wins, r.judged, r.percent()),
    }
}

/// Renders a grid with a left-hand label column, padding every column to
/// its widest cell.
fn render_grid(head: &[String], rows: &[Vec<String>]) -> String {
    let columns = head.len();
    let mut widths = vec![0usize; columns];
    for row in std::iter::once(head).chain(rows.iter().map(|r| r.as_slice())) {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(head).chain(rows.iter().map(|r| r.as_slice())) {
        for (i, cell) in row.iter().enumerate() {
            let pad = if i + 1 == columns { 0 } else { widths[i] + 2 };
            let _ = write!(out, "{cell:<pad$}");
        }
        out.push('\n');
    }
    out
}

fn render_matrix(matrix: &WinMatrix) -> String {
    let mut head = vec!["win rate".to_string()];
    head.extend(matrix.participants.iter().cloned());
    let rows: Vec<Vec<String>> = matrix
        .participants
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let mut row = vec![label.clone()];
            row.extend(
                (0..matrix.participants.len()).map(|j| cell(matrix.overall[i][j].as_ref())),
            );
            row
        })
        .collect();
    render_grid(&head, &rows)
}

fn render_vs_reference(
    outcome: &BattleOutcome,
    participants: &[String],
    reference: &str,
) -> Result<String, CliError> {
    let systems: Vec<&String> =
        participants.iter().filter(|p| p.as_str() != reference).collect();
    let mut head = vec!["criterion".to_string()];
    head.extend(systems.iter().map(|s| (*s).clone()));

    let mut rows = Vec::new();
    let mut tables = Vec::new();
    for system in &systems {
        tables.push(winrate_vs_reference(&outcome.verdicts, system, reference)?);
    }
    for criterion in Criterion::ALL {
        let mut row = vec![criterion.to_string()];
        for table in &tables {
            row.push(cell(table.get(&criterion)));
        }
        rows.push(row);
    }
    // Pooled across criteria, same denominators the matrix reports.
    let mut pooled_row = vec!["all".to_string()];
    for table in &tables {
        let pooled = table.values().fold(WinRate { wins: 0, judged: 0 }, |acc, r| WinRate {
            wins: acc.wins + r.wins,
            judged: acc.judged + r.judged,
        });
        pooled_row.push(cell(Some(&pooled)));
    }
    rows.push(pooled_row);
    Ok(render_grid(&head, &rows))
}

/// Builds feedback pairs for every configured participant pairing, judges
/// them under the configured presentation-order policy, persists verdicts
/// and win-rate tables, and prints the matrix plus per-criterion rates
/// against the reference participant.
pub fn run(config: &RunConfig, run_id: Option<&str>) -> Result<(), CliError> {
    let arena = config
        .arena
        .as_ref()
        .ok_or_else(|| CliError::domain("no [arena] section in the config"))?;
    let corpus = config.load_corpus()?;
    let library = config.prompt_library()?;
    let judge = config.judge()?;
    let gateway = judge.gateway(config.cache_dir.as_deref())?;

    let participants = collect_participants(config, &corpus)?;
    let pairs = build_pairs(&corpus, &participants)?;
    log::info!(
        "judging {} pairs across {} participants",
        pairs.len(),
        participants.len()
    );
    gateway.preflight_if_cold()?;
    let outcome = judge_pairs(
        &gateway,
        &library,
        &corpus,
        &corpus.rubric_holistic,
        &pairs,
        config.orders.into(),
        RunOptions::default(),
    )?;

    let arena_id = match run_id {
        Some(id) => id.to_string(),
        None => format!("arena-{}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ")),
    };
    let dir = config.out_dir.join(&arena_id);
    std::fs::create_dir_all(&dir)?;
    write_jsonl(&dir.join("verdicts.jsonl"), &outcome.verdicts)?;
    write_jsonl(&dir.join("unjudged.jsonl"), &outcome.unjudged)?;

    let labels: Vec<String> = participants.iter().map(|p| p.label.clone()).collect();
    let matrix = battle_matrix(&labels, &outcome.verdicts)?;
    std::fs::write(
        dir.join("matrix.json"),
        serde_json::to_string_pretty(&matrix).expect("matrix serializes"),
    )?;

    println!(
        "judged {} verdicts, {} unjudged orders -> {}",
        outcome.verdicts.len(),
        outcome.unjudged.len(),
        dir.display()
    );
    println!();
    println!("Overall win rates, wins/judged (row participant over column):");
    print!("{}", render_matrix(&matrix));
    println!();
    println!("Per-criterion win rates vs {}:", arena.reference);
    print!("{}", render_vs_reference(&outcome, &labels, &arena.reference)?);
    Ok(())
}
