//! Shared harness for binary-level tests: a temp directory laid out as a
//! complete offline experiment (corpus, rubrics, scripted endpoints,
//! config) plus process-spawning helpers.

#![allow(dead_code)] // each test target uses a different subset

use magic_core::corpus::{save_corpus, AnnotationRecord, Corpus};
use magic_core::testkit::{self, agreement_fixture_for, essay_id, FeedbackVoice};
use magic_core::types::TraitId;
use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};
use tempfile::TempDir;

pub const ESSAYS: usize = 48;
pub const PROMPTS: usize = 8;

pub struct Workspace {
    pub dir: TempDir,
    pub corpus: Corpus,
}

pub const CONFIG: &str = r#"
corpus = "corpus.jsonl"
out_dir = "out"
cache_dir = "cache"
scorer_endpoint = "scorer"
judge_endpoint = "judge"
mode = "both"
orders = "single"

[endpoints.scorer]
kind = "scripted"
model = "scripted-scorer"
script = "scripts/scorer.json"

[endpoints.judge]
kind = "scripted"
model = "scripted-judge"
script = "scripts/judge.json"

[rubrics]
holistic = "rubrics/holistic.txt"
T1 = "rubrics/T1.txt"
T2 = "rubrics/T2.txt"
T3 = "rubrics/T3.txt"
T4 = "rubrics/T4.txt"
T5 = "rubrics/T5.txt"

[arena]
reference = "human"

[[arena.participants]]
label = "magic"
kind = "run"
run_dir = "out/first-magic"

[[arena.participants]]
label = "baseline"
kind = "run"
run_dir = "out/first-baseline"

[[arena.participants]]
label = "human"
kind = "human"

[agreement]
annotations = "annotations.jsonl"
adjudicated = "adjudicated.jsonl"
verdicts = "out/battle/verdicts.jsonl"
llm_label = "magic"
"#;

impl Workspace {
    /// Lays out a complete experiment directory: corpus, rubric files,
    /// scripted endpoint responses for scoring and judging, and a config
    /// wiring them together.
    pub fn new() -> Self {
        let dir = TempDir::new().expect("tempdir");
        let root = dir.path();
        let corpus = testkit::synthetic_corpus(ESSAYS, PROMPTS);

        save_corpus(&corpus, root.join("corpus.jsonl")).expect("write corpus");

        fs::create_dir(root.join("rubrics")).unwrap();
        fs::write(root.join("rubrics/holistic.txt"), &corpus.rubric_holistic).unwrap();
        for trait_id in TraitId::ALL {
            fs::write(
                root.join(format!("rubrics/{trait_id}.txt")),
                &corpus.rubrics_trait[&trait_id],
            )
            .unwrap();
        }

        fs::create_dir(root.join("scripts")).unwrap();
        testkit::to_script_file(&testkit::scoring_rules(&corpus))
            .write(&root.join("scripts/scorer.json"))
            .unwrap();
        let voices = [FeedbackVoice::Magic, FeedbackVoice::Baseline, FeedbackVoice::Human];
        testkit::to_script_file(&testkit::judge_rules(&corpus, &voices))
            .write(&root.join("scripts/judge.json"))
            .unwrap();

        fs::write(root.join("config.toml"), CONFIG).unwrap();
        Workspace { dir, corpus }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn magic(&self, args: &[&str]) -> Output {
        let config = self.path("config.toml");
        let mut all = vec!["--config", config.to_str().unwrap()];
        all.extend_from_slice(args);
        Command::new(env!("CARGO_BIN_EXE_magic"))
            .args(&all)
            .output()
            .expect("binary runs")
    }

    /// Annotation fixture files over the first twelve judged
    /// magic-vs-human pairs, so judge verdicts line up with them.
    pub fn write_annotation_files(&self) {
        let pair_ids: Vec<String> =
            (0..12).map(|i| format!("{}--magic-vs-human", essay_id(i))).collect();
        let fixture = agreement_fixture_for(&pair_ids);
        let jsonl = |records: &[AnnotationRecord]| -> String {
            records
                .iter()
                .map(|r| serde_json::to_string(r).unwrap())
                .map(|line| line + "\n")
                .collect()
        };
        fs::write(self.path("annotations.jsonl"), jsonl(&fixture.annotations)).unwrap();
        fs::write(self.path("adjudicated.jsonl"), jsonl(&fixture.adjudications)).unwrap();
    }
}

pub fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

pub fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "expected exit {code}\nstdout:\n{}\nstderr:\n{}",
        stdout(output),
        stderr(output)
    );
}
