//! Data-parallel execution vs the sequential fallback on scripted
//! workloads with a fixed per-call latency, which is what the semaphore
//! and thread pool have to amortize in a live run. Built without the
//! `parallel` feature both arms degenerate to sequential and should tie.

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use magic_core::arena::{build_pairs, judge_pairs, OrderPolicy};
use magic_core::exec::RunOptions;
use magic_core::gateway::scripted::{ScriptRule, ScriptedBackend};
use magic_core::gateway::{cache_key, ChatBackend, Gateway, ModelEndpoint};
use magic_core::pipeline::{run_corpus, RunMode};
use magic_core::prompts::PromptLibrary;
use magic_core::testkit::{self, FeedbackVoice};
use magic_core::types::ChatMessage;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

const ESSAYS: usize = 48;
const PROMPTS: usize = 8;
const CALL_LATENCY: Duration = Duration::from_millis(2);

fn scripted_gateway(rules: Vec<ScriptRule>) -> (Gateway, Arc<ScriptedBackend>) {
    let backend = Arc::new(ScriptedBackend::new(rules).with_latency(CALL_LATENCY));
    let gateway = Gateway::new(
        ModelEndpoint::scripted_for_tests("bench-model"),
        backend.clone() as Arc<dyn ChatBackend>,
        None,
    )
    .unwrap();
    (gateway, backend)
}

fn options(parallel: bool) -> RunOptions {
    if parallel {
        RunOptions::default()
    } else {
        RunOptions::sequential()
    }
}

fn bench_scoring(c: &mut Criterion) {
    let corpus = testkit::synthetic_corpus(ESSAYS, PROMPTS);
    let library = PromptLibrary::embedded();
    let out = tempfile::tempdir().unwrap();
    let run_counter = AtomicU64::new(0);
    let (gateway, backend) = scripted_gateway(testkit::scoring_rules(&corpus));

    let mut group = c.benchmark_group("score_48_essays");
    group
        .sample_size(10)
        .warm_up_time(Duration::from_secs(1))
        .measurement_time(Duration::from_secs(8));
    let modes = [
        ("magic", RunMode::Magic, 6 * ESSAYS as u64),
        ("baseline", RunMode::Baseline, ESSAYS as u64),
    ];
    for (mode_label, mode, calls) in modes {
        group.throughput(Throughput::Elements(calls));
        for (exec_label, parallel) in [("parallel", true), ("sequential", false)] {
            group.bench_function(format!("{mode_label}/{exec_label}"), |b| {
                b.iter(|| {
                    backend.reset_probe();
                    let run_id =
                        format!("bench-{}", run_counter.fetch_add(1, Ordering::Relaxed));
                    run_corpus(
                        &gateway,
                        &library,
                        &corpus,
                        mode,
                        &run_id,
                        out.path(),
                        options(parallel),
                    )
                    .unwrap()
                });
            });
        }
    }
    group.finish();
}

fn bench_judging(c: &mut Criterion) {
    let corpus = testkit::synthetic_corpus(ESSAYS, PROMPTS);
    let library = PromptLibrary::embedded();
    let voices = [FeedbackVoice::Magic, FeedbackVoice::Baseline];
    let participants = vec![
        testkit::voice_participant(&corpus, "magic", FeedbackVoice::Magic),
        testkit::voice_participant(&corpus, "baseline", FeedbackVoice::Baseline),
    ];
    let pairs = build_pairs(&corpus, &participants).unwrap();
    let (gateway, backend) = scripted_gateway(testkit::judge_rules(&corpus, &voices));

    let mut group = c.benchmark_group("judge_48_pairs_both_orders");
    group
        .sample_size(10)
        .warm_up_time(Duration::from_secs(1))
        .measurement_time(Duration::from_secs(8))
        .throughput(Throughput::Elements(2 * ESSAYS as u64));
    for (exec_label, parallel) in [("parallel", true), ("sequential", false)] {
        group.bench_function(exec_label.to_string(), |b| {
            b.iter(|| {
                backend.reset_probe();
                judge_pairs(
                    &gateway,
                    &library,
                    &corpus,
                    &corpus.rubric_holistic,
                    &pairs,
                    OrderPolicy::Both,
                    options(parallel),
                )
                .unwrap()
            });
        });
    }
    group.finish();
}

fn bench_cache_key(c: &mut Criterion) {
    let ep = ModelEndpoint::new("https://a.example/v1", "gpt-4o");
    let messages = vec![ChatMessage::system("sys"), ChatMessage::user("essay text")];
    c.bench_function("cache_key", |b| b.iter(|| cache_key(&ep, &messages)));
}

criterion_group!(benches, bench_scoring, bench_judging, bench_cache_key);
criterion_main!(benches);
