mod common;

use std::collections::HashMap;

use codeloop_core::eval::{load_dataset, score_answer, BenchmarkRun, DatasetItem, RunMode};
use codeloop_core::session::{deserialize_trace, Termination};
use codeloop_core::{ChatModel, ScriptedClient};
use common::*;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A rational written as an integer, a terminating decimal or a fraction.
fn spell(v: Ratio<i64>, rng: &mut impl Rng) -> String {
    let (n, d) = (*v.numer(), *v.denom());
    let mut d10 = d;
    while d10 % 2 == 0 {
        d10 /= 2;
    }
    while d10 % 5 == 0 {
        d10 /= 5;
    }
    match rng.random_range(0..3) {
        0 if d == 1 => n.to_string(),
        1 if d10 == 1 => {
            // scale to a power of ten
            let mut p = 1i64;
            while p % d != 0 {
                p *= 10;
            }
            let scaled = n * (p / d);
            let digits = p.to_string().len() - 1;
            if digits == 0 {
                return scaled.to_string();
            }
            let sign = if scaled < 0 { "-" } else { "" };
            let a = scaled.abs();
            format!("{sign}{}.{:0width$}", a / p, a % p, width = digits)
        }
        _ => {
            let k = rng.random_range(1..4);
            format!("{}/{}", n * k, d * k)
        }
    }
}

fn abs(r: Ratio<i64>) -> Ratio<i64> {
    if r < Ratio::from_integer(0) { -r } else { r }
}

fn expected(a: Ratio<i64>, b: Ratio<i64>) -> bool {
    let diff = abs(a - b);
    let scale = abs(a).max(abs(b));
    diff * Ratio::from_integer(1_000_000) <= scale
}

#[test]
fn numeric_scoring_matches_exact_rationals() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dens = [1, 2, 3, 4, 5, 8, 10, 16, 20, 25, 7];
    for _ in 0..3000 {
        let a = Ratio::new(rng.random_range(-500..500), dens[rng.random_range(0..dens.len())]);
        let b = if rng.random_bool(0.5) {
            a
        } else {
            Ratio::new(rng.random_range(-500..500), dens[rng.random_range(0..dens.len())])
        };
        let (sa, sb) = (spell(a, &mut rng), spell(b, &mut rng));
        assert_eq!(score_answer(&sa, &sb, None), expected(a, b), "{sa} vs {sb}");
    }
}

#[test]
fn choice_scoring() {
    let opts: Vec<String> = ["A cat", "A dog", "Two birds"].iter().map(|s| s.to_string()).collect();
    assert!(score_answer("c", "Two birds", Some(&opts)));
    assert!(score_answer("two birds.", "C", Some(&opts)));
    assert!(score_answer("(A)", "a", Some(&opts)));
    assert!(!score_answer("D", "A", Some(&opts)));
    assert!(!score_answer("a dog", "A", Some(&opts)));
}

fn write_dataset(dir: &std::path::Path, n: usize) -> std::path::PathBuf {
    std::fs::write(dir.join("img.png"), demo_image().bytes()).unwrap();
    let lines: Vec<String> = (0..n)
        .map(|i| {
            format!(
                "{{\"id\":\"item-{i:02}\",\"images\":[\"img.png\"],\"question\":\"q{i}\",\"answer\":\"{}\",\"benchmark\":\"toy\"}}",
                i % 3
            )
        })
        .collect();
    let path = dir.join("data.jsonl");
    std::fs::write(&path, lines.join("\n")).unwrap();
    path
}

/// Item i uses i % 3 code turns and answers correctly unless i % 4 == 0.
fn script_for(item: &DatasetItem) -> Vec<String> {
    let i: usize = item.id[5..].parse().unwrap();
    let mut s: Vec<String> = (0..i % 3).map(|k| code_turn(&format!("print({k} + {i})\n"))).collect();
    let answer = if i.is_multiple_of(4) { "wrong".to_string() } else { item.answer.clone() };
    s.push(format!("<answer>\\boxed{{{answer}}}</answer>"));
    s
}

#[test]
fn parallel_runs_agree_and_write_traces() {
    let dir = tempfile::tempdir().unwrap();
    let items = load_dataset(write_dataset(dir.path(), 12)).unwrap();
    let agent = agent(&[]);
    let factory = |item: &DatasetItem| -> Box<dyn ChatModel> { Box::new(ScriptedClient::new(script_for(item))) };

    let mut reports = Vec::new();
    for parallelism in [1, 4] {
        let trace_dir = dir.path().join(format!("traces-{parallelism}"));
        let run = BenchmarkRun {
            dataset_id: "toy",
            agent: &agent,
            mode: RunMode::Agent,
            parallelism,
            trace_dir: Some(&trace_dir),
        };
        let (mut report, traces) = run.run(&items, &factory).unwrap();
        assert_eq!(traces.len(), 12);
        for rec in &mut report.per_item {
            let doc = std::fs::read(rec.trace_path.take().unwrap()).unwrap();
            let t = deserialize_trace(&doc).unwrap();
            assert_eq!(t.termination, Termination::Answered);
            assert_eq!(t.benchmark.as_deref(), Some("toy"));
        }
        reports.push(report);
    }
    assert_eq!(reports[0], reports[1]);
    let r = &reports[0];
    // wrong at i = 0, 4, 8
    assert_eq!(r.n_correct, 9);
    assert_eq!(r.code_histogram.get(&0), Some(&4));
    assert_eq!(r.code_histogram.get(&1), Some(&4));
    assert_eq!(r.code_histogram.get(&2), Some(&4));
    assert!((r.pct_with_code - 8.0 / 12.0).abs() < 1e-15);
}

#[test]
fn cot_mode_and_faults() {
    let dir = tempfile::tempdir().unwrap();
    let items = load_dataset(write_dataset(dir.path(), 4)).unwrap();
    let agent = agent(&[]);
    let answers: HashMap<String, String> = items.iter().map(|i| (i.id.clone(), i.answer.clone())).collect();
    let factory = move |item: &DatasetItem| -> Box<dyn ChatModel> {
        if item.id == "item-03" {
            Box::new(ScriptedClient::new(Vec::<String>::new()))
        } else {
            Box::new(ScriptedClient::new([format!("so \\boxed{{{}}}", answers[&item.id])]))
        }
    };
    let run = BenchmarkRun {
        dataset_id: "toy",
        agent: &agent,
        mode: RunMode::Cot,
        parallelism: 2,
        trace_dir: None,
    };
    let (report, _) = run.run(&items, &factory).unwrap();
    assert_eq!(report.n_correct, 3);
    assert_eq!(report.n_faults, 1);
    assert_eq!(report.pct_with_code, 0.0);
    assert!(report.per_item[3].fault);
}
