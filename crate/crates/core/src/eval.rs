//! Benchmark runs: dataset loading, answer scoring, and aggregate reports.
//!
//! Datasets are JSONL, one item per line:
//!
//! ```json
//! {"id": "vstar-001", "images": ["img/001.jpg"], "question": "...", "answer": "B",
//!  "choices": ["red", "blue"], "benchmark": "vstar"}
//! ```
//!
//! `choices` and `benchmark` are optional. Relative image paths resolve
//! against the dataset file's directory.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use tracing::info;

use crate::agent::Agent;
use crate::client::ChatModel;
use crate::image::ImageBlob;
use crate::session::{serialize_trace, SessionMode, SessionTrace, Termination};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub id: String,
    #[serde(rename = "images", default)]
    pub image_paths: Vec<PathBuf>,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("dataset schema error on line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("missing image {0}")]
    MissingImage(PathBuf),
}

/// Reads and validates a JSONL dataset.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetItem>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut item: DatasetItem = serde_json::from_str(raw).map_err(|e| DatasetError::Schema {
            line,
            message: e.to_string(),
        })?;
        if item.id.trim().is_empty() {
            return Err(DatasetError::Schema {
                line,
                message: "empty id".into(),
            });
        }
        if !seen.insert(item.id.clone()) {
            return Err(DatasetError::Schema {
                line,
                message: format!("duplicate id '{}'", item.id),
            });
        }
        for p in &mut item.image_paths {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.is_file() {
                return Err(DatasetError::MissingImage(p.clone()));
            }
        }
        items.push(item);
    }
    Ok(items)
}

fn normalize(s: &str) -> String {
    let mut t = s.trim();
    loop {
        let before = t;
        for (open, close) in [('"', '"'), ('\'', '\''), ('`', '`'), ('“', '”')] {
            if t.len() >= 2 && t.starts_with(open) && t.ends_with(close) {
                t = t[open.len_utf8()..t.len() - close.len_utf8()].trim();
            }
        }
        if let Some(inner) = t.strip_prefix("\\text{").and_then(|r| r.strip_suffix('}')) {
            t = inner.trim();
        }
        t = t.trim_end_matches(['.', ',', ';', ':', '!', '?']).trim();
        if t == before {
            break;
        }
    }
    t.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Index of an option letter such as `b`, `(b)` or `b)`, if in range.
fn option_letter(normalized: &str, n_choices: usize) -> Option<usize> {
    let t = normalized.trim_start_matches('(').trim_end_matches(')');
    let t = t.strip_prefix("option ").unwrap_or(t);
    let mut chars = t.chars();
    let c = chars.next()?;
    if chars.next().is_some() || !c.is_ascii_lowercase() {
        return None;
    }
    let idx = (c as u8 - b'a') as usize;
    (idx < n_choices).then_some(idx)
}

fn choice_index(normalized: &str, choices: &[String]) -> Option<usize> {
    option_letter(normalized, choices.len())
        .or_else(|| choices.iter().position(|c| normalize(c) == normalized))
}

/// Parses integers, decimals, simple fractions and thousands-grouped numbers.
pub fn parse_number(s: &str) -> Option<f64> {
    let t = s.trim();
    if let Some((num, den)) = t.split_once('/') {
        let (num, den) = (parse_number(num)?, parse_number(den)?);
        return (den != 0.0).then(|| num / den);
    }
    let grouped = t.contains(',')
        && t.split('.').next().is_some_and(|int| {
            let groups: Vec<&str> = int.trim_start_matches(['-', '+']).split(',').collect();
            groups[0].len() <= 3
                && !groups[0].is_empty()
                && groups[1..].iter().all(|g| g.len() == 3)
        });
    let cleaned = if grouped { t.replace(',', "") } else { t.to_string() };
    if cleaned.is_empty()
        || !cleaned
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
    {
        return None;
    }
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn numbers_equal(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-6 * a.abs().max(b.abs())
}

/// Compares a predicted answer with the gold answer.
///
/// Both sides are normalized (trimmed, unquoted, lower-cased, trailing
/// punctuation removed, whitespace collapsed). With `choices`, an option
/// letter matches the gold letter or the gold option's text. Otherwise the
/// normalized strings must match, or both must parse to numbers equal within
/// 1e-6 relative.
pub fn score_answer(predicted: &str, gold: &str, choices: Option<&[String]>) -> bool {
    let p = normalize(predicted);
    let g = normalize(gold);
    if p.is_empty() {
        return false;
    }
    if let Some(choices) = choices.filter(|c| !c.is_empty()) {
        if let (Some(pi), Some(gi)) = (choice_index(&p, choices), choice_index(&g, choices)) {
            return pi == gi;
        }
    }
    if p == g {
        return true;
    }
    match (parse_number(&p), parse_number(&g)) {
        (Some(a), Some(b)) => numbers_equal(a, b),
        _ => false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Agent,
    Cot,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Agent => "agent",
            Self::Cot => "cot",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    pub predicted: Option<String>,
    pub gold: String,
    pub correct: bool,
    pub n_code_blocks: usize,
    pub n_turns: usize,
    #[serde(default)]
    pub fault: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset_id: String,
    pub mode: RunMode,
    pub n_items: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub per_item: Vec<ItemRecord>,
    /// Code blocks per item → number of items.
    pub code_histogram: BTreeMap<usize, usize>,
    /// Fraction of items with at least one code block.
    pub pct_with_code: f64,
    pub n_faults: usize,
}

impl RunReport {
    /// Aggregates item records; the result does not depend on their order.
    pub fn aggregate(dataset_id: &str, mode: RunMode, mut per_item: Vec<ItemRecord>) -> Self {
        per_item.sort_by(|a, b| a.id.cmp(&b.id));
        let n_items = per_item.len();
        let n_correct = per_item.iter().filter(|r| r.correct).count();
        let with_code = per_item.iter().filter(|r| r.n_code_blocks >= 1).count();
        let mut code_histogram = BTreeMap::new();
        for r in &per_item {
            *code_histogram.entry(r.n_code_blocks).or_insert(0) += 1;
        }
        let frac = |k: usize| if n_items == 0 { 0.0 } else { k as f64 / n_items as f64 };
        Self {
            dataset_id: dataset_id.to_string(),
            mode,
            n_items,
            n_correct,
            accuracy: frac(n_correct),
            code_histogram,
            pct_with_code: frac(with_code),
            n_faults: per_item.iter().filter(|r| r.fault).count(),
            per_item,
        }
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("code_blocks,items\n");
        for (blocks, items) in &self.code_histogram {
            out.push_str(&format!("{blocks},{items}\n"));
        }
        out
    }

    pub fn table_header() -> &'static str {
        "| dataset | mode | items | accuracy (%) | with code (%) | delta (pts) |\n|---|---|---|---|---|---|"
    }

    /// One table row; `baseline` adds the accuracy delta in percentage points.
    pub fn table_row(&self, baseline: Option<&RunReport>) -> String {
        let delta = baseline
            .map(|b| format!("{:+.1}", 100.0 * (self.accuracy - b.accuracy)))
            .unwrap_or_else(|| "-".into());
        format!(
            "| {} | {} | {} | {:.1} | {:.1} | {} |",
            self.dataset_id,
            self.mode.as_str(),
            self.n_items,
            100.0 * self.accuracy,
            100.0 * self.pct_with_code,
            delta
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("parallelism must be at least 1")]
    Parallelism,
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Builds a fresh model client for one dataset item.
pub type ClientFactory<'a> = dyn Fn(&DatasetItem) -> Box<dyn ChatModel> + Sync + 'a;

pub struct BenchmarkRun<'a> {
    pub dataset_id: &'a str,
    pub agent: &'a Agent,
    pub mode: RunMode,
    pub parallelism: usize,
    /// Where per-item traces are written; `None` keeps them in memory only.
    pub trace_dir: Option<&'a Path>,
}

/// Trace file name for an item id; anything outside `[A-Za-z0-9._-]` becomes `_`.
pub fn trace_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

impl BenchmarkRun<'_> {
    /// Runs every item, `parallelism` at a time. Item failures are recorded
    /// as incorrect faults and never abort the run.
    pub fn run(
        &self,
        items: &[DatasetItem],
        client_for: &ClientFactory<'_>,
    ) -> Result<(RunReport, Vec<SessionTrace>), EvalError> {
        if self.parallelism == 0 {
            return Err(EvalError::Parallelism);
        }
        if let Some(dir) = self.trace_dir {
            std::fs::create_dir_all(dir).map_err(|source| EvalError::Io {
                path: dir.display().to_string(),
                source,
            })?;
        }
        let next = AtomicUsize::new(0);
        let done: Mutex<Vec<Result<(ItemRecord, SessionTrace), EvalError>>> = Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..self.parallelism.min(items.len().max(1)) {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::SeqCst);
                    let Some(item) = items.get(idx) else { break };
                    let outcome = self.run_item(item, client_for);
                    done.lock().expect("result lock").push(outcome);
                });
            }
        });
        let mut records = Vec::with_capacity(items.len());
        let mut traces = Vec::with_capacity(items.len());
        for outcome in done.into_inner().expect("result lock") {
            let (record, trace) = outcome?;
            records.push(record);
            traces.push(trace);
        }
        traces.sort_by(|a, b| a.id.cmp(&b.id));
        let report = RunReport::aggregate(self.dataset_id, self.mode, records);
        info!(
            dataset = self.dataset_id,
            accuracy = report.accuracy,
            items = report.n_items,
            "benchmark finished"
        );
        Ok((report, traces))
    }

    fn run_item(
        &self,
        item: &DatasetItem,
        client_for: &ClientFactory<'_>,
    ) -> Result<(ItemRecord, SessionTrace), EvalError> {
        let images: Result<Vec<ImageBlob>, _> = item.image_paths.iter().map(ImageBlob::from_file).collect();
        let mut trace = match images {
            Ok(images) => {
                let client = client_for(item);
                let result = match self.mode {
                    RunMode::Agent => self.agent.run_session(&item.id, &item.question, &images, &*client),
                    RunMode::Cot => self.agent.run_cot(&item.id, &item.question, &images, &*client),
                };
                result.trace
            }
            Err(e) => {
                let mut trace = SessionTrace::new(&item.id, &item.question, Vec::new());
                trace.mode = match self.mode {
                    RunMode::Agent => SessionMode::Agent,
                    RunMode::Cot => SessionMode::Cot,
                };
                trace.faults.push(format!("cannot load item images: {e}"));
                trace
            }
        };
        trace.benchmark = Some(item.benchmark.clone().unwrap_or_else(|| self.dataset_id.to_string()));

        let trace_path = match self.trace_dir {
            Some(dir) => {
                let path = dir.join(trace_file_name(&item.id));
                std::fs::write(&path, serialize_trace(&trace)).map_err(|source| EvalError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                Some(path.display().to_string())
            }
            None => None,
        };
        let correct = trace
            .final_answer
            .as_deref()
            .is_some_and(|p| score_answer(p, &item.answer, item.choices.as_deref()));
        let record = ItemRecord {
            id: item.id.clone(),
            predicted: trace.final_answer.clone(),
            gold: item.answer.clone(),
            correct,
            n_code_blocks: trace.total_code_blocks(),
            n_turns: trace.turns.len(),
            fault: trace.termination == Termination::Fault,
            trace_path,
        };
        Ok((record, trace))
    }
}
