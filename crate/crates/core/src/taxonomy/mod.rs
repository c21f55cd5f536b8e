//! Tool taxonomy over generated snippets.
//!
//! Snippets are mined from session traces, labelled by an ordered rule table
//! (see [`rules`]), and summarized per benchmark. Embedding and k-means
//! clustering are kept as an exploratory aid: cluster summaries are printed
//! for review but never decide a label.

pub mod embed;
pub mod kmeans;
pub mod rules;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::session::SessionTrace;

pub use embed::{embed, EmbedError, Embedder, LexicalEmbedder, RemoteEmbedder};
pub use kmeans::{kmeans, kmeans_with_cap, KMeansResult};
pub use rules::{classify_snippet, RuleTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Major {
    BasicImageProcessing,
    AdvancedImageProcessing,
    VisualPromptingSketching,
    NumericalStatistical,
    LongTail,
}

impl Major {
    pub const ALL: [Major; 5] = [
        Major::BasicImageProcessing,
        Major::AdvancedImageProcessing,
        Major::VisualPromptingSketching,
        Major::NumericalStatistical,
        Major::LongTail,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BasicImageProcessing => "basic_image_processing",
            Self::AdvancedImageProcessing => "advanced_image_processing",
            Self::VisualPromptingSketching => "visual_prompting_sketching",
            Self::NumericalStatistical => "numerical_statistical",
            Self::LongTail => "long_tail",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sub {
    Cropping,
    Rotation,
    Enhancement,
    Segmentation,
    Detection,
    #[serde(rename = "ocr")]
    Ocr,
    RenderMarks,
    RenderLines,
    ImageHistogram,
    NumericalAnalysis,
}

impl Sub {
    pub const ALL: [Sub; 10] = [
        Sub::Cropping,
        Sub::Rotation,
        Sub::Enhancement,
        Sub::Segmentation,
        Sub::Detection,
        Sub::Ocr,
        Sub::RenderMarks,
        Sub::RenderLines,
        Sub::ImageHistogram,
        Sub::NumericalAnalysis,
    ];

    pub fn major(self) -> Major {
        match self {
            Self::Cropping | Self::Rotation | Self::Enhancement => Major::BasicImageProcessing,
            Self::Segmentation | Self::Detection | Self::Ocr => Major::AdvancedImageProcessing,
            Self::RenderMarks | Self::RenderLines => Major::VisualPromptingSketching,
            Self::ImageHistogram | Self::NumericalAnalysis => Major::NumericalStatistical,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cropping => "cropping",
            Self::Rotation => "rotation",
            Self::Enhancement => "enhancement",
            Self::Segmentation => "segmentation",
            Self::Detection => "detection",
            Self::Ocr => "ocr",
            Self::RenderMarks => "render_marks",
            Self::RenderLines => "render_lines",
            Self::ImageHistogram => "image_histogram",
            Self::NumericalAnalysis => "numerical_analysis",
        }
    }

    pub fn parse(s: &str) -> Option<Sub> {
        Sub::ALL.into_iter().find(|sub| sub.as_str() == s)
    }
}

/// A major class with an optional fine-grained label that belongs to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawCategory")]
pub struct ToolCategory {
    major: Major,
    #[serde(skip_serializing_if = "Option::is_none")]
    sub: Option<Sub>,
}

#[derive(Deserialize)]
struct RawCategory {
    major: Major,
    #[serde(default)]
    sub: Option<Sub>,
}

impl TryFrom<RawCategory> for ToolCategory {
    type Error = String;

    fn try_from(raw: RawCategory) -> Result<Self, String> {
        ToolCategory::new(raw.major, raw.sub)
    }
}

impl ToolCategory {
    pub fn new(major: Major, sub: Option<Sub>) -> Result<Self, String> {
        match sub {
            Some(s) if s.major() != major => Err(format!(
                "sub-category {} belongs to {}, not {}",
                s.as_str(),
                s.major().as_str(),
                major.as_str()
            )),
            _ => Ok(Self { major, sub }),
        }
    }

    pub fn from_sub(sub: Sub) -> Self {
        Self { major: sub.major(), sub: Some(sub) }
    }

    pub fn long_tail() -> Self {
        Self { major: Major::LongTail, sub: None }
    }

    pub fn major(&self) -> Major {
        self.major
    }

    pub fn sub(&self) -> Option<Sub> {
        self.sub
    }

    /// Finest available label: the sub-category, else the major.
    pub fn label(&self) -> &'static str {
        self.sub.map(Sub::as_str).unwrap_or(self.major.as_str())
    }
}

impl fmt::Display for ToolCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sub {
            Some(sub) => write!(f, "{}/{}", self.major.as_str(), sub.as_str()),
            None => f.write_str(self.major.as_str()),
        }
    }
}

/// One generated code block with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnippetRecord {
    pub code: String,
    pub benchmark_id: String,
    pub trace_id: String,
    pub turn_index: usize,
    pub block_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<ToolCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    /// Set when the snippet had no usable tokens and got a zero vector.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

/// Benchmark id used for traces that carry none.
pub const UNKNOWN_BENCHMARK: &str = "unknown";

/// One record per code block, in trace, turn and block order.
pub fn collect_snippets(traces: &[SessionTrace]) -> Vec<SnippetRecord> {
    let mut out = Vec::new();
    for trace in traces {
        let benchmark = trace.benchmark.clone().unwrap_or_else(|| UNKNOWN_BENCHMARK.into());
        for turn in &trace.turns {
            for (block_index, code) in turn.code_blocks.iter().enumerate() {
                out.push(SnippetRecord {
                    code: code.clone(),
                    benchmark_id: benchmark.clone(),
                    trace_id: trace.id.clone(),
                    turn_index: turn.index,
                    block_index,
                    category: None,
                    embedding: None,
                    degenerate: false,
                });
            }
        }
    }
    out
}

/// Labels every record with the given rule table.
pub fn categorize(records: &mut [SnippetRecord], rules: &RuleTable) {
    for r in records {
        r.category = Some(rules.classify(&r.code));
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid rule table: {0}")]
    Rules(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkDistribution {
    pub benchmark_id: String,
    pub n_snippets: usize,
    /// Count per major class, every class present.
    pub major_counts: BTreeMap<Major, usize>,
    /// Count per finest label: every sub-category plus `long_tail`.
    pub label_counts: BTreeMap<&'static str, usize>,
}

impl BenchmarkDistribution {
    pub fn major_fraction(&self, major: Major) -> f64 {
        self.major_counts[&major] as f64 / self.n_snippets as f64
    }

    pub fn label_fraction(&self, label: &str) -> f64 {
        self.label_counts.get(label).copied().unwrap_or(0) as f64 / self.n_snippets as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionReport {
    pub benchmarks: Vec<BenchmarkDistribution>,
}

pub const DISTRIBUTION_CSV_HEADER: &str = "benchmark,level,category,count,fraction";

impl DistributionReport {
    pub fn get(&self, benchmark_id: &str) -> Option<&BenchmarkDistribution> {
        self.benchmarks.iter().find(|b| b.benchmark_id == benchmark_id)
    }

    /// Long-format CSV: one `major` row per class and one `sub` row per label.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{DISTRIBUTION_CSV_HEADER}\n");
        for b in &self.benchmarks {
            for (major, count) in &b.major_counts {
                out.push_str(&format!(
                    "{},major,{},{},{:.6}\n",
                    b.benchmark_id,
                    major.as_str(),
                    count,
                    b.major_fraction(*major)
                ));
            }
            for (label, count) in &b.label_counts {
                out.push_str(&format!(
                    "{},sub,{},{},{:.6}\n",
                    b.benchmark_id,
                    label,
                    count,
                    b.label_fraction(label)
                ));
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for b in &self.benchmarks {
            out.push_str(&format!("{} ({} snippets)\n", b.benchmark_id, b.n_snippets));
            for major in Major::ALL {
                let frac = b.major_fraction(major);
                if frac == 0.0 {
                    continue;
                }
                out.push_str(&format!("  {:<28}{:>6.1}%", major.as_str(), 100.0 * frac));
                let subs: Vec<String> = Sub::ALL
                    .iter()
                    .filter(|s| s.major() == major && b.label_counts[s.as_str()] > 0)
                    .map(|s| format!("{} {:.1}%", s.as_str(), 100.0 * b.label_fraction(s.as_str())))
                    .collect();
                if !subs.is_empty() {
                    out.push_str(&format!("  ({})", subs.join(", ")));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Per-benchmark category counts. Benchmarks without snippets do not appear.
pub fn distribution_report(records: &[SnippetRecord]) -> Result<DistributionReport, TaxonomyError> {
    let mut by_bench: BTreeMap<&str, Vec<ToolCategory>> = BTreeMap::new();
    for r in records {
        let cat = r.category.ok_or_else(|| {
            TaxonomyError::Usage(format!(
                "snippet {}#{}.{} has no category",
                r.trace_id, r.turn_index, r.block_index
            ))
        })?;
        by_bench.entry(&r.benchmark_id).or_default().push(cat);
    }
    let benchmarks = by_bench
        .into_iter()
        .map(|(id, cats)| {
            let mut major_counts: BTreeMap<Major, usize> = Major::ALL.iter().map(|m| (*m, 0)).collect();
            let mut label_counts: BTreeMap<&'static str, usize> =
                Sub::ALL.iter().map(|s| (s.as_str(), 0)).collect();
            label_counts.insert(Major::LongTail.as_str(), 0);
            for c in &cats {
                *major_counts.get_mut(&c.major()).expect("all majors present") += 1;
                *label_counts.entry(c.label()).or_insert(0) += 1;
            }
            BenchmarkDistribution {
                benchmark_id: id.to_string(),
                n_snippets: cats.len(),
                major_counts,
                label_counts,
            }
        })
        .collect();
    Ok(DistributionReport { benchmarks })
}

/// What one cluster looks like, for human review.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    /// Rule-table labels inside the cluster, most frequent first.
    pub labels: Vec<(String, usize)>,
    /// Record closest to the centroid.
    pub exemplar: usize,
    pub exemplar_line: String,
}

/// Summaries for a clustering of `records` (which must carry embeddings).
pub fn cluster_summaries(records: &[SnippetRecord], result: &KMeansResult) -> Vec<ClusterSummary> {
    let k = result.centroids.len();
    (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..records.len()).filter(|&i| result.assignments[i] == c).collect();
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for &i in &members {
                let label = records[i].category.map(|c| c.label()).unwrap_or("uncategorized");
                *counts.entry(label.to_string()).or_insert(0) += 1;
            }
            let mut labels: Vec<(String, usize)> = counts.into_iter().collect();
            labels.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let exemplar = members
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let da = kmeans::sq_dist(records[a].embedding.as_deref().unwrap_or(&[]), &result.centroids[c]);
                    let db = kmeans::sq_dist(records[b].embedding.as_deref().unwrap_or(&[]), &result.centroids[c]);
                    da.total_cmp(&db)
                })
                .unwrap_or(usize::MAX);
            let exemplar_line = records
                .get(exemplar)
                .map(|r| first_code_line(&r.code))
                .unwrap_or_default();
            ClusterSummary {
                cluster: c,
                size: members.len(),
                labels,
                exemplar,
                exemplar_line,
            }
        })
        .collect()
}

fn first_code_line(code: &str) -> String {
    code.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#') && !l.starts_with("import ") && !l.starts_with("from "))
        .unwrap_or("")
        .chars()
        .take(100)
        .collect()
}
