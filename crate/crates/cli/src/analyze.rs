//! `analyze`: tool-category distribution and snippet clustering over traces.

use std::path::{Path, PathBuf};

use clap::Args;
use codeloop_core::taxonomy::embed::DEFAULT_LEXICAL_DIM;
use codeloop_core::taxonomy::kmeans::DEFAULT_SEED;
use codeloop_core::taxonomy::{
    categorize, cluster_summaries, collect_snippets, distribution_report, embed, kmeans, Embedder, LexicalEmbedder,
    RemoteEmbedder, RuleTable, TaxonomyError, DISTRIBUTION_CSV_HEADER,
};
use codeloop_core::{deserialize_trace, ClientConfig, SessionTrace};
use serde::Serialize;
use serde_json::json;
use tracing::{info, warn};
use walkdir::WalkDir;

use crate::config::{self, EmbedderKind, FileConfig, ModelArgs};
use crate::{prepare_output_dir, write_file, CliError, EXIT_OK};

const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-3-small";

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Trace files or directories searched recursively for `*.json` traces.
    #[arg(long, required = true, num_args = 1..)]
    pub traces: Vec<PathBuf>,
    /// JSON rule table replacing the bundled one.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Cluster snippet embeddings into K groups (12 if K is omitted).
    #[arg(long, value_name = "K", num_args = 0..=1, default_missing_value = "12")]
    pub cluster: Option<usize>,
    /// Seed for k-means++ initialisation.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub embedder: Option<EmbedderKind>,
    /// Model name for the remote embedder.
    #[arg(long)]
    pub embedding_model: Option<String>,
    /// Vector length: hash buckets for the lexical embedder, requested size for the remote one.
    #[arg(long)]
    pub dimensions: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(short, long)]
    pub output_dir: PathBuf,
    /// Endpoint settings for the remote embedder.
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Serialize)]
struct AnalyzeSettings<'a> {
    traces: &'a [PathBuf],
    rules: Option<&'a Path>,
    clusters: Option<usize>,
    seed: u64,
    embedder: EmbedderKind,
    dimensions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    remote: Option<&'a ClientConfig>,
}

/// Loads every readable trace below `roots`, in path order. Files that are not
/// traces are skipped with a warning.
fn load_traces(roots: &[PathBuf]) -> Result<(Vec<SessionTrace>, usize), CliError> {
    let mut files = Vec::new();
    for root in roots {
        if !root.exists() {
            return Err(CliError::Usage(format!("no such trace path: {}", root.display())));
        }
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| CliError::Io(e.to_string()))?;
            if entry.file_type().is_file() && entry.path().extension().is_some_and(|x| x == "json") {
                files.push(entry.into_path());
            }
        }
    }
    let mut traces = Vec::new();
    let mut skipped = 0;
    for path in files {
        let doc = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        match deserialize_trace(&doc) {
            Ok(t) => traces.push(t),
            Err(e) => {
                warn!(path = %path.display(), error = %e, "skipping file that is not a trace");
                skipped += 1;
            }
        }
    }
    Ok((traces, skipped))
}

fn taxonomy_error(e: TaxonomyError) -> CliError {
    match e {
        TaxonomyError::Usage(m) => CliError::Usage(m),
        TaxonomyError::Rules(m) => CliError::Data(format!("rule table: {m}")),
    }
}

pub fn analyze(args: AnalyzeArgs) -> Result<u8, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let a = &file.analyze;
    let rules_path = args.rules.clone().or_else(|| a.rules.clone());
    let rules = match &rules_path {
        Some(p) => RuleTable::from_path(p).map_err(taxonomy_error)?,
        None => RuleTable::default(),
    };
    let clusters = args.cluster.or(a.clusters);
    let seed = args.seed.or(a.seed).unwrap_or(DEFAULT_SEED);
    let embedder_kind = args.embedder.or(a.embedder).unwrap_or(EmbedderKind::Lexical);
    let dimensions = args.dimensions.or(a.dimensions);
    if clusters == Some(0) {
        return Err(CliError::Usage("--cluster needs at least one cluster".into()));
    }
    if dimensions == Some(0) {
        return Err(CliError::Usage("--dimensions must be positive".into()));
    }
    let remote = match embedder_kind {
        EmbedderKind::Remote => {
            let mut c = config::resolve_client(&file.model, &args.model)?;
            c.model_id = args
                .embedding_model
                .clone()
                .or_else(|| a.embedding_model.clone())
                .unwrap_or_else(|| DEFAULT_EMBEDDING_MODEL.into());
            Some(c)
        }
        EmbedderKind::Lexical => None,
    };

    let (traces, skipped) = load_traces(&args.traces)?;
    if traces.is_empty() {
        return Err(CliError::Data(format!("no traces found ({skipped} other JSON files skipped)")));
    }
    let out = prepare_output_dir(&args.output_dir)?;
    config::write_effective(
        &out,
        &AnalyzeSettings {
            traces: &args.traces,
            rules: rules_path.as_deref(),
            clusters,
            seed,
            embedder: embedder_kind,
            dimensions,
            remote: remote.as_ref(),
        },
    )?;

    let mut records = collect_snippets(&traces);
    categorize(&mut records, &rules);
    println!("traces: {} ({skipped} skipped), code snippets: {}", traces.len(), records.len());

    let csv_path = out.join("distribution.csv");
    let summary_path = out.join("summary.txt");
    if records.is_empty() {
        println!("no code snippets in these traces; the distribution is empty");
        write_file(&csv_path, format!("{DISTRIBUTION_CSV_HEADER}\n"))?;
        write_file(&summary_path, "no code snippets\n")?;
        return Ok(EXIT_OK);
    }
    let report = distribution_report(&records).map_err(taxonomy_error)?;
    write_file(&csv_path, report.to_csv())?;
    let summary = report.summary();
    write_file(&summary_path, &summary)?;
    print!("{summary}");

    let mut cluster_of = vec![None; records.len()];
    if let Some(k) = clusters {
        let embedder = match remote {
            Some(c) => {
                let mut r = RemoteEmbedder::new(c).map_err(|e| CliError::Usage(e.to_string()))?;
                r.dimensions = dimensions;
                Embedder::RemoteApi(r)
            }
            None => Embedder::LocalLexical(LexicalEmbedder {
                dim: dimensions.unwrap_or(DEFAULT_LEXICAL_DIM),
            }),
        };
        embed(&mut records, &embedder).map_err(|e| CliError::Fault(format!("embedding failed: {e}")))?;
        let vectors: Vec<Vec<f64>> = records
            .iter()
            .map(|r| r.embedding.clone().expect("embedded above"))
            .collect();
        info!(k, seed, "clustering snippets");
        let result = kmeans(&vectors, k, seed).map_err(taxonomy_error)?;
        let summaries = cluster_summaries(&records, &result);
        for (slot, a) in cluster_of.iter_mut().zip(&result.assignments) {
            *slot = Some(*a);
        }
        let mut text = format!(
            "k = {k}, seed = {seed}, iterations = {}, converged = {}, inertia = {:.6}\n",
            result.iterations,
            result.converged,
            result.inertia()
        );
        for s in &summaries {
            let labels: Vec<String> = s.labels.iter().map(|(l, n)| format!("{l} {n}")).collect();
            text.push_str(&format!(
                "cluster {} ({} snippets): {}\n  exemplar: {}\n",
                s.cluster,
                s.size,
                labels.join(", "),
                s.exemplar_line
            ));
        }
        write_file(&out.join("clusters.txt"), &text)?;
        let doc = json!({
            "k": k,
            "seed": seed,
            "iterations": result.iterations,
            "converged": result.converged,
            "inertia": result.inertia(),
            "clusters": summaries,
        });
        write_file(
            &out.join("clusters.json"),
            serde_json::to_string_pretty(&doc).expect("json") + "\n",
        )?;
        print!("{text}");
    }

    let mut lines = String::new();
    for (r, cluster) in records.iter().zip(&cluster_of) {
        let category = r.category.expect("categorized above");
        let row = json!({
            "benchmark": r.benchmark_id,
            "trace": r.trace_id,
            "turn": r.turn_index,
            "block": r.block_index,
            "major": category.major().as_str(),
            "label": category.label(),
            "rule": rules.explain(&r.code).map(|(_, p)| p),
            "cluster": cluster,
        });
        lines.push_str(&row.to_string());
        lines.push('\n');
    }
    write_file(&out.join("snippets.jsonl"), lines)?;
    println!("distribution: {}", csv_path.display());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use clap::Parser;
    use codeloop_core::taxonomy::kmeans::DEFAULT_K;

    use super::AnalyzeArgs;

    #[derive(Parser)]
    struct Wrapper {
        #[command(flatten)]
        args: AnalyzeArgs,
    }

    #[test]
    fn bare_cluster_flag_uses_library_default() {
        let w = Wrapper::try_parse_from(["x", "--traces", "t", "-o", "o", "--cluster"]).unwrap();
        assert_eq!(w.args.cluster, Some(DEFAULT_K));
        let w = Wrapper::try_parse_from(["x", "--traces", "t", "-o", "o", "--cluster", "3"]).unwrap();
        assert_eq!(w.args.cluster, Some(3));
        let w = Wrapper::try_parse_from(["x", "--traces", "t", "-o", "o"]).unwrap();
        assert_eq!(w.args.cluster, None);
    }
}
