//! `bench`: evaluate a dataset in agent or chain-of-thought mode.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use codeloop_core::eval::{load_dataset, BenchmarkRun, DatasetError, DatasetItem, RunMode, RunReport};
use codeloop_core::{Agent, ChatModel, ClientConfig, SessionConfig};
use serde::Serialize;
use tracing::info;

use crate::config::{self, FileConfig, KernelArgs, KernelSettings, ModelArgs, SessionArgs};
use crate::run::{live_client, MockScripts};
use crate::{prepare_output_dir, write_file, CliError, EXIT_OK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Agent,
    Cot,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSONL file, one item per line: {"id", "images", "question", "answer", "choices"?, "benchmark"?}.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Name used in the report; defaults to the dataset file stem.
    #[arg(long)]
    pub dataset_id: Option<String>,
    #[arg(long, value_enum, default_value = "agent")]
    pub mode: Mode,
    /// Sessions run at once, each with its own kernel.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Only the first N items.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Earlier report.json to compute the accuracy delta against.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Canned model responses: one JSON array for every item, or an object keyed by item id.
    #[arg(long)]
    pub mock_model: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(short, long)]
    pub output_dir: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub session: SessionArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Serialize)]
struct BenchSettings<'a> {
    dataset: &'a Path,
    dataset_id: &'a str,
    mode: &'a str,
    parallelism: usize,
    limit: Option<usize>,
    model: &'a ClientConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    mock_model: Option<&'a Path>,
    session: &'a SessionConfig,
    kernel: &'a KernelSettings,
}

fn dataset_error(e: DatasetError) -> CliError {
    match e {
        DatasetError::Io { .. } => CliError::Usage(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn load_baseline(path: &Path) -> Result<RunReport, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read baseline {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("baseline {}: {e}", path.display())))
}

pub fn bench(args: BenchArgs) -> Result<u8, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let client_config = config::resolve_client(&file.model, &args.model)?;
    let session = config::resolve_session(&file.session, &args.session, &client_config)?;
    let kernel = config::resolve_kernel(&file.kernel, &args.kernel)?;
    let parallelism = args.parallelism.or(file.bench.parallelism).unwrap_or(1);
    if parallelism == 0 {
        return Err(CliError::Usage("parallelism must be at least 1".into()));
    }
    let mut items: Vec<DatasetItem> = load_dataset(&args.dataset).map_err(dataset_error)?;
    if let Some(n) = args.limit {
        items.truncate(n);
    }
    let baseline = args.baseline.as_deref().map(load_baseline).transpose()?;
    let scripts = args.mock_model.as_deref().map(MockScripts::load).transpose()?;
    let live = match scripts {
        Some(_) => None,
        None => Some(Arc::new(live_client(&client_config)?)),
    };
    let dataset_id = args.dataset_id.clone().unwrap_or_else(|| {
        args.dataset
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    let mode = match args.mode {
        Mode::Agent => RunMode::Agent,
        Mode::Cot => RunMode::Cot,
    };

    let out = prepare_output_dir(&args.output_dir)?;
    config::write_effective(
        &out,
        &BenchSettings {
            dataset: &args.dataset,
            dataset_id: &dataset_id,
            mode: mode.as_str(),
            parallelism,
            limit: args.limit,
            model: &client_config,
            mock_model: args.mock_model.as_deref(),
            session: &session,
            kernel: &kernel,
        },
    )?;

    let supervisor = kernel.supervisor(session.kernel_restart_policy, &out.join("kernel"))?;
    let agent = Agent::new(session, supervisor);
    let trace_dir = out.join("traces");
    let factory = |item: &DatasetItem| -> Box<dyn ChatModel> {
        match (&scripts, &live) {
            (Some(s), _) => Box::new(s.client_for(&item.id)),
            (None, Some(c)) => Box::new(Arc::clone(c)),
            (None, None) => unreachable!("one client source is always set"),
        }
    };
    info!(items = items.len(), parallelism, "benchmark started");
    let run = BenchmarkRun {
        dataset_id: &dataset_id,
        agent: &agent,
        mode,
        parallelism,
        trace_dir: Some(&trace_dir),
    };
    let (report, _) = run.run(&items, &factory).map_err(|e| CliError::Io(e.to_string()))?;

    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_file(&out.join("report.json"), json)?;
    write_file(&out.join("code_histogram.csv"), report.histogram_csv())?;
    println!("{}", RunReport::table_header());
    println!("{}", report.table_row(baseline.as_ref()));
    println!("correct: {}/{}, faults: {}", report.n_correct, report.n_items, report.n_faults);
    println!("report: {}", out.join("report.json").display());
    Ok(EXIT_OK)
}
