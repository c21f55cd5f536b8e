//! `run` and `replay`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::Args;
use codeloop_core::eval::trace_file_name;
use codeloop_core::session::SessionMode;
use codeloop_core::{
    deserialize_trace, serialize_trace, Agent, ChatModel, ClientConfig, HttpChatClient, ImageBlob, ScriptedClient,
    SessionConfig, SessionResult, SessionTrace, Termination,
};
use serde::Serialize;
use tracing::{info, warn};

use crate::config::{self, FileConfig, KernelArgs, KernelSettings, ModelArgs, SessionArgs};
use crate::{prepare_output_dir, write_file, CliError, EXIT_FAULT, EXIT_NO_ANSWER, EXIT_OK};

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Input images, bound to image_clue_0, image_clue_1, ... in this order.
    pub images: Vec<PathBuf>,
    /// The question to answer.
    #[arg(short, long)]
    pub query: String,
    /// Single-call chain-of-thought baseline instead of the code loop.
    #[arg(long)]
    pub cot: bool,
    /// Session id, also the trace file name.
    #[arg(long, default_value = "session")]
    pub id: String,
    /// JSON array of canned model responses used instead of a live endpoint.
    #[arg(long)]
    pub mock_model: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for the trace, the effective config and kernel scratch files.
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
struct RunSettings<'a> {
    mode: &'a str,
    model: &'a ClientConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    mock_model: Option<&'a Path>,
    session: &'a SessionConfig,
    kernel: &'a KernelSettings,
}

/// Canned model responses from a `--mock-model` file: either one JSON array
/// shared by every session, or an object mapping item ids to arrays.
#[derive(Clone, Debug, PartialEq)]
pub enum MockScripts {
    Shared(Vec<String>),
    PerItem(HashMap<String, Vec<String>>),
}

impl MockScripts {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read mock model {}: {e}", path.display())))?;
        let bad = |e: serde_json::Error| {
            CliError::Data(format!(
                "{}: expected a JSON array of strings or an object of such arrays: {e}",
                path.display()
            ))
        };
        match serde_json::from_str::<serde_json::Value>(&text).map_err(bad)? {
            v @ serde_json::Value::Array(_) => Ok(Self::Shared(serde_json::from_value(v).map_err(bad)?)),
            v => Ok(Self::PerItem(serde_json::from_value(v).map_err(bad)?)),
        }
    }

    /// Script for one id; ids missing from a per-item map get an empty script.
    pub fn client_for(&self, id: &str) -> ScriptedClient {
        match self {
            Self::Shared(s) => ScriptedClient::new(s.clone()),
            Self::PerItem(m) => ScriptedClient::new(m.get(id).cloned().unwrap_or_default()),
        }
    }
}

pub fn load_images(paths: &[PathBuf]) -> Result<Vec<ImageBlob>, CliError> {
    paths
        .iter()
        .map(|p| {
            if !p.is_file() {
                return Err(CliError::Usage(format!("image not found: {}", p.display())));
            }
            ImageBlob::from_file(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        })
        .collect()
}

pub fn live_client(config: &ClientConfig) -> Result<HttpChatClient, CliError> {
    if std::env::var(&config.api_key_env).map_or(true, |k| k.is_empty()) {
        warn!(var = %config.api_key_env, "API key variable is unset; requests go out without authorization");
    }
    HttpChatClient::new(config.clone()).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn exit_code(termination: Termination) -> u8 {
    match termination {
        Termination::Answered => EXIT_OK,
        Termination::MaxTurnsExceeded | Termination::Unanswered => EXIT_NO_ANSWER,
        Termination::Fault => EXIT_FAULT,
    }
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Answered => "answered",
        Termination::MaxTurnsExceeded => "max_turns_exceeded",
        Termination::Unanswered => "unanswered",
        Termination::Fault => "fault",
    }
}

fn write_trace(dir: &Path, trace: &SessionTrace) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(trace_file_name(&trace.id));
    write_file(&path, serialize_trace(trace))?;
    Ok(path)
}

fn report(res: &SessionResult, trace_path: &Path) {
    println!("answer: {}", res.answer.as_deref().unwrap_or("(none)"));
    println!("termination: {}", termination_name(res.trace.termination));
    println!("turns: {}, code blocks: {}", res.n_turns, res.n_code_blocks);
    for fault in &res.faults {
        println!("fault: {fault}");
    }
    println!("trace: {}", trace_path.display());
}

pub fn run(args: RunArgs) -> Result<u8, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let client_config = config::resolve_client(&file.model, &args.model)?;
    let session = config::resolve_session(&file.session, &args.session, &client_config)?;
    let kernel = config::resolve_kernel(&file.kernel, &args.kernel)?;
    let images = load_images(&args.images)?;
    let scripts = args.mock_model.as_deref().map(MockScripts::load).transpose()?;

    let out = prepare_output_dir(&args.output_dir)?;
    let mode = if args.cot { "cot" } else { "agent" };
    let settings = RunSettings {
        mode,
        model: &client_config,
        mock_model: args.mock_model.as_deref(),
        session: &session,
        kernel: &kernel,
    };
    let config_path = config::write_effective(&out, &settings)?;
    info!(path = %config_path.display(), "effective config written");

    let supervisor = kernel.supervisor(session.kernel_restart_policy, &out.join("kernel"))?;
    let agent = Agent::new(session, supervisor);
    let client: Box<dyn ChatModel> = match &scripts {
        Some(s) => Box::new(s.client_for(&args.id)),
        None => Box::new(live_client(&client_config)?),
    };
    let res = if args.cot {
        agent.run_cot(&args.id, &args.query, &images, client.as_ref())
    } else {
        agent.run_session(&args.id, &args.query, &images, client.as_ref())
    };
    let trace_path = write_trace(&out.join("traces"), &res.trace)?;
    report(&res, &trace_path);
    Ok(exit_code(res.trace.termination))
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Trace file written by `run` or `bench`.
    pub trace: PathBuf,
    /// Kernel settings are read from here; model settings are not used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(short, long)]
    pub output_dir: PathBuf,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

/// First place where two timing-free traces disagree.
fn first_difference(a: &SessionTrace, b: &SessionTrace) -> Option<String> {
    let (a, b) = (a.without_timing(), b.without_timing());
    for (i, (ta, tb)) in a.turns.iter().zip(&b.turns).enumerate() {
        if ta != tb {
            return Some(format!("turn {i}"));
        }
    }
    if a.turns.len() != b.turns.len() {
        return Some(format!("turn count {} vs {}", a.turns.len(), b.turns.len()));
    }
    if serialize_trace(&a) != serialize_trace(&b) {
        return Some("session fields".into());
    }
    None
}

pub fn replay(args: ReplayArgs) -> Result<u8, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let kernel = config::resolve_kernel(&file.kernel, &args.kernel)?;
    let doc = std::fs::read(&args.trace)
        .map_err(|e| CliError::Usage(format!("cannot read trace {}: {e}", args.trace.display())))?;
    let original =
        deserialize_trace(&doc).map_err(|e| CliError::Data(format!("{}: {e}", args.trace.display())))?;
    let session = original.config.clone().unwrap_or_default();

    let out = prepare_output_dir(&args.output_dir)?;
    #[derive(Serialize)]
    struct ReplaySettings<'a> {
        trace: &'a Path,
        session: &'a SessionConfig,
        kernel: &'a KernelSettings,
    }
    config::write_effective(
        &out,
        &ReplaySettings {
            trace: &args.trace,
            session: &session,
            kernel: &kernel,
        },
    )?;

    let supervisor = kernel.supervisor(session.kernel_restart_policy, &out.join("kernel"))?;
    let agent = Agent::new(session, supervisor);
    let client = ScriptedClient::from_trace(&original);
    let res = match original.mode {
        SessionMode::Cot => agent.run_cot(&original.id, &original.query, &original.images, &client),
        SessionMode::Agent => agent.run_session(&original.id, &original.query, &original.images, &client),
    };
    let mut replayed = res.trace;
    replayed.benchmark = original.benchmark.clone();
    let path = write_trace(&out.join("replay"), &replayed)?;
    println!("replayed: {}", path.display());
    match first_difference(&original, &replayed) {
        None => {
            println!("identical (timing excluded)");
            Ok(EXIT_OK)
        }
        Some(at) => {
            println!("differs at {at}");
            Ok(EXIT_FAULT)
        }
    }
}
