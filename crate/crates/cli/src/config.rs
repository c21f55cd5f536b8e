//! Layered settings: command-line flags, then the `--config` TOML file, then
//! built-in defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use codeloop_core::session::RestartPolicy;
use codeloop_core::{ClientConfig, SessionConfig, SupervisorConfig, PYTHON_KERNEL_SOURCE};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Placeholder in a kernel command that expands to the bundled Python kernel.
pub const PYTHON_KERNEL_PLACEHOLDER: &str = "{python_kernel}";
pub const PYTHON_KERNEL_FILE: &str = "codeloop_kernel.py";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub model: ModelFile,
    #[serde(default)]
    pub session: SessionFile,
    #[serde(default)]
    pub kernel: KernelFile,
    #[serde(default)]
    pub bench: BenchFile,
    #[serde(default)]
    pub analyze: AnalyzeFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub base_url: Option<String>,
    pub api_key_env: Option<String>,
    pub model_id: Option<String>,
    pub temperature: Option<f64>,
    pub max_retries: Option<u32>,
    pub request_timeout: Option<f64>,
    pub backoff_base: Option<f64>,
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub max_turns: Option<u32>,
    pub exec_timeout: Option<f64>,
    pub restart_policy: Option<RestartPolicy>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    pub command: Option<Vec<String>>,
    pub startup_timeout: Option<f64>,
    pub init_timeout: Option<f64>,
    pub grace_period: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchFile {
    pub parallelism: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeFile {
    pub rules: Option<PathBuf>,
    pub clusters: Option<usize>,
    pub seed: Option<u64>,
    pub embedder: Option<EmbedderKind>,
    pub embedding_model: Option<String>,
    pub dimensions: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Lexical,
    Remote,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Chat completions endpoint base URL.
    #[arg(long)]
    pub base_url: Option<String>,
    /// Environment variable that holds the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// HTTP request timeout in seconds.
    #[arg(long)]
    pub request_timeout: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SessionArgs {
    #[arg(long)]
    pub max_turns: Option<u32>,
    /// Per-snippet wall-clock limit in seconds.
    #[arg(long)]
    pub exec_timeout: Option<f64>,
    #[arg(long, value_parser = parse_policy)]
    pub restart_policy: Option<RestartPolicy>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct KernelArgs {
    /// Kernel launch command, split like a shell would. `{python_kernel}`
    /// expands to the bundled Python kernel.
    #[arg(long, conflicts_with = "mock_kernel")]
    pub kernel_cmd: Option<String>,
    /// Use the built-in mock kernel (a small Python subset, no interpreter needed).
    #[arg(long)]
    pub mock_kernel: bool,
    /// Seconds to wait for the kernel's ready frame.
    #[arg(long)]
    pub startup_timeout: Option<f64>,
}

fn parse_policy(s: &str) -> Result<RestartPolicy, String> {
    match s {
        "restart_and_report" | "restart" => Ok(RestartPolicy::RestartAndReport),
        "fail_session" | "fail" => Ok(RestartPolicy::FailSession),
        _ => Err("expected restart_and_report or fail_session".into()),
    }
}

/// Kernel launch settings as resolved, before placeholders are expanded.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelSettings {
    pub command: Vec<String>,
    pub startup_timeout: f64,
    pub init_timeout: f64,
    pub grace_period: f64,
}

impl KernelSettings {
    /// Builds the supervisor config. The bundled Python kernel is written to
    /// `scratch` if the command refers to it, and `scratch/work` becomes the
    /// kernel's working directory.
    pub fn supervisor(&self, policy: RestartPolicy, scratch: &Path) -> Result<SupervisorConfig, CliError> {
        let work = scratch.join("work");
        std::fs::create_dir_all(&work).map_err(|e| CliError::io(&work, e))?;
        let mut command = self.command.clone();
        if command.iter().any(|a| a.contains(PYTHON_KERNEL_PLACEHOLDER)) {
            let script = scratch.join(PYTHON_KERNEL_FILE);
            std::fs::write(&script, PYTHON_KERNEL_SOURCE).map_err(|e| CliError::io(&script, e))?;
            let script = std::path::absolute(&script).map_err(|e| CliError::io(&script, e))?;
            for arg in &mut command {
                *arg = arg.replace(PYTHON_KERNEL_PLACEHOLDER, &script.display().to_string());
            }
        }
        let mut config = SupervisorConfig::new(command);
        config.startup_timeout = secs(self.startup_timeout);
        config.init_timeout = secs(self.init_timeout);
        config.grace_period = secs(self.grace_period);
        config.restart_policy = policy;
        config.working_dir = Some(work);
        Ok(config)
    }
}

fn secs(s: f64) -> Duration {
    Duration::from_secs_f64(s)
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{name} must be a positive number of seconds")))
    }
}

pub fn default_kernel_command() -> Vec<String> {
    vec!["python3".into(), "-u".into(), PYTHON_KERNEL_PLACEHOLDER.into()]
}

pub fn mock_kernel_command() -> Result<Vec<String>, CliError> {
    let exe = std::env::current_exe().map_err(|e| CliError::Usage(format!("cannot locate own executable: {e}")))?;
    Ok(vec![exe.display().to_string(), "mock-kernel".into()])
}

pub fn resolve_client(file: &ModelFile, args: &ModelArgs) -> Result<ClientConfig, CliError> {
    let d = ClientConfig::default();
    let config = ClientConfig {
        base_url: args.base_url.clone().or_else(|| file.base_url.clone()).unwrap_or(d.base_url),
        api_key_env: args
            .api_key_env
            .clone()
            .or_else(|| file.api_key_env.clone())
            .unwrap_or(d.api_key_env),
        model_id: args.model.clone().or_else(|| file.model_id.clone()).unwrap_or(d.model_id),
        temperature: args.temperature.or(file.temperature).unwrap_or(d.temperature),
        max_retries: args.max_retries.or(file.max_retries).unwrap_or(d.max_retries),
        request_timeout: args.request_timeout.or(file.request_timeout).unwrap_or(d.request_timeout),
        backoff_base: file.backoff_base.unwrap_or(d.backoff_base),
        max_tokens: args.max_tokens.or(file.max_tokens).or(d.max_tokens),
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

pub fn resolve_session(file: &SessionFile, args: &SessionArgs, client: &ClientConfig) -> Result<SessionConfig, CliError> {
    let d = SessionConfig::default();
    let config = SessionConfig {
        max_turns: args.max_turns.or(file.max_turns).unwrap_or(d.max_turns),
        exec_timeout: args.exec_timeout.or(file.exec_timeout).unwrap_or(d.exec_timeout),
        temperature: client.temperature,
        model_id: client.model_id.clone(),
        kernel_restart_policy: args.restart_policy.or(file.restart_policy).unwrap_or(d.kernel_restart_policy),
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

pub fn resolve_kernel(file: &KernelFile, args: &KernelArgs) -> Result<KernelSettings, CliError> {
    let d = SupervisorConfig::new(Vec::<String>::new());
    let command = if args.mock_kernel {
        mock_kernel_command()?
    } else if let Some(cmd) = &args.kernel_cmd {
        shlex::split(cmd).ok_or_else(|| CliError::Usage(format!("cannot split kernel command {cmd:?}")))?
    } else {
        file.command.clone().unwrap_or_else(default_kernel_command)
    };
    if command.is_empty() {
        return Err(CliError::Usage("kernel command is empty".into()));
    }
    Ok(KernelSettings {
        command,
        startup_timeout: positive(
            "startup_timeout",
            args.startup_timeout
                .or(file.startup_timeout)
                .unwrap_or(d.startup_timeout.as_secs_f64()),
        )?,
        init_timeout: positive("init_timeout", file.init_timeout.unwrap_or(d.init_timeout.as_secs_f64()))?,
        grace_period: positive("grace_period", file.grace_period.unwrap_or(d.grace_period.as_secs_f64()))?,
    })
}

/// Writes `effective_config.json` into `dir` and returns its path.
pub fn write_effective(dir: &Path, value: &impl Serialize) -> Result<PathBuf, CliError> {
    let path = dir.join("effective_config.json");
    let mut text = serde_json::to_string_pretty(value).expect("config serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
