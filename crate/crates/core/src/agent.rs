//! The multi-turn session loop.
//!
//! Each model call is one turn. A turn that carries `<code>` blocks runs them
//! in order in the session kernel and appends the interpreter output (text
//! plus figures) as a new user message. A turn with an `<answer>` ends the
//! session. The kernel is only started once the model first asks for code.

use tracing::{debug, info, warn};

use crate::client::ChatModel;
use crate::image::ImageBlob;
use crate::prompt::PromptSet;
use crate::session::{
    ContentPart, ExecResult, ExecStatus, Message, RestartPolicy, Role, SessionConfig, SessionMode,
    SessionTrace, Termination, Turn,
};
use crate::supervisor::{Kernel, SupervisorConfig};
use crate::tags::{self, ModelAction};

/// Sent once per session when the model answers with neither tag.
pub const NUDGE_TEXT: &str = "Your last response contained neither a <code> block nor an <answer> block. \
Continue solving the problem: wrap any Python you want to run in <code> tags, or give the final answer as \
<answer>\\boxed{...}</answer>.";

const SPAWN_ATTEMPTS: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct SessionResult {
    pub trace: SessionTrace,
    pub answer: Option<String>,
    /// Number of model calls that returned.
    pub n_turns: usize,
    pub n_code_blocks: usize,
    pub faults: Vec<String>,
    /// The full model context at the end of the session.
    pub context: Vec<Message>,
}

impl SessionResult {
    fn finish(trace: SessionTrace, context: Vec<Message>) -> Self {
        Self {
            answer: trace.final_answer.clone(),
            n_turns: trace.turns.len(),
            n_code_blocks: trace.total_code_blocks(),
            faults: trace.faults.clone(),
            trace,
            context,
        }
    }
}

/// Everything a session needs apart from the model and the inputs.
#[derive(Clone, Debug)]
pub struct Agent {
    pub config: SessionConfig,
    pub prompts: PromptSet,
    pub kernel: SupervisorConfig,
}

impl Agent {
    pub fn new(config: SessionConfig, kernel: SupervisorConfig) -> Self {
        Self {
            config,
            prompts: PromptSet::default(),
            kernel,
        }
    }

    /// Runs the code-executing loop until an answer, the turn limit, or a fault.
    pub fn run_session(
        &self,
        id: &str,
        query: &str,
        images: &[ImageBlob],
        client: &dyn ChatModel,
    ) -> SessionResult {
        let mut trace = SessionTrace::new(id, query, images.to_vec());
        trace.config = Some(self.config.clone());
        if let Err(e) = self.config.validate() {
            trace.faults.push(e.to_string());
            return SessionResult::finish(trace, Vec::new());
        }
        let dims: Vec<(u32, u32)> = images.iter().map(|i| (i.width(), i.height())).collect();
        let system = match self.prompts.render_agent_multi(&dims, query) {
            Ok(text) => text,
            Err(e) => {
                trace.faults.push(e.to_string());
                return SessionResult::finish(trace, Vec::new());
            }
        };
        let mut context = opening_messages(system, query, images);
        let mut kernel: Option<Kernel> = None;
        let mut nudged = false;
        let mut finished = false;

        for index in 0..self.config.max_turns as usize {
            let response = match client.complete(&context) {
                Ok(r) => r,
                Err(e) => {
                    warn!(session = id, error = %e, "model call failed");
                    trace.faults.push(format!("model call failed: {e}"));
                    trace.termination = Termination::Fault;
                    finished = true;
                    break;
                }
            };
            let text = response.text;
            context.push(Message::text(Role::Assistant, text.clone()));
            let mut turn = Turn {
                index,
                model_text: text.clone(),
                code_blocks: Vec::new(),
                exec_results: Vec::new(),
                clue_message: None,
                warnings: tags::parse_code_blocks(&text).warnings,
            };

            match tags::classify(&text) {
                ModelAction::FinalAnswer(answer) => {
                    trace.turns.push(turn);
                    trace.final_answer = Some(answer);
                    trace.termination = Termination::Answered;
                    finished = true;
                    break;
                }
                ModelAction::RunCode(blocks) => {
                    let fault = self.execute_blocks(&mut kernel, images, &blocks, &mut turn);
                    let clue = clue_message(&turn.exec_results);
                    context.push(clue.clone());
                    turn.code_blocks = blocks;
                    turn.clue_message = Some(clue);
                    trace.turns.push(turn);
                    if let Some(fault) = fault {
                        trace.faults.push(fault);
                        trace.termination = Termination::Fault;
                        finished = true;
                        break;
                    }
                }
                ModelAction::Neither => {
                    if nudged {
                        turn.warnings.push("response had no <code> or <answer> tag".into());
                    } else {
                        nudged = true;
                        turn.warnings
                            .push("response had no <code> or <answer> tag; nudge sent".into());
                        context.push(Message::text(Role::User, NUDGE_TEXT));
                    }
                    trace.turns.push(turn);
                }
            }
        }
        if !finished {
            trace.termination = Termination::MaxTurnsExceeded;
        }
        if let Some(mut k) = kernel {
            k.shutdown();
        }
        info!(
            session = id,
            turns = trace.turns.len(),
            code_blocks = trace.total_code_blocks(),
            termination = ?trace.termination,
            "session finished"
        );
        SessionResult::finish(trace, context)
    }

    /// Runs every block of one turn, filling `turn.exec_results`. Returns a
    /// fault description when the session cannot continue.
    fn execute_blocks(
        &self,
        kernel: &mut Option<Kernel>,
        images: &[ImageBlob],
        blocks: &[String],
        turn: &mut Turn,
    ) -> Option<String> {
        let mut fault = None;
        for block in blocks {
            if let Some(reason) = &fault {
                turn.exec_results.push(ExecResult::failed(
                    ExecStatus::Error,
                    format!("not executed: {reason}"),
                ));
                continue;
            }
            if kernel.is_none() {
                match self.start_kernel(images) {
                    Ok(k) => *kernel = Some(k),
                    Err(e) => {
                        turn.exec_results
                            .push(ExecResult::failed(ExecStatus::KernelCrashed, e.clone()));
                        fault = Some(e);
                        continue;
                    }
                }
            }
            let k = kernel.as_mut().expect("kernel started");
            match k.exec(block, self.config.exec_timeout()) {
                Ok(result) => {
                    let lost = matches!(result.status, ExecStatus::Timeout | ExecStatus::KernelCrashed);
                    if lost && self.config.kernel_restart_policy == RestartPolicy::FailSession {
                        fault = Some(format!(
                            "kernel lost its state ({}) and the restart policy is fail_session",
                            result.status.as_str()
                        ));
                    }
                    turn.exec_results.push(result);
                }
                Err(e) => {
                    let msg = format!("kernel failure: {e}");
                    turn.exec_results
                        .push(ExecResult::failed(ExecStatus::KernelCrashed, msg.clone()));
                    *kernel = None;
                    fault = Some(msg);
                }
            }
        }
        fault
    }

    fn start_kernel(&self, images: &[ImageBlob]) -> Result<Kernel, String> {
        let mut config = self.kernel.clone();
        config.restart_policy = self.config.kernel_restart_policy;
        let mut last = String::new();
        for attempt in 1..=SPAWN_ATTEMPTS {
            let started = Kernel::spawn(config.clone()).and_then(|mut k| {
                k.init_images(images)?;
                Ok(k)
            });
            match started {
                Ok(k) => {
                    debug!(pid = ?k.pid(), "kernel started");
                    return Ok(k);
                }
                Err(e) => {
                    warn!(attempt, error = %e, "kernel start failed");
                    last = e.to_string();
                }
            }
        }
        Err(format!("kernel could not be started after {SPAWN_ATTEMPTS} attempts: {last}"))
    }

    /// Single-call chain-of-thought baseline.
    pub fn run_cot(
        &self,
        id: &str,
        query: &str,
        images: &[ImageBlob],
        client: &dyn ChatModel,
    ) -> SessionResult {
        let mut trace = SessionTrace::new(id, query, images.to_vec());
        trace.mode = SessionMode::Cot;
        trace.config = Some(self.config.clone());
        let system = match self.prompts.render_cot(query) {
            Ok(text) => text,
            Err(e) => {
                trace.faults.push(e.to_string());
                return SessionResult::finish(trace, Vec::new());
            }
        };
        let mut context = opening_messages(system, query, images);
        match client.complete(&context) {
            Ok(response) => {
                context.push(Message::text(Role::Assistant, response.text.clone()));
                trace.final_answer = tags::extract_boxed(&response.text).filter(|a| !a.trim().is_empty());
                trace.termination = if trace.final_answer.is_some() {
                    Termination::Answered
                } else {
                    Termination::Unanswered
                };
                trace.turns.push(Turn {
                    index: 0,
                    model_text: response.text,
                    code_blocks: Vec::new(),
                    exec_results: Vec::new(),
                    clue_message: None,
                    warnings: Vec::new(),
                });
            }
            Err(e) => {
                trace.faults.push(format!("model call failed: {e}"));
                trace.termination = Termination::Fault;
            }
        }
        SessionResult::finish(trace, context)
    }
}

/// System prompt followed by the user's images. A text-only query gets the
/// query as its user message instead.
fn opening_messages(system: String, query: &str, images: &[ImageBlob]) -> Vec<Message> {
    let user = if images.is_empty() {
        Message::text(Role::User, query)
    } else {
        Message::new(Role::User, images.iter().cloned().map(ContentPart::image).collect())
    };
    vec![Message::text(Role::System, system), user]
}

/// The multimodal clue for one turn: each result's interpreter text followed
/// by the figures it produced, in execution order.
pub fn clue_message(results: &[ExecResult]) -> Message {
    let mut parts = Vec::new();
    for result in results {
        parts.push(ContentPart::text(tags::wrap_interpreter(result)));
        parts.extend(result.images.iter().cloned().map(ContentPart::image));
    }
    Message::new(Role::User, parts)
}

/// Runs one agent session with the bundled prompts.
pub fn run_session(
    query: &str,
    images: &[ImageBlob],
    config: &SessionConfig,
    client: &dyn ChatModel,
    kernel: &SupervisorConfig,
) -> SessionResult {
    Agent::new(config.clone(), kernel.clone()).run_session("session", query, images, client)
}

/// Runs the chain-of-thought baseline with the bundled prompts.
pub fn run_cot(
    query: &str,
    images: &[ImageBlob],
    config: &SessionConfig,
    client: &dyn ChatModel,
) -> SessionResult {
    Agent::new(config.clone(), SupervisorConfig::new(Vec::<String>::new()))
        .run_cot("session", query, images, client)
}
