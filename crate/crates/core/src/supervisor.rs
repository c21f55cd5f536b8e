//! Host side of the interpreter kernel.
//!
//! A [`Kernel`] owns exactly one child process at a time. Snippets are sent as
//! `exec` frames and answered by `result` frames with the same id. When the
//! child dies or overruns its time limit the supervisor kills it, synthesizes
//! the missing result, and (depending on the restart policy) starts a fresh
//! child with the session images re-injected.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use tracing::{debug, warn};

use crate::image::ImageBlob;
use crate::protocol::{Frame, FrameStatus, PROTOCOL_VERSION};
use crate::session::{ExecResult, ExecStatus, RestartPolicy};

const STDERR_TAIL_BYTES: usize = 4096;

/// Source of the reference CPython kernel. Run it with `python3 -u`.
pub const PYTHON_KERNEL_SOURCE: &str = include_str!("../assets/kernel/codeloop_kernel.py");

#[derive(Clone, Debug, PartialEq)]
pub struct SupervisorConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub startup_timeout: Duration,
    /// Limit for the kernel to acknowledge an `init` frame.
    pub init_timeout: Duration,
    pub grace_period: Duration,
    pub restart_policy: RestartPolicy,
    /// Working directory for the child, typically an empty scratch directory.
    pub working_dir: Option<PathBuf>,
    pub env: Vec<(String, String)>,
}

impl SupervisorConfig {
    pub fn new<I, S>(command: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            command: command.into_iter().map(Into::into).collect(),
            startup_timeout: Duration::from_secs(10),
            init_timeout: Duration::from_secs(30),
            grace_period: Duration::from_secs(2),
            restart_policy: RestartPolicy::RestartAndReport,
            working_dir: None,
            env: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("failed to spawn kernel: {0}")]
    Spawn(String),
    #[error("kernel did not send its ready frame within {0:?}")]
    HandshakeTimeout(Duration),
    #[error("kernel protocol error: {0}")]
    Protocol(String),
    #[error("kernel crashed: {0}")]
    KernelCrashed(String),
    #[error("kernel rejected init: {0}")]
    InitRejected(String),
    #[error("kernel is not running")]
    NotRunning,
}

/// One entry in the frame exchange log kept for auditing id pairing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExchangeEvent {
    Sent { kind: &'static str, id: u64 },
    Received { id: u64, status: ExecStatus },
    Synthesized { id: u64, status: ExecStatus },
}

/// Checks that every exec sent has exactly one result, received or
/// synthesized, and that no result answers an unknown id.
pub fn check_pairing(log: &[ExchangeEvent]) -> Result<(), String> {
    let mut answers: std::collections::BTreeMap<u64, usize> = std::collections::BTreeMap::new();
    for ev in log {
        if let ExchangeEvent::Sent { kind: "exec", id } = ev {
            if answers.insert(*id, 0).is_some() {
                return Err(format!("exec id {id} sent twice"));
            }
        }
    }
    for ev in log {
        if let ExchangeEvent::Received { id, .. } | ExchangeEvent::Synthesized { id, .. } = ev {
            match answers.get_mut(id) {
                Some(n) => *n += 1,
                None => return Err(format!("result for unknown exec id {id}")),
            }
        }
    }
    match answers.iter().find(|(_, n)| **n != 1) {
        Some((id, n)) => Err(format!("exec id {id} has {n} results")),
        None => Ok(()),
    }
}

struct LiveChild {
    process: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    stderr_tail: Arc<Mutex<VecDeque<u8>>>,
}

impl LiveChild {
    fn stderr_tail(&self) -> String {
        let tail = self.stderr_tail.lock().expect("stderr tail lock");
        String::from_utf8_lossy(&tail.iter().copied().collect::<Vec<_>>()).into_owned()
    }

    fn kill(&mut self) -> Option<ExitStatus> {
        let _ = self.process.kill();
        self.process.wait().ok()
    }
}

/// Handle to a supervised kernel process.
pub struct Kernel {
    config: SupervisorConfig,
    child: Option<LiveChild>,
    generation: u32,
    images: Vec<ImageBlob>,
    images_injected: usize,
    next_id: u64,
    implementation: Option<String>,
    log: Vec<ExchangeEvent>,
    closed: bool,
}

impl Kernel {
    /// Starts the kernel and waits for its ready frame.
    pub fn spawn(config: SupervisorConfig) -> Result<Self, SandboxError> {
        let (child, implementation) = start_child(&config)?;
        Ok(Self {
            config,
            child: Some(child),
            generation: 0,
            images: Vec::new(),
            images_injected: 0,
            next_id: 1,
            implementation,
            log: Vec::new(),
            closed: false,
        })
    }

    pub fn pid(&self) -> Option<u32> {
        self.child.as_ref().map(|c| c.process.id())
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn images_injected(&self) -> usize {
        self.images_injected
    }

    /// Name the kernel reported in its ready frame, if any.
    pub fn implementation(&self) -> Option<&str> {
        self.implementation.as_deref()
    }

    pub fn is_alive(&mut self) -> bool {
        match &mut self.child {
            Some(c) => matches!(c.process.try_wait(), Ok(None)),
            None => false,
        }
    }

    pub fn exchange_log(&self) -> &[ExchangeEvent] {
        &self.log
    }

    /// Binds `images` to `image_clue_0..` in the kernel namespace. The images
    /// are remembered and re-injected after every restart.
    pub fn init_images(&mut self, images: &[ImageBlob]) -> Result<(), SandboxError> {
        if self.closed {
            return Err(SandboxError::NotRunning);
        }
        self.images = images.to_vec();
        self.inject()
    }

    fn inject(&mut self) -> Result<(), SandboxError> {
        let id = self.take_id();
        let frame = Frame::Init {
            id,
            images: self.images.iter().map(ImageBlob::to_base64).collect(),
        };
        self.send(&frame)?;
        let child = self.child.as_mut().ok_or(SandboxError::NotRunning)?;
        match child.lines.recv_timeout(self.config.init_timeout) {
            Ok(line) => match Frame::decode(&line) {
                Ok(Frame::Result {
                    id: rid,
                    status,
                    error,
                    ..
                }) if rid == id => {
                    if status == FrameStatus::Ok {
                        self.images_injected = self.images.len();
                        Ok(())
                    } else {
                        Err(SandboxError::InitRejected(error))
                    }
                }
                Ok(other) => Err(self.protocol_failure(format!(
                    "expected result for init {id}, got {} {}",
                    other.kind(),
                    other.id()
                ))),
                Err(e) => Err(self.protocol_failure(format!("undecodable frame: {e}"))),
            },
            Err(RecvTimeoutError::Timeout) => Err(self.protocol_failure(format!(
                "no reply to init within {:?}",
                self.config.init_timeout
            ))),
            Err(RecvTimeoutError::Disconnected) => {
                let mut dead = self.child.take().expect("child present");
                let status = dead.kill();
                Err(SandboxError::KernelCrashed(describe_exit(status, &dead.stderr_tail())))
            }
        }
    }

    /// Runs one snippet. Crashes and timeouts come back as results with
    /// status `KernelCrashed` / `Timeout`; only protocol violations and
    /// failure to (re)start the kernel are errors.
    pub fn exec(&mut self, code: &str, timeout: Duration) -> Result<ExecResult, SandboxError> {
        if self.closed {
            return Err(SandboxError::NotRunning);
        }
        if self.child.is_none() {
            if self.config.restart_policy == RestartPolicy::FailSession {
                return Err(SandboxError::NotRunning);
            }
            self.restart()?;
        }
        let child = self.child.as_mut().expect("child present");
        while let Ok(stale) = child.lines.try_recv() {
            warn!(line = %stale, "discarding unsolicited kernel output");
        }

        let id = self.take_id();
        let started = Instant::now();
        let deadline = started + timeout;
        if self
            .send(&Frame::Exec {
                id,
                code: code.to_string(),
            })
            .is_err()
        {
            return Ok(self.crashed(id, started));
        }

        loop {
            let child = self.child.as_mut().expect("child present");
            let remaining = deadline.saturating_duration_since(Instant::now());
            match child.lines.recv_timeout(remaining) {
                Ok(line) => {
                    let frame = match Frame::decode(&line) {
                        Ok(frame) => frame,
                        Err(e) => {
                            return Err(self.protocol_failure(format!(
                                "undecodable frame for exec {id}: {e}"
                            )))
                        }
                    };
                    let Frame::Result {
                        id: rid,
                        status,
                        stdout,
                        error,
                        images,
                        ..
                    } = frame
                    else {
                        return Err(self.protocol_failure(format!(
                            "expected result for exec {id}, got {}",
                            frame.kind()
                        )));
                    };
                    if rid != id {
                        return Err(self.protocol_failure(format!(
                            "result id {rid} does not match exec id {id}"
                        )));
                    }
                    let images = match images
                        .iter()
                        .map(|b64| ImageBlob::from_base64(b64))
                        .collect::<Result<Vec<_>, _>>()
                    {
                        Ok(images) => images,
                        Err(e) => {
                            return Err(self.protocol_failure(format!("bad figure in result {id}: {e}")))
                        }
                    };
                    let status = match status {
                        FrameStatus::Ok => ExecStatus::Ok,
                        FrameStatus::Error => ExecStatus::Error,
                        FrameStatus::Timeout => ExecStatus::Timeout,
                    };
                    let (error, stderr) = if status == ExecStatus::Ok {
                        (String::new(), error)
                    } else {
                        (error, String::new())
                    };
                    let mut wall_time = started.elapsed().as_secs_f64();
                    if status == ExecStatus::Timeout {
                        wall_time = wall_time.max(timeout.as_secs_f64());
                    }
                    self.log.push(ExchangeEvent::Received { id, status });
                    return Ok(ExecResult {
                        status,
                        stdout,
                        error,
                        stderr,
                        images,
                        wall_time,
                    });
                }
                Err(RecvTimeoutError::Timeout) => {
                    if Instant::now() < deadline {
                        continue;
                    }
                    let wall_time = started.elapsed().as_secs_f64().max(timeout.as_secs_f64());
                    if let Some(mut dead) = self.child.take() {
                        dead.kill();
                    }
                    debug!(id, ?timeout, "exec timed out, kernel killed");
                    self.log.push(ExchangeEvent::Synthesized {
                        id,
                        status: ExecStatus::Timeout,
                    });
                    let cause = format!(
                        "TimeoutError: execution exceeded the {:.3}s time limit and the interpreter process was terminated.",
                        timeout.as_secs_f64()
                    );
                    let mut result = ExecResult::failed(ExecStatus::Timeout, self.recover(cause));
                    result.wall_time = wall_time;
                    return Ok(result);
                }
                Err(RecvTimeoutError::Disconnected) => return Ok(self.crashed(id, started)),
            }
        }
    }

    fn crashed(&mut self, id: u64, started: Instant) -> ExecResult {
        let cause = match self.child.take() {
            Some(mut dead) => {
                let status = dead.kill();
                describe_exit(status, &dead.stderr_tail())
            }
            None => "the interpreter process is gone".to_string(),
        };
        self.log.push(ExchangeEvent::Synthesized {
            id,
            status: ExecStatus::KernelCrashed,
        });
        let mut result = ExecResult::failed(
            ExecStatus::KernelCrashed,
            self.recover(format!("KernelCrashed: {cause}")),
        );
        result.wall_time = started.elapsed().as_secs_f64();
        result
    }

    /// Applies the restart policy after the child was lost and returns the
    /// explanation to report back to the model.
    fn recover(&mut self, cause: String) -> String {
        match self.config.restart_policy {
            RestartPolicy::FailSession => {
                format!("{cause}\nThe interpreter was not restarted.")
            }
            RestartPolicy::RestartAndReport => match self.restart() {
                Ok(()) => format!(
                    "{cause}\nThe interpreter has been restarted. All variables, imports and other state from earlier snippets were lost{}.",
                    match self.images.len() {
                        0 => String::new(),
                        n => format!("; the input images were re-loaded as image_clue_0..image_clue_{}", n - 1),
                    }
                ),
                Err(e) => format!("{cause}\nRestarting the interpreter failed: {e}"),
            },
        }
    }

    fn restart(&mut self) -> Result<(), SandboxError> {
        if let Some(mut old) = self.child.take() {
            old.kill();
        }
        let (child, implementation) = start_child(&self.config)?;
        self.child = Some(child);
        self.implementation = implementation;
        self.generation += 1;
        self.images_injected = 0;
        debug!(generation = self.generation, "kernel restarted");
        self.inject()
    }

    /// Sends `shutdown`, waits out the grace period, then kills. Idempotent.
    pub fn shutdown(&mut self) {
        self.closed = true;
        let Some(mut child) = self.child.take() else {
            return;
        };
        let id = self.take_id();
        if let Some(stdin) = child.stdin.as_mut() {
            if stdin.write_all(Frame::Shutdown { id }.encode().as_bytes()).is_ok() {
                let _ = stdin.flush();
                self.log.push(ExchangeEvent::Sent {
                    kind: "shutdown",
                    id,
                });
            }
        }
        drop(child.stdin.take());
        let deadline = Instant::now() + self.config.grace_period;
        loop {
            match child.process.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                _ => {
                    child.kill();
                    return;
                }
            }
        }
    }

    fn take_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn send(&mut self, frame: &Frame) -> Result<(), SandboxError> {
        let child = self.child.as_mut().ok_or(SandboxError::NotRunning)?;
        let stdin = child.stdin.as_mut().ok_or(SandboxError::NotRunning)?;
        stdin
            .write_all(frame.encode().as_bytes())
            .and_then(|()| stdin.flush())
            .map_err(|e| SandboxError::KernelCrashed(format!("write to kernel failed: {e}")))?;
        self.log.push(ExchangeEvent::Sent {
            kind: frame.kind(),
            id: frame.id(),
        });
        Ok(())
    }

    /// Kills the child after a protocol violation; its state can't be trusted.
    fn protocol_failure(&mut self, msg: String) -> SandboxError {
        if let Some(mut child) = self.child.take() {
            child.kill();
        }
        SandboxError::Protocol(msg)
    }
}

impl Drop for Kernel {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Kernel")
            .field("pid", &self.pid())
            .field("generation", &self.generation)
            .field("images_injected", &self.images_injected)
            .finish()
    }
}

fn describe_exit(status: Option<ExitStatus>, stderr_tail: &str) -> String {
    let mut msg = match status {
        Some(s) => format!("the interpreter process exited unexpectedly ({s})"),
        None => "the interpreter process exited unexpectedly".to_string(),
    };
    let tail = stderr_tail.trim();
    if !tail.is_empty() {
        msg.push_str(&format!("; stderr: {tail}"));
    }
    msg
}

fn start_child(config: &SupervisorConfig) -> Result<(LiveChild, Option<String>), SandboxError> {
    let (program, args) = config
        .command
        .split_first()
        .ok_or_else(|| SandboxError::Spawn("empty kernel command".into()))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .envs(config.env.iter().map(|(k, v)| (k, v)));
    if let Some(dir) = &config.working_dir {
        cmd.current_dir(dir);
    }
    let mut process = cmd
        .spawn()
        .map_err(|e| SandboxError::Spawn(format!("{program}: {e}")))?;

    let stdout = process.stdout.take().expect("piped stdout");
    let (tx, lines) = mpsc::channel();
    thread::Builder::new()
        .name("kernel-stdout".into())
        .spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(line) if line.trim().is_empty() => continue,
                    Ok(line) => {
                        if tx.send(line).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        })
        .map_err(|e| SandboxError::Spawn(e.to_string()))?;

    let stderr_tail = Arc::new(Mutex::new(VecDeque::with_capacity(STDERR_TAIL_BYTES)));
    let mut stderr = process.stderr.take().expect("piped stderr");
    let sink = Arc::clone(&stderr_tail);
    thread::Builder::new()
        .name("kernel-stderr".into())
        .spawn(move || {
            let mut buf = [0u8; 1024];
            while let Ok(n) = stderr.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut tail = sink.lock().expect("stderr tail lock");
                tail.extend(&buf[..n]);
                while tail.len() > STDERR_TAIL_BYTES {
                    tail.pop_front();
                }
            }
        })
        .map_err(|e| SandboxError::Spawn(e.to_string()))?;

    let mut child = LiveChild {
        stdin: process.stdin.take(),
        process,
        lines,
        stderr_tail,
    };

    match child.lines.recv_timeout(config.startup_timeout) {
        Ok(line) => match Frame::decode(&line) {
            Ok(Frame::Ready {
                protocol_version,
                implementation,
                ..
            }) => {
                if protocol_version != PROTOCOL_VERSION {
                    child.kill();
                    return Err(SandboxError::Spawn(format!(
                        "kernel speaks protocol version {protocol_version}, expected {PROTOCOL_VERSION}"
                    )));
                }
                Ok((child, implementation))
            }
            Ok(other) => {
                child.kill();
                Err(SandboxError::Spawn(format!(
                    "expected ready frame, got {}",
                    other.kind()
                )))
            }
            Err(e) => {
                child.kill();
                Err(SandboxError::Spawn(format!("undecodable ready frame: {e}")))
            }
        },
        Err(RecvTimeoutError::Timeout) => {
            child.kill();
            Err(SandboxError::HandshakeTimeout(config.startup_timeout))
        }
        Err(RecvTimeoutError::Disconnected) => {
            let status = child.kill();
            Err(SandboxError::Spawn(format!(
                "kernel exited before handshake: {}",
                describe_exit(status, &child.stderr_tail())
            )))
        }
    }
}
