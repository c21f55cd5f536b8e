//! `kernel-check`: conformance checks for a kernel against PROTOCOL.md.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::thread;
use std::time::{Duration, Instant};

use clap::Args;
use codeloop_core::image::solid_png;
use codeloop_core::protocol::{Frame, FrameStatus, PROTOCOL_VERSION};
use codeloop_core::session::RestartPolicy;
use codeloop_core::supervisor::check_pairing;
use codeloop_core::{ExecResult, ExecStatus, Kernel, SupervisorConfig};

use crate::config::{self, FileConfig, KernelArgs};
use crate::{CliError, EXIT_FAULT, EXIT_OK};

#[derive(Debug, Args)]
pub struct KernelCheckArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Kernel settings are read from here.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scratch directory for the kernel; a temporary one is used and removed otherwise.
    #[arg(long)]
    pub scratch_dir: Option<PathBuf>,
    /// Wall-clock limit in seconds used by the timeout check.
    #[arg(long, default_value_t = 1.0)]
    pub timeout: f64,
}

type Outcome = Result<String, String>;

struct Report {
    passed: usize,
    failed: usize,
}

impl Report {
    fn record(&mut self, name: &str, started: Instant, outcome: Outcome) {
        let ms = started.elapsed().as_millis();
        match outcome {
            Ok(detail) => {
                self.passed += 1;
                println!("PASS  {name:<18} {detail} ({ms} ms)");
            }
            Err(detail) => {
                self.failed += 1;
                println!("FAIL  {name:<18} {detail} ({ms} ms)");
            }
        }
    }
}

fn expect_stdout(r: &ExecResult, want: &str) -> Result<(), String> {
    if r.status != ExecStatus::Ok {
        return Err(format!("status {}: {}", r.status.as_str(), first_line(&r.error)));
    }
    if r.stdout != want {
        return Err(format!("stdout {:?}, expected {want:?}", r.stdout));
    }
    Ok(())
}

fn first_line(s: &str) -> &str {
    s.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("")
}

fn run(k: &mut Kernel, code: &str, timeout: Duration) -> Result<ExecResult, String> {
    k.exec(code, timeout).map_err(|e| e.to_string())
}

const EXEC_LIMIT: Duration = Duration::from_secs(30);

fn supervised_checks(config: SupervisorConfig, timeout: Duration, report: &mut Report) {
    let t = Instant::now();
    let mut k = match Kernel::spawn(config.clone()) {
        Ok(k) => k,
        Err(e) => {
            report.record("handshake", t, Err(e.to_string()));
            return;
        }
    };
    let name = k.implementation().unwrap_or("unnamed").to_string();
    report.record("handshake", t, Ok(format!("{name} kernel, protocol {PROTOCOL_VERSION}")));

    let t = Instant::now();
    let outcome = k
        .init_images(&[solid_png(8, 6, [200, 40, 40]), solid_png(3, 5, [40, 40, 200])])
        .map_err(|e| e.to_string())
        .and_then(|()| run(&mut k, "print(image_clue_0.size)\nprint(image_clue_1.size)\n", EXEC_LIMIT))
        .and_then(|r| expect_stdout(&r, "(8, 6)\n(3, 5)\n"))
        .map(|()| "image_clue_0 and image_clue_1 bound with the right sizes".into());
    report.record("image injection", t, outcome);

    let t = Instant::now();
    let outcome = run(&mut k, "x = 41\n", EXEC_LIMIT)
        .and_then(|_| run(&mut k, "print(x + 1)\n", EXEC_LIMIT))
        .and_then(|r| expect_stdout(&r, "42\n"))
        .map(|()| "state survives across exec frames".into());
    report.record("persistence", t, outcome);

    let t = Instant::now();
    let generation = k.generation();
    let outcome = run(&mut k, "1 / 0\n", EXEC_LIMIT).and_then(|r| {
        if r.status != ExecStatus::Error || !r.error.contains("ZeroDivisionError") {
            return Err(format!("expected an error naming ZeroDivisionError, got {}", r.status.as_str()));
        }
        expect_stdout(&run(&mut k, "print('alive')\n", EXEC_LIMIT)?, "alive\n")?;
        if k.generation() != generation {
            return Err("the kernel process was replaced".into());
        }
        Ok("exception reported, process kept running".into())
    });
    report.record("containment", t, outcome);

    let t = Instant::now();
    let outcome = run(&mut k, "import sys\nsys.stderr.write('careful\\n')\n", EXEC_LIMIT).and_then(|r| {
        if r.status == ExecStatus::Ok && r.stderr.contains("careful") {
            Ok("stderr returned alongside an ok status".into())
        } else {
            Err(format!("status {}, stderr {:?}", r.status.as_str(), r.stderr))
        }
    });
    report.record("stderr", t, outcome);

    let t = Instant::now();
    let outcome = run(
        &mut k,
        "import matplotlib.pyplot as plt\nplt.plot([0, 1], [1, 0])\nplt.show()\n",
        EXEC_LIMIT,
    )
    .and_then(|r| {
        if r.status != ExecStatus::Ok {
            return Err(format!("status {}: {}", r.status.as_str(), first_line(&r.error)));
        }
        if r.images.len() != 1 {
            return Err(format!("{} images for one shown figure", r.images.len()));
        }
        let (w, h) = (r.images[0].width(), r.images[0].height());
        let next = run(&mut k, "print('next')\n", EXEC_LIMIT)?;
        if !next.images.is_empty() {
            return Err("figure leaked into the following exec".into());
        }
        Ok(format!("one {w}x{h} PNG, none carried over"))
    });
    report.record("figure capture", t, outcome);

    let t = Instant::now();
    let generation = k.generation();
    let outcome = run(&mut k, "import os\nos._exit(7)\n", EXEC_LIMIT).and_then(|r| {
        if r.status != ExecStatus::KernelCrashed {
            return Err(format!("status {}, expected kernel_crashed", r.status.as_str()));
        }
        if k.generation() != generation + 1 {
            return Err("kernel was not restarted".into());
        }
        expect_stdout(&run(&mut k, "print(image_clue_0.size)\n", EXEC_LIMIT)?, "(8, 6)\n")
            .map_err(|e| format!("images not re-injected: {e}"))?;
        let gone = run(&mut k, "print(x)\n", EXEC_LIMIT)?;
        if gone.status != ExecStatus::Error {
            return Err("variables survived the restart".into());
        }
        Ok("restarted, images re-injected, state cleared".into())
    });
    report.record("crash recovery", t, outcome);

    let t = Instant::now();
    let outcome = run(&mut k, "import time\ntime.sleep(60)\n", timeout).and_then(|r| {
        if r.status != ExecStatus::Timeout {
            return Err(format!("status {}, expected timeout", r.status.as_str()));
        }
        expect_stdout(&run(&mut k, "print('back')\n", EXEC_LIMIT)?, "back\n")?;
        Ok(format!("killed after {:.2}s and restarted", r.wall_time))
    });
    report.record("timeout", t, outcome);

    let t = Instant::now();
    let log = k.exchange_log().to_vec();
    let outcome = check_pairing(&log).map(|()| format!("{} frames, every exec answered once", log.len()));
    report.record("id pairing", t, outcome);
    k.shutdown();
}

/// A kernel process driven frame by frame, without the supervisor.
struct RawKernel {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
}

impl RawKernel {
    fn spawn(config: &SupervisorConfig) -> Result<Self, String> {
        let (program, args) = config.command.split_first().ok_or("empty kernel command")?;
        let mut cmd = Command::new(program);
        cmd.args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::null());
        if let Some(dir) = &config.working_dir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|e| format!("{program}: {e}"))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines().map_while(Result::ok) {
                if !line.trim().is_empty() && tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut raw = Self {
            stdin: child.stdin.take(),
            child,
            lines,
        };
        match raw.read(config.startup_timeout)? {
            Frame::Ready { .. } => Ok(raw),
            other => Err(format!("first frame was {}", other.kind())),
        }
    }

    fn send(&mut self, line: &str) -> Result<(), String> {
        let stdin = self.stdin.as_mut().ok_or("stdin closed")?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|()| stdin.flush())
            .map_err(|e| e.to_string())
    }

    fn read(&mut self, wait: Duration) -> Result<Frame, String> {
        let line = self.lines.recv_timeout(wait).map_err(|_| format!("no frame within {wait:?}"))?;
        Frame::decode(&line).map_err(|e| format!("undecodable frame {line:?}: {e}"))
    }

    fn wait_exit(&mut self, grace: Duration) -> Result<i32, String> {
        let deadline = Instant::now() + grace;
        loop {
            match self.child.try_wait().map_err(|e| e.to_string())? {
                Some(status) => return Ok(status.code().unwrap_or(-1)),
                None if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                None => return Err(format!("still running after {grace:?}")),
            }
        }
    }
}

impl Drop for RawKernel {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn raw_checks(config: &SupervisorConfig, report: &mut Report) {
    let reply_wait = Duration::from_secs(30);
    let t = Instant::now();
    let outcome = RawKernel::spawn(config).and_then(|mut raw| {
        raw.send("{this is not a frame\n")?;
        match raw.read(reply_wait)? {
            Frame::Result {
                status: FrameStatus::Error,
                error,
                ..
            } if error.starts_with("ProtocolError") => {}
            other => return Err(format!("expected a ProtocolError result, got {other:?}")),
        }
        raw.send(
            &Frame::Exec {
                id: 1,
                code: "print('ok')\n".into(),
            }
            .encode(),
        )?;
        match raw.read(reply_wait)? {
            Frame::Result {
                id: 1,
                status: FrameStatus::Ok,
                stdout,
                ..
            } if stdout == "ok\n" => {}
            other => return Err(format!("kernel did not recover: {other:?}")),
        }
        raw.send(&Frame::Shutdown { id: 2 }.encode())?;
        match raw.wait_exit(config.grace_period)? {
            0 => Ok("error result, then normal service; shutdown exits 0".into()),
            code => Err(format!("shutdown exited with status {code}")),
        }
    });
    report.record("garbage frame", t, outcome);

    let t = Instant::now();
    let outcome = RawKernel::spawn(config).and_then(|mut raw| {
        drop(raw.stdin.take());
        raw.wait_exit(config.grace_period)
            .map(|code| format!("exited with status {code} when stdin closed"))
    });
    report.record("stdin eof", t, outcome);
}

struct Scratch {
    path: PathBuf,
    remove: bool,
}

impl Drop for Scratch {
    fn drop(&mut self) {
        if self.remove {
            let _ = std::fs::remove_dir_all(&self.path);
        }
    }
}

fn scratch(dir: Option<&Path>) -> Scratch {
    match dir {
        Some(p) => Scratch {
            path: p.to_path_buf(),
            remove: false,
        },
        None => Scratch {
            path: std::env::temp_dir().join(format!("codeloop-kernel-check-{}", std::process::id())),
            remove: true,
        },
    }
}

pub fn kernel_check(args: KernelCheckArgs) -> Result<u8, CliError> {
    if !(args.timeout > 0.0 && args.timeout.is_finite()) {
        return Err(CliError::Usage("--timeout must be a positive number of seconds".into()));
    }
    let file = FileConfig::load(args.config.as_deref())?;
    let settings = config::resolve_kernel(&file.kernel, &args.kernel)?;
    let scratch = scratch(args.scratch_dir.as_deref());
    let supervisor = settings.supervisor(RestartPolicy::RestartAndReport, &scratch.path)?;
    println!("kernel: {}", shlex::try_join(supervisor.command.iter().map(String::as_str)).unwrap_or_default());

    let mut report = Report { passed: 0, failed: 0 };
    supervised_checks(supervisor.clone(), Duration::from_secs_f64(args.timeout), &mut report);
    raw_checks(&supervisor, &mut report);
    println!("{}/{} checks passed", report.passed, report.passed + report.failed);
    Ok(if report.failed == 0 { EXIT_OK } else { EXIT_FAULT })
}
