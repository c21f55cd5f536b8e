//! Seeded generators for randomized suites.

use rand::seq::IndexedRandom;
use rand::Rng;

use codeloop_core::image::solid_png;
use codeloop_core::session::{
    ContentPart, ExecResult, ExecStatus, Message, RestartPolicy, Role, SessionConfig, SessionMode, SessionTrace,
    Termination, Turn,
};

const PIECES: &[&str] = &[
    "<code>", "</code>", "<answer>", "</answer>", "\\boxed{", "{", "}", "\\", "```", "```python\n", "\n", " ",
    "<interpreter>", "é", "日本", "🙂", "\u{0}", "\r\n", "\"", "'", "print(1)", "x = 2", "#",
];

/// Arbitrary UTF-8 biased toward tag fragments.
pub fn tagged_noise(rng: &mut impl Rng, max_len: usize) -> String {
    let n = rng.random_range(0..=max_len);
    let mut s = String::new();
    for _ in 0..n {
        if rng.random_bool(0.4) {
            s.push_str(PIECES.choose(rng).unwrap());
        } else {
            s.push(rng.random::<char>());
        }
    }
    s
}

const IDENTS: &[&str] = &["x", "img", "image_clue_0", "np", "plt", "crop", "w", "h", "total", "row"];

/// A plausible snippet that never contains the tag or fence delimiters.
pub fn snippet(rng: &mut impl Rng) -> String {
    let lines = rng.random_range(1..8);
    let mut out = Vec::new();
    for _ in 0..lines {
        let indent = if rng.random_bool(0.2) { "    " } else { "" };
        let a = IDENTS.choose(rng).unwrap();
        let b = IDENTS.choose(rng).unwrap();
        let line = match rng.random_range(0..7) {
            0 => format!("{a} = {}", rng.random_range(-1000..1000)),
            1 => format!("print({a}, {b})"),
            2 => format!("{a} = {b}[{}:{}, :]", rng.random_range(0..50), rng.random_range(50..100)),
            3 => format!("# note: {{{a}}} → {b} ünïcode"),
            4 => format!("s = \"{}\"", "\\n{}".repeat(rng.random_range(0..3))),
            5 => format!("for {a} in range({}):", rng.random_range(1..9)),
            _ => format!("{a}.show()  # < and > are fine"),
        };
        out.push(format!("{indent}{line}"));
    }
    let mut s = out.join("\n");
    if rng.random_bool(0.3) {
        s.push('\n');
    }
    s
}

/// Strings over braces, backslashes, letters and boxed openers.
pub fn brace_string(rng: &mut impl Rng) -> String {
    let alphabet = ["{", "}", "\\", "a", "b", " ", "\\boxed{", "\\{", "\\}", "é"];
    let n = rng.random_range(0..24);
    let mut s = String::new();
    if rng.random_bool(0.7) {
        s.push_str("\\boxed{");
    }
    for _ in 0..n {
        s.push_str(alphabet.choose(rng).unwrap());
    }
    s
}

fn any_text(rng: &mut impl Rng) -> String {
    let n = rng.random_range(0..12);
    (0..n)
        .map(|_| match rng.random_range(0..4) {
            0 => rng.random::<char>(),
            1 => *['"', '\\', '\n', '\t', '\u{7f}', '\u{1}'].choose(rng).unwrap(),
            _ => rng.random_range(b'a'..=b'z') as char,
        })
        .collect()
}

fn wall_time(rng: &mut impl Rng) -> f64 {
    match rng.random_range(0..4) {
        0 => 0.0,
        1 => rng.random::<f64>(),
        2 => rng.random::<f64>() * 1e-300,
        _ => rng.random_range(0.0..1e6),
    }
}

fn exec_result(rng: &mut impl Rng) -> ExecResult {
    let status = *[ExecStatus::Ok, ExecStatus::Error, ExecStatus::Timeout, ExecStatus::KernelCrashed]
        .choose(rng)
        .unwrap();
    let images = (0..rng.random_range(0..3))
        .map(|_| solid_png(rng.random_range(1..5), rng.random_range(1..5), rng.random()))
        .collect();
    ExecResult {
        status,
        stdout: any_text(rng),
        error: if status == ExecStatus::Ok { String::new() } else { any_text(rng) },
        stderr: if rng.random_bool(0.3) { any_text(rng) } else { String::new() },
        images,
        wall_time: wall_time(rng),
    }
}

/// A random trace that satisfies every trace invariant.
pub fn trace(rng: &mut impl Rng, id: usize) -> SessionTrace {
    let images = (0..rng.random_range(0..3))
        .map(|_| solid_png(rng.random_range(1..6), rng.random_range(1..6), rng.random()))
        .collect();
    let mut t = SessionTrace::new(format!("trace-{id}"), any_text(rng), images);
    t.benchmark = rng.random_bool(0.5).then(|| any_text(rng));
    t.mode = if rng.random_bool(0.8) { SessionMode::Agent } else { SessionMode::Cot };
    for index in 0..rng.random_range(0..5) {
        let n_blocks = rng.random_range(0..3);
        let code_blocks: Vec<String> = (0..n_blocks).map(|_| any_text(rng)).collect();
        let exec_results: Vec<ExecResult> = (0..n_blocks).map(|_| exec_result(rng)).collect();
        let clue_message = (n_blocks > 0).then(|| {
            let mut parts = Vec::new();
            for r in &exec_results {
                parts.push(ContentPart::text(any_text(rng)));
                parts.extend(r.images.iter().cloned().map(ContentPart::image));
            }
            Message::new(Role::User, parts)
        });
        t.turns.push(Turn {
            index,
            model_text: any_text(rng),
            code_blocks,
            exec_results,
            clue_message,
            warnings: (0..rng.random_range(0..2)).map(|_| any_text(rng)).collect(),
        });
    }
    t.termination = *[Termination::Answered, Termination::MaxTurnsExceeded, Termination::Unanswered, Termination::Fault]
        .choose(rng)
        .unwrap();
    if t.termination == Termination::Answered {
        t.final_answer = Some(any_text(rng));
    }
    t.faults = (0..rng.random_range(0..2)).map(|_| any_text(rng)).collect();
    if rng.random_bool(0.5) {
        t.config = Some(SessionConfig {
            max_turns: rng.random_range(1..50),
            exec_timeout: rng.random_range(0.001..1000.0),
            temperature: rng.random_range(0.0..=2.0),
            model_id: any_text(rng),
            kernel_restart_policy: if rng.random_bool(0.5) {
                RestartPolicy::RestartAndReport
            } else {
                RestartPolicy::FailSession
            },
        });
    }
    t
}
