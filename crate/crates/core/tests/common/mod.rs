#![allow(dead_code)]

use std::time::Duration;

use codeloop_core::image::{solid_png, ImageBlob};
use codeloop_core::session::SessionConfig;
use codeloop_core::{Agent, SupervisorConfig};

pub fn mock_kernel(args: &[&str]) -> SupervisorConfig {
    let mut cmd = vec![env!("CARGO_BIN_EXE_mock-kernel").to_string()];
    cmd.extend(args.iter().map(|a| a.to_string()));
    let mut cfg = SupervisorConfig::new(cmd);
    cfg.startup_timeout = Duration::from_secs(5);
    cfg.init_timeout = Duration::from_secs(5);
    cfg.grace_period = Duration::from_millis(500);
    cfg
}

pub fn agent(args: &[&str]) -> Agent {
    let config = SessionConfig {
        exec_timeout: 5.0,
        ..SessionConfig::default()
    };
    Agent::new(config, mock_kernel(args))
}

pub fn code_turn(body: &str) -> String {
    format!("Let me check with some code.\n<code>\n```python\n{body}```\n</code>\n")
}

/// Two code turns then a boxed answer.
pub fn two_code_turns_then_answer() -> Vec<String> {
    vec![
        code_turn("w = image_clue_0.width\nh = image_clue_0.height\nprint(w, h)\n"),
        code_turn("import matplotlib.pyplot as plt\nplt.imshow(image_clue_0)\nplt.show()\nprint(w * h)\n"),
        "The area is 48 pixels.\n<answer>\\boxed{48}</answer>".to_string(),
    ]
}

pub fn demo_image() -> ImageBlob {
    solid_png(8, 6, [200, 30, 30])
}

pub mod gen;
pub mod oracle;
