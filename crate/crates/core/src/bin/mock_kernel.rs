//! Protocol-conformant mock kernel used by tests and `codeloop kernel-check`.

use codeloop_core::mock_kernel::{serve, MockOptions};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let opts = match MockOptions::parse(&args) {
        Ok(opts) => opts,
        Err(e) => {
            eprintln!("mock-kernel: {e}");
            std::process::exit(64);
        }
    };
    std::process::exit(serve(&opts));
}
