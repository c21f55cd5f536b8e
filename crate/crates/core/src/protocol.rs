//! Kernel wire protocol: newline-delimited JSON frames over the child's
//! stdin/stdout. See `PROTOCOL.md` at the repository root for the byte-level
//! description.

use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStatus {
    Ok,
    Error,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Frame {
    /// First frame a kernel writes after start-up.
    Ready {
        id: u64,
        protocol_version: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        implementation: Option<String>,
    },
    Init {
        id: u64,
        /// Base64 PNG, bound in order to `image_clue_0..`.
        images: Vec<String>,
    },
    Exec {
        id: u64,
        code: String,
    },
    Result {
        id: u64,
        status: FrameStatus,
        stdout: String,
        error: String,
        images: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        meta: Option<serde_json::Value>,
    },
    Shutdown {
        id: u64,
    },
}

impl Frame {
    pub fn id(&self) -> u64 {
        match self {
            Self::Ready { id, .. }
            | Self::Init { id, .. }
            | Self::Exec { id, .. }
            | Self::Result { id, .. }
            | Self::Shutdown { id } => *id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Ready { .. } => "ready",
            Self::Init { .. } => "init",
            Self::Exec { .. } => "exec",
            Self::Result { .. } => "result",
            Self::Shutdown { .. } => "shutdown",
        }
    }

    /// One line of NDJSON, newline included.
    pub fn encode(&self) -> String {
        let mut line = serde_json::to_string(self).expect("frames always serialize");
        line.push('\n');
        line
    }

    pub fn decode(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line.trim_end_matches(['\r', '\n']))
    }

    pub fn result(id: u64, status: FrameStatus, stdout: String, error: String, images: Vec<String>) -> Self {
        Self::Result {
            id,
            status,
            stdout,
            error,
            images,
            meta: None,
        }
    }
}
