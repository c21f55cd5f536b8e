//! Conversation and session data model, plus the on-disk trace format.
//!
//! A trace file is one JSON object: `schema_version` followed by the fields of
//! [`SessionTrace`]. Images are embedded as base64 PNG strings. The field list
//! is documented in `docs/TRACE_FORMAT.md`.

use serde::{Deserialize, Serialize};

use crate::image::ImageBlob;

/// Version written into every trace document.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    Image { image: ImageBlob },
}

impl ContentPart {
    pub fn text(text: impl Into<String>) -> Self {
        Self::Text { text: text.into() }
    }

    pub fn image(image: ImageBlob) -> Self {
        Self::Image { image }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Self::Text { text } => Some(text),
            Self::Image { .. } => None,
        }
    }

    pub fn as_image(&self) -> Option<&ImageBlob> {
        match self {
            Self::Image { image } => Some(image),
            Self::Text { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::System => "system",
            Self::User => "user",
            Self::Assistant => "assistant",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<ContentPart>,
}

impl Message {
    /// Builds a message; `parts` must not be empty.
    pub fn new(role: Role, parts: Vec<ContentPart>) -> Self {
        assert!(!parts.is_empty(), "a message needs at least one part");
        Self { role, parts }
    }

    pub fn text(role: Role, text: impl Into<String>) -> Self {
        Self::new(role, vec![ContentPart::text(text)])
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageBlob> {
        self.parts.iter().filter_map(ContentPart::as_image)
    }

    /// All text parts joined in order.
    pub fn joined_text(&self) -> String {
        self.parts.iter().filter_map(ContentPart::as_text).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    Error,
    Timeout,
    KernelCrashed,
}

impl ExecStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Error => "error",
            Self::Timeout => "timeout",
            Self::KernelCrashed => "kernel_crashed",
        }
    }
}

/// Outcome of running one snippet in the kernel.
///
/// `error` carries the traceback (or the supervisor's explanation) and is empty
/// whenever `status` is `Ok`. Anything the snippet wrote to stderr during a
/// successful run lands in `stderr` instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecResult {
    pub status: ExecStatus,
    pub stdout: String,
    pub error: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub stderr: String,
    pub images: Vec<ImageBlob>,
    /// Seconds.
    pub wall_time: f64,
}

impl ExecResult {
    pub fn ok(stdout: impl Into<String>) -> Self {
        Self {
            status: ExecStatus::Ok,
            stdout: stdout.into(),
            error: String::new(),
            stderr: String::new(),
            images: Vec::new(),
            wall_time: 0.0,
        }
    }

    pub fn failed(status: ExecStatus, error: impl Into<String>) -> Self {
        Self {
            status,
            stdout: String::new(),
            error: error.into(),
            stderr: String::new(),
            images: Vec::new(),
            wall_time: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub model_text: String,
    pub code_blocks: Vec<String>,
    pub exec_results: Vec<ExecResult>,
    pub clue_message: Option<Message>,
    /// Parser warnings and loop notes (unclosed tags, nudges).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartPolicy {
    /// Restart the kernel, re-inject images and tell the model its state is gone.
    #[default]
    RestartAndReport,
    /// End the session with a fault.
    FailSession,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub max_turns: u32,
    /// Per-snippet wall-clock limit, seconds.
    pub exec_timeout: f64,
    pub temperature: f64,
    pub model_id: String,
    pub kernel_restart_policy: RestartPolicy,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_turns: 10,
            exec_timeout: 60.0,
            temperature: 0.6,
            model_id: String::from("gpt-4.1"),
            kernel_restart_policy: RestartPolicy::RestartAndReport,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), InvariantError> {
        if self.max_turns < 1 {
            return Err(InvariantError::new("max_turns must be at least 1"));
        }
        if !self.exec_timeout.is_finite() || self.exec_timeout <= 0.0 {
            return Err(InvariantError::new("exec_timeout must be positive"));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(InvariantError::new("temperature must lie in [0, 2]"));
        }
        Ok(())
    }

    pub fn exec_timeout(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(self.exec_timeout)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answered,
    MaxTurnsExceeded,
    /// Baseline run whose single response carried no boxed answer.
    Unanswered,
    Fault,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    #[default]
    Agent,
    Cot,
}

/// Complete record of one inference session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    #[serde(default)]
    pub mode: SessionMode,
    pub query: String,
    pub images: Vec<ImageBlob>,
    pub turns: Vec<Turn>,
    pub final_answer: Option<String>,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SessionConfig>,
}

impl SessionTrace {
    pub fn new(id: impl Into<String>, query: impl Into<String>, images: Vec<ImageBlob>) -> Self {
        Self {
            id: id.into(),
            benchmark: None,
            mode: SessionMode::Agent,
            query: query.into(),
            images,
            turns: Vec::new(),
            final_answer: None,
            termination: Termination::Fault,
            faults: Vec::new(),
            config: None,
        }
    }

    pub fn total_code_blocks(&self) -> usize {
        self.turns.iter().map(|t| t.code_blocks.len()).sum()
    }

    /// Zeroes every wall-clock measurement, leaving only content that is a
    /// function of the inputs. Used when comparing replays.
    pub fn without_timing(&self) -> Self {
        let mut trace = self.clone();
        for turn in &mut trace.turns {
            for result in &mut turn.exec_results {
                result.wall_time = 0.0;
            }
        }
        trace
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        match (self.termination, &self.final_answer) {
            (Termination::Answered, None) => {
                return Err(InvariantError::new("termination=answered without final_answer"))
            }
            (t, Some(_)) if t != Termination::Answered => {
                return Err(InvariantError::new(format!(
                    "final_answer present but termination={t:?}"
                )))
            }
            _ => {}
        }
        for (pos, turn) in self.turns.iter().enumerate() {
            if turn.index != pos {
                return Err(InvariantError::new(format!(
                    "turn at position {pos} has index {}",
                    turn.index
                )));
            }
            if turn.exec_results.len() != turn.code_blocks.len() {
                return Err(InvariantError::new(format!(
                    "turn {pos}: {} code blocks but {} exec results",
                    turn.code_blocks.len(),
                    turn.exec_results.len()
                )));
            }
            if turn.clue_message.is_some() != !turn.code_blocks.is_empty() {
                return Err(InvariantError::new(format!(
                    "turn {pos}: clue_message must be present iff code blocks exist"
                )));
            }
            if let Some(msg) = &turn.clue_message {
                if msg.parts.is_empty() {
                    return Err(InvariantError::new(format!("turn {pos}: empty clue message")));
                }
            }
            for result in &turn.exec_results {
                if result.status == ExecStatus::Ok && !result.error.is_empty() {
                    return Err(InvariantError::new(format!(
                        "turn {pos}: ok result carries error text"
                    )));
                }
            }
        }
        if let Some(cfg) = &self.config {
            cfg.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invariant violated: {0}")]
pub struct InvariantError(pub String);

impl InvariantError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("malformed trace document: {0}")]
    Schema(String),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
}

#[derive(Serialize)]
struct TraceDocumentRef<'a> {
    schema_version: u32,
    #[serde(flatten)]
    trace: &'a SessionTrace,
}

#[derive(Deserialize)]
struct TraceDocument {
    schema_version: u32,
    #[serde(flatten)]
    trace: SessionTrace,
}

/// Serializes a trace into its JSON document form.
pub fn serialize_trace(trace: &SessionTrace) -> Vec<u8> {
    let doc = TraceDocumentRef {
        schema_version: TRACE_SCHEMA_VERSION,
        trace,
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("trace values always serialize");
    out.push(b'\n');
    out
}

/// Parses and validates a trace document.
pub fn deserialize_trace(doc: &[u8]) -> Result<SessionTrace, TraceError> {
    let parsed: TraceDocument =
        serde_json::from_slice(doc).map_err(|e| TraceError::Schema(e.to_string()))?;
    if parsed.schema_version != TRACE_SCHEMA_VERSION {
        return Err(TraceError::Schema(format!(
            "unsupported schema_version {} (expected {TRACE_SCHEMA_VERSION})",
            parsed.schema_version
        )));
    }
    parsed.trace.validate()?;
    Ok(parsed.trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::solid_png;

    fn one_turn_trace() -> SessionTrace {
        let mut trace = SessionTrace::new("t0", "q", vec![]);
        trace.turns.push(Turn {
            index: 0,
            model_text: "<code>```\nprint(1)\n```</code>".into(),
            code_blocks: vec!["print(1)\n".into()],
            exec_results: vec![ExecResult::ok("1\n")],
            clue_message: Some(Message::text(Role::User, "<interpreter>1\n</interpreter>")),
            warnings: vec![],
        });
        trace
    }

    #[test]
    fn empty_trace_round_trips() {
        let trace = SessionTrace::new("e", "q", vec![]);
        let doc = serialize_trace(&trace);
        let value: serde_json::Value = serde_json::from_slice(&doc).unwrap();
        assert_eq!(value["turns"], serde_json::json!([]));
        assert_eq!(value["schema_version"], 1);
        assert_eq!(deserialize_trace(&doc).unwrap(), trace);
    }

    #[test]
    fn single_turn_lists_one_code_block() {
        let doc = serialize_trace(&one_turn_trace());
        let value: serde_json::Value = serde_json::from_slice(&doc).unwrap();
        assert_eq!(value["turns"][0]["code_blocks"], serde_json::json!(["print(1)\n"]));
    }

    #[test]
    fn embedded_png_decodes_to_identical_bytes() {
        let png = solid_png(1, 1, [255, 255, 255]);
        let trace = SessionTrace::new("img", "q", vec![png.clone()]);
        let doc = serialize_trace(&trace);
        let value: serde_json::Value = serde_json::from_slice(&doc).unwrap();
        let text = value["images"][0].as_str().unwrap();
        use base64::Engine as _;
        let decoded = base64::engine::general_purpose::STANDARD.decode(text).unwrap();
        assert_eq!(decoded, png.bytes());
        assert_eq!(deserialize_trace(&doc).unwrap().images[0], png);
    }

    #[test]
    fn final_answer_with_fault_is_invariant_error() {
        let mut trace = SessionTrace::new("x", "q", vec![]);
        trace.final_answer = Some("A".into());
        let doc = serialize_trace(&trace);
        assert!(matches!(deserialize_trace(&doc), Err(TraceError::Invariant(_))));
    }

    #[test]
    fn truncated_document_is_schema_error() {
        let doc = serialize_trace(&one_turn_trace());
        let cut = &doc[..doc.len() / 2];
        assert!(matches!(deserialize_trace(cut), Err(TraceError::Schema(_))));
    }

    #[test]
    fn turn_gaps_are_rejected() {
        let mut trace = one_turn_trace();
        trace.turns[0].index = 1;
        assert!(trace.validate().is_err());
    }

    #[test]
    fn clue_without_code_is_rejected() {
        let mut trace = one_turn_trace();
        trace.turns[0].code_blocks.clear();
        trace.turns[0].exec_results.clear();
        assert!(trace.validate().is_err());
    }

    #[test]
    fn unknown_schema_version_rejected() {
        let doc = serialize_trace(&SessionTrace::new("e", "q", vec![]));
        let text = String::from_utf8(doc).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(deserialize_trace(text.as_bytes()), Err(TraceError::Schema(_))));
    }

    #[test]
    fn config_defaults() {
        let cfg = SessionConfig::default();
        assert_eq!(cfg.max_turns, 10);
        assert_eq!(cfg.temperature, 0.6);
        assert!(cfg.validate().is_ok());
        let bad = SessionConfig {
            exec_timeout: 0.0,
            ..SessionConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
