//! Runtime for multimodal chat models that reason by writing and running code.
//!
//! A session alternates between the model and a persistent interpreter
//! kernel: the model emits `<code>` blocks, the kernel runs them in a child
//! process, and the captured text and figures go back into the context until
//! the model commits to an `<answer>`.

pub mod agent;
pub mod client;
pub mod eval;
pub mod image;
pub mod mock_kernel;
pub mod prompt;
pub mod protocol;
pub mod session;
pub mod supervisor;
pub mod tags;
pub mod taxonomy;

pub use crate::agent::{run_cot, run_session, Agent, SessionResult};
pub use crate::client::{ChatModel, ClientConfig, ClientError, HttpChatClient, ModelResponse, ScriptedClient};
pub use crate::image::ImageBlob;
pub use crate::session::{
    deserialize_trace, serialize_trace, ContentPart, ExecResult, ExecStatus, Message, RestartPolicy, Role,
    SessionConfig, SessionTrace, Termination, Turn,
};
pub use crate::supervisor::{Kernel, SandboxError, SupervisorConfig, PYTHON_KERNEL_SOURCE};
pub use crate::tags::ModelAction;
