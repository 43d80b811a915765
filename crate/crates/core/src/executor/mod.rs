//! Client side of the kernel: the [`Executor`] interface, observation
//! rendering, and two implementations (a supervised worker process and an
//! in-process mock).

pub mod mock;
pub mod process;
pub mod protocol;

use std::time::Duration;

use thiserror::Error;

pub use mock::MockExecutor;
pub use process::{ProcessExecutor, WorkerCommand, HANDSHAKE_TIMEOUT};
pub use protocol::{Analysis, CallbackResult, DefinedFunction, ErrorPayload, ExecResult};

use crate::registry::is_hook;
use crate::types::{ActionRecord, StepStatus};

#[derive(Debug, Error)]
pub enum ExecutorError {
    #[error("cannot spawn worker `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("worker did not answer the handshake within {0:?}")]
    HandshakeTimeout(Duration),
    #[error("worker protocol error: {0}")]
    Protocol(String),
    #[error("worker crashed: {0}")]
    Crashed(String),
    #[error("request timed out")]
    Timeout,
}

/// Error type reported when the client killed a runaway snippet.
pub const TIMEOUT_ERROR: &str = "Timeout";
/// Error type reported when the worker died mid-request.
pub const CRASH_ERROR: &str = "WorkerCrashed";

/// Serves retrieval callbacks raised by `get_relevant_actions` during an exec.
pub trait RetrievalHandler {
    fn retrieve(&mut self, query: &str, k: Option<i64>) -> Result<Vec<CallbackResult>, String>;
}

/// Rejects every retrieval.
pub struct NoRetrieval;

impl RetrievalHandler for NoRetrieval {
    fn retrieve(&mut self, _query: &str, _k: Option<i64>) -> Result<Vec<CallbackResult>, String> {
        Err("action retrieval is not available".into())
    }
}

impl<F> RetrievalHandler for F
where
    F: FnMut(&str, Option<i64>) -> Result<Vec<CallbackResult>, String>,
{
    fn retrieve(&mut self, query: &str, k: Option<i64>) -> Result<Vec<CallbackResult>, String> {
        self(query, k)
    }
}

/// One kernel session. Requests strictly alternate with replies.
pub trait Executor: Send {
    /// Runs `code` in the persistent namespace. Timeouts and crashes come
    /// back as failed results after the kernel has been restarted.
    fn execute(
        &mut self,
        code: &str,
        timeout: Duration,
        handler: &mut dyn RetrievalHandler,
    ) -> ExecResult;
    /// Static inspection without running anything.
    fn analyze(&mut self, code: &str) -> Result<ExecResult, ExecutorError>;
    /// Runs only the definitions and imports in `code`.
    fn load(&mut self, code: &str) -> Result<ExecResult, ExecutorError>;
    /// Clears the namespace and reloads the human actions.
    fn reset(&mut self) -> Result<(), ExecutorError>;
    /// Returns the worker's protocol version.
    fn ping(&mut self) -> Result<u32, ExecutorError>;
    fn shutdown(&mut self) -> Result<(), ExecutorError>;
}

/// Human actions whose sources must be loaded into a fresh namespace.
/// Hooks are installed by the kernel and are skipped.
pub fn loadable(human: &[ActionRecord]) -> Vec<ActionRecord> {
    human
        .iter()
        .filter(|r| !is_hook(&r.name))
        .cloned()
        .collect()
}

pub(crate) fn load_all(
    exec: &mut dyn Executor,
    human: &[ActionRecord],
) -> Result<(), ExecutorError> {
    for r in human {
        let res = exec.load(&r.source)?;
        if !res.ok {
            let e = res
                .error
                .map(|e| format!("{}: {}", e.ty, e.message))
                .unwrap_or_default();
            tracing::warn!("human action `{}` failed to load: {e}", r.name);
        }
    }
    Ok(())
}

pub fn step_status(res: &ExecResult) -> StepStatus {
    match (res.ok, res.error_type()) {
        (true, _) => StepStatus::Ok,
        (false, Some(TIMEOUT_ERROR)) => StepStatus::Timeout,
        _ => StepStatus::ExecError,
    }
}

const TRACEBACK_LINES: usize = 20;

/// Cuts `text` to `limit` characters, appending a marker that counts the
/// removed characters.
pub fn truncate_chars(text: &str, limit: usize) -> String {
    let total = text.chars().count();
    if total <= limit {
        return text.to_string();
    }
    let mut out: String = text.chars().take(limit).collect();
    out.push_str(&format!("...[truncated {} chars]", total - limit));
    out
}

/// The text an agent sees for one execution result.
pub fn to_observation(res: &ExecResult, limit_chars: usize) -> String {
    let body = if res.ok {
        let mut s = res.stdout.clone();
        if let Some(r) = &res.result_repr {
            s.push_str(r);
        }
        s
    } else {
        match &res.error {
            Some(e) => {
                let mut s = format!("{}: {}", e.ty, e.message);
                let lines: Vec<&str> = e.traceback.lines().collect();
                if !lines.is_empty() {
                    s.push('\n');
                    s.push_str(&lines[lines.len().saturating_sub(TRACEBACK_LINES)..].join("\n"));
                }
                s
            }
            None => "error: execution failed".to_string(),
        }
    };
    truncate_chars(&body, limit_chars)
}
