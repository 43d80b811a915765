//! In-process executor backed by the minipy interpreter.
//!
//! The kernel lives on its own large-stack thread. Requests and retrieval
//! callbacks travel over channels, so the caller sees the same
//! request/reply shape as with a worker process.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use minipy::{Host, Kernel, RetrievedAction};

use super::protocol::{
    Analysis, DefinedFunction, ErrorPayload, ExecRequest, ExecResult, Op, PROTOCOL_VERSION,
};
use super::{
    load_all, loadable, CallbackResult, Executor, ExecutorError, RetrievalHandler, CRASH_ERROR,
    TIMEOUT_ERROR,
};
use crate::types::ActionRecord;

/// Extra time granted past a snippet's own deadline before the kernel
/// thread is abandoned.
const GRACE: Duration = Duration::from_secs(2);
const CONTROL_TIMEOUT: Duration = Duration::from_secs(30);

pub fn outcome_to_result(id: &str, out: minipy::ExecOutcome) -> ExecResult {
    ExecResult {
        id: id.to_string(),
        ok: out.ok,
        stdout: out.stdout,
        result_repr: if out.ok { out.result_repr } else { None },
        final_answer: if out.ok { out.final_answer } else { None },
        error: out.error.map(|e| ErrorPayload {
            ty: e.ty,
            message: e.message,
            traceback: e.traceback,
        }),
        defined_functions: out
            .defined_functions
            .into_iter()
            .map(|f| DefinedFunction {
                name: f.name,
                docstring: f.docstring,
                source: f.source,
                complexity: Some(f.complexity),
            })
            .collect(),
        analysis: None,
        v: None,
    }
}

/// Answers one protocol request against `kernel`. Shared by the in-process
/// mock and the stdio mock worker.
pub fn serve_request(
    kernel: &mut Kernel,
    req: &ExecRequest,
    host: &mut dyn Host,
    deadline: Option<Instant>,
) -> ExecResult {
    let code = req.code.as_deref().unwrap_or("");
    match req.op {
        Op::Exec => outcome_to_result(&req.id, kernel.exec(code, deadline, host)),
        Op::Load => {
            let mut r = outcome_to_result(&req.id, kernel.load(code, host));
            r.defined_functions.clear();
            r
        }
        Op::Analyze => match minipy::analyze(code) {
            Ok(a) => ExecResult {
                analysis: Some(Analysis {
                    function_definitions: a.definition_count,
                    called_names: a.called_names,
                }),
                ..ExecResult::success(&req.id)
            },
            Err(e) => ExecResult {
                error: Some(ErrorPayload {
                    ty: e.kind.to_string(),
                    message: e.to_string(),
                    traceback: String::new(),
                }),
                ..ExecResult::failure(&req.id, "SyntaxError", "")
            },
        },
        Op::Reset => {
            kernel.reset();
            ExecResult::success(&req.id)
        }
        Op::Ping | Op::Shutdown => ExecResult {
            v: Some(PROTOCOL_VERSION),
            ..ExecResult::success(&req.id)
        },
    }
}

pub fn to_retrieved(results: Vec<CallbackResult>) -> Vec<RetrievedAction> {
    results
        .into_iter()
        .map(|r| RetrievedAction {
            name: r.name,
            docstring: r.docstring,
            source: r.source,
            score: r.score,
        })
        .collect()
}

enum Reply {
    Done(ExecResult),
    Callback {
        query: String,
        k: Option<i64>,
        answer: Sender<Result<Vec<CallbackResult>, String>>,
    },
}

struct ChannelHost<'a> {
    tx: &'a Sender<Reply>,
}

impl Host for ChannelHost<'_> {
    fn retrieve(&mut self, query: &str, k: Option<i64>) -> Result<Vec<RetrievedAction>, String> {
        let (atx, arx) = mpsc::channel();
        self.tx
            .send(Reply::Callback {
                query: query.to_string(),
                k,
                answer: atx,
            })
            .map_err(|_| "executor went away".to_string())?;
        arx.recv()
            .map_err(|_| "executor went away".to_string())?
            .map(to_retrieved)
    }
}

struct KernelThread {
    tx: Sender<(ExecRequest, Option<Instant>)>,
    rx: Receiver<Reply>,
}

fn spawn_kernel() -> KernelThread {
    let (req_tx, req_rx) = mpsc::channel::<(ExecRequest, Option<Instant>)>();
    let (rep_tx, rep_rx) = mpsc::channel::<Reply>();
    thread::Builder::new()
        .name("minipy-kernel".into())
        .stack_size(minipy::RECOMMENDED_STACK)
        .spawn(move || {
            let mut kernel = Kernel::new();
            while let Ok((req, deadline)) = req_rx.recv() {
                let res = serve_request(
                    &mut kernel,
                    &req,
                    &mut ChannelHost { tx: &rep_tx },
                    deadline,
                );
                if rep_tx.send(Reply::Done(res)).is_err() || req.op == Op::Shutdown {
                    break;
                }
            }
        })
        .expect("spawn kernel thread");
    KernelThread {
        tx: req_tx,
        rx: rep_rx,
    }
}

enum Failure {
    Timeout,
    Gone,
}

pub struct MockExecutor {
    kernel: KernelThread,
    human: Vec<ActionRecord>,
    next_id: u64,
}

impl MockExecutor {
    /// Starts a kernel and loads the human actions into it.
    pub fn start(human_actions: &[ActionRecord]) -> Result<Self, ExecutorError> {
        let mut m = MockExecutor {
            kernel: spawn_kernel(),
            human: loadable(human_actions),
            next_id: 0,
        };
        m.restart()?;
        Ok(m)
    }

    fn id(&mut self) -> String {
        self.next_id += 1;
        format!("m{}", self.next_id)
    }

    fn request(
        &mut self,
        op: Op,
        code: Option<&str>,
        timeout: Duration,
        handler: &mut dyn RetrievalHandler,
    ) -> Result<ExecResult, Failure> {
        let req = ExecRequest::new(
            self.id(),
            op,
            code.map(str::to_string),
            timeout.as_secs().max(1),
        );
        let deadline = Instant::now() + timeout;
        self.kernel
            .tx
            .send((req, (op == Op::Exec).then_some(deadline)))
            .map_err(|_| Failure::Gone)?;
        let hard = deadline + GRACE;
        loop {
            let left = hard.saturating_duration_since(Instant::now());
            match self.kernel.rx.recv_timeout(left) {
                Ok(Reply::Done(r)) => return Ok(r),
                Ok(Reply::Callback { query, k, answer }) => {
                    let _ = answer.send(handler.retrieve(&query, k));
                }
                Err(RecvTimeoutError::Timeout) => return Err(Failure::Timeout),
                Err(RecvTimeoutError::Disconnected) => return Err(Failure::Gone),
            }
        }
    }

    /// Replaces the kernel thread. A stuck thread is abandoned; it exits on
    /// its own once its channels are gone.
    fn restart(&mut self) -> Result<(), ExecutorError> {
        self.kernel = spawn_kernel();
        for r in self.human.clone() {
            match self.request(
                Op::Load,
                Some(&r.source),
                CONTROL_TIMEOUT,
                &mut super::NoRetrieval,
            ) {
                Ok(res) if !res.ok => {
                    tracing::warn!("human action `{}` failed to load: {:?}", r.name, res.error)
                }
                Ok(_) => {}
                Err(_) => {
                    return Err(ExecutorError::Crashed(format!(
                        "kernel died while loading `{}`",
                        r.name
                    )))
                }
            }
        }
        Ok(())
    }

    fn control(&mut self, op: Op, code: Option<&str>) -> Result<ExecResult, ExecutorError> {
        match self.request(op, code, CONTROL_TIMEOUT, &mut super::NoRetrieval) {
            Ok(r) => Ok(r),
            Err(Failure::Timeout) => {
                self.restart()?;
                Err(ExecutorError::Timeout)
            }
            Err(Failure::Gone) => {
                self.restart()?;
                Err(ExecutorError::Crashed("kernel thread exited".into()))
            }
        }
    }
}

impl Executor for MockExecutor {
    fn execute(
        &mut self,
        code: &str,
        timeout: Duration,
        handler: &mut dyn RetrievalHandler,
    ) -> ExecResult {
        let id_before = self.next_id + 1;
        let r = self.request(Op::Exec, Some(code), timeout, handler);
        let id = format!("m{id_before}");
        let (ty, msg) = match r {
            Ok(r) if r.error_type() != Some(TIMEOUT_ERROR) => return r,
            Ok(_) | Err(Failure::Timeout) => (
                TIMEOUT_ERROR,
                format!(
                    "execution exceeded {} s; the kernel was restarted and its namespace cleared",
                    timeout.as_secs()
                ),
            ),
            Err(Failure::Gone) => (
                CRASH_ERROR,
                "the kernel stopped unexpectedly; it was restarted and its namespace cleared"
                    .to_string(),
            ),
        };
        let mut res = ExecResult::failure(id, ty, msg);
        if let Err(e) = self.restart() {
            res.error
                .as_mut()
                .unwrap()
                .message
                .push_str(&format!(" (restart failed: {e})"));
        }
        res
    }

    fn analyze(&mut self, code: &str) -> Result<ExecResult, ExecutorError> {
        self.control(Op::Analyze, Some(code))
    }

    fn load(&mut self, code: &str) -> Result<ExecResult, ExecutorError> {
        self.control(Op::Load, Some(code))
    }

    fn reset(&mut self) -> Result<(), ExecutorError> {
        self.control(Op::Reset, None)?;
        let human = self.human.clone();
        load_all(self, &human)
    }

    fn ping(&mut self) -> Result<u32, ExecutorError> {
        let r = self.control(Op::Ping, None)?;
        r.v.ok_or_else(|| ExecutorError::Protocol("ping reply without version".into()))
    }

    fn shutdown(&mut self) -> Result<(), ExecutorError> {
        self.control(Op::Shutdown, None).map(|_| ())
    }
}
