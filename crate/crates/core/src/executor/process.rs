//! Supervises a kernel worker process speaking the stdio protocol.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::protocol::{
    parse_incoming, to_line, CallbackReply, ExecRequest, ExecResult, Incoming, Op, PROTOCOL_VERSION,
};
use super::{
    load_all, loadable, Executor, ExecutorError, NoRetrieval, RetrievalHandler, CRASH_ERROR,
    TIMEOUT_ERROR,
};
use crate::types::ActionRecord;

pub const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);
const CONTROL_TIMEOUT: Duration = Duration::from_secs(30);
const EXIT_WAIT: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default)]
    pub env: Vec<(String, String)>,
    #[serde(default)]
    pub cwd: Option<PathBuf>,
}

impl WorkerCommand {
    pub fn new(program: impl Into<String>) -> Self {
        WorkerCommand {
            program: program.into(),
            args: Vec::new(),
            env: Vec::new(),
            cwd: None,
        }
    }

    /// Splits a command line on whitespace.
    pub fn parse(line: &str) -> Option<Self> {
        let mut parts = line.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(WorkerCommand {
            program,
            args: parts.collect(),
            env: Vec::new(),
            cwd: None,
        })
    }

    pub fn arg(mut self, a: impl Into<String>) -> Self {
        self.args.push(a.into());
        self
    }

    pub fn env(mut self, k: impl Into<String>, v: impl Into<String>) -> Self {
        self.env.push((k.into(), v.into()));
        self
    }

    fn display(&self) -> String {
        std::iter::once(self.program.as_str())
            .chain(self.args.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

enum Line {
    Text(String),
    Eof,
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<Line>,
}

impl Worker {
    fn spawn(cmd: &WorkerCommand) -> Result<Self, ExecutorError> {
        let mut c = Command::new(&cmd.program);
        c.args(&cmd.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        for (k, v) in &cmd.env {
            c.env(k, v);
        }
        if let Some(d) = &cmd.cwd {
            c.current_dir(d);
        }
        let mut child = c.spawn().map_err(|e| ExecutorError::Spawn {
            command: cmd.display(),
            message: e.to_string(),
        })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name("worker-stdout".into())
            .spawn(move || {
                let mut r = BufReader::new(stdout);
                loop {
                    let mut buf = String::new();
                    match r.read_line(&mut buf) {
                        Ok(0) | Err(_) => {
                            let _ = tx.send(Line::Eof);
                            break;
                        }
                        Ok(_) => {
                            if tx.send(Line::Text(buf)).is_err() {
                                break;
                            }
                        }
                    }
                }
            })
            .expect("spawn reader thread");
        Ok(Worker {
            child,
            stdin,
            lines: rx,
        })
    }

    fn send(&mut self, line: &str) -> std::io::Result<()> {
        self.stdin.write_all(line.as_bytes())?;
        self.stdin.flush()
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn exit_status(&mut self) -> String {
        let until = Instant::now() + Duration::from_millis(500);
        while Instant::now() < until {
            if let Ok(Some(s)) = self.child.try_wait() {
                return s.to_string();
            }
            thread::sleep(Duration::from_millis(10));
        }
        "still running".into()
    }
}

enum Failure {
    Timeout,
    Crashed(String),
}

/// An [`Executor`] that talks to a worker process over stdin/stdout.
pub struct ProcessExecutor {
    cmd: WorkerCommand,
    human: Vec<ActionRecord>,
    worker: Option<Worker>,
    next_id: u64,
    handshake_timeout: Duration,
}

impl ProcessExecutor {
    /// Spawns the worker, waits for the handshake, and loads the human actions.
    pub fn start(
        cmd: WorkerCommand,
        human_actions: &[ActionRecord],
    ) -> Result<Self, ExecutorError> {
        Self::start_with_handshake(cmd, human_actions, HANDSHAKE_TIMEOUT)
    }

    pub fn start_with_handshake(
        cmd: WorkerCommand,
        human_actions: &[ActionRecord],
        handshake_timeout: Duration,
    ) -> Result<Self, ExecutorError> {
        let mut p = ProcessExecutor {
            cmd,
            human: loadable(human_actions),
            worker: None,
            next_id: 0,
            handshake_timeout,
        };
        p.spawn()?;
        Ok(p)
    }

    fn id(&mut self) -> String {
        self.next_id += 1;
        format!("p{}", self.next_id)
    }

    fn spawn(&mut self) -> Result<(), ExecutorError> {
        if let Some(mut w) = self.worker.take() {
            w.kill();
        }
        self.worker = Some(Worker::spawn(&self.cmd)?);
        let hs = self.handshake_timeout;
        match self.request(Op::Ping, None, hs, &mut NoRetrieval) {
            Ok(r) if r.v == Some(PROTOCOL_VERSION) => {}
            Ok(r) => {
                self.kill();
                return Err(ExecutorError::Protocol(format!(
                    "handshake reported protocol version {:?}, expected {PROTOCOL_VERSION}",
                    r.v
                )));
            }
            Err(Failure::Timeout) => {
                self.kill();
                return Err(ExecutorError::HandshakeTimeout(hs));
            }
            Err(Failure::Crashed(m)) => {
                self.kill();
                return Err(ExecutorError::Crashed(m));
            }
        }
        for r in self.human.clone() {
            match self.request(Op::Load, Some(&r.source), CONTROL_TIMEOUT, &mut NoRetrieval) {
                Ok(res) if !res.ok => {
                    tracing::warn!("human action `{}` failed to load: {:?}", r.name, res.error)
                }
                Ok(_) => {}
                Err(_) => {
                    self.kill();
                    return Err(ExecutorError::Crashed(format!(
                        "worker died while loading `{}`",
                        r.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn kill(&mut self) {
        if let Some(mut w) = self.worker.take() {
            w.kill();
        }
    }

    /// Process id of the current worker, if one is running.
    pub fn pid(&self) -> Option<u32> {
        self.worker.as_ref().map(|w| w.child.id())
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
        let Some(w) = self.worker.as_mut() else {
            return Err(Failure::Crashed("no worker is running".into()));
        };
        if let Err(e) = w.send(&to_line(&req)) {
            return Err(Failure::Crashed(format!("cannot write to worker: {e}")));
        }
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match w.lines.recv_timeout(left) {
                Ok(Line::Text(t)) => match parse_incoming(&t) {
                    Ok(Incoming::Result(r)) if r.id == req.id => return Ok(r),
                    Ok(Incoming::Result(r)) => tracing::debug!("ignoring stale reply {}", r.id),
                    Ok(Incoming::Callback(cb)) => {
                        let reply = match handler.retrieve(&cb.query, cb.k) {
                            Ok(results) => CallbackReply {
                                id: cb.id,
                                results,
                                error: None,
                            },
                            Err(e) => CallbackReply {
                                id: cb.id,
                                results: Vec::new(),
                                error: Some(e),
                            },
                        };
                        if let Err(e) = w.send(&to_line(&reply)) {
                            return Err(Failure::Crashed(format!("cannot write to worker: {e}")));
                        }
                    }
                    Err(e) => {
                        tracing::warn!("worker wrote a non-protocol line ({e}): {}", t.trim_end())
                    }
                },
                Ok(Line::Eof) | Err(RecvTimeoutError::Disconnected) => {
                    let status = w.exit_status();
                    return Err(Failure::Crashed(format!("worker exited ({status})")));
                }
                Err(RecvTimeoutError::Timeout) => return Err(Failure::Timeout),
            }
        }
    }

    fn control(&mut self, op: Op, code: Option<&str>) -> Result<ExecResult, ExecutorError> {
        match self.request(op, code, CONTROL_TIMEOUT, &mut NoRetrieval) {
            Ok(r) => Ok(r),
            Err(Failure::Timeout) => {
                self.spawn()?;
                Err(ExecutorError::Timeout)
            }
            Err(Failure::Crashed(m)) => {
                self.spawn()?;
                Err(ExecutorError::Crashed(m))
            }
        }
    }
}

impl Executor for ProcessExecutor {
    fn execute(
        &mut self,
        code: &str,
        timeout: Duration,
        handler: &mut dyn RetrievalHandler,
    ) -> ExecResult {
        let id = format!("p{}", self.next_id + 1);
        let (ty, msg) = match self.request(Op::Exec, Some(code), timeout, handler) {
            Ok(r) if r.error_type() != Some(TIMEOUT_ERROR) => return r,
            Ok(_) | Err(Failure::Timeout) => (
                TIMEOUT_ERROR,
                format!(
                    "execution exceeded {} s; the kernel was restarted and its namespace cleared",
                    timeout.as_secs()
                ),
            ),
            Err(Failure::Crashed(m)) => (
                CRASH_ERROR,
                format!("{m}; the kernel was restarted and its namespace cleared"),
            ),
        };
        let mut res = ExecResult::failure(id, ty, msg);
        if let Err(e) = self.spawn() {
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
        let Some(mut w) = self.worker.take() else {
            return Ok(());
        };
        let req = ExecRequest::new("shutdown", Op::Shutdown, None, 1);
        let _ = w.send(&to_line(&req));
        let until = Instant::now() + EXIT_WAIT;
        while Instant::now() < until {
            if let Ok(Some(_)) = w.child.try_wait() {
                return Ok(());
            }
            thread::sleep(Duration::from_millis(10));
        }
        w.kill();
        Ok(())
    }
}

impl Drop for ProcessExecutor {
    fn drop(&mut self) {
        self.kill();
    }
}
