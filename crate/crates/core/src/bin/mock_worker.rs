//! Kernel worker backed by minipy, speaking the stdio protocol.
//!
//! Useful for exercising the process supervisor without a Python worker.
//! Setting `ACTKIT_MOCK_WORKER_CRASH_MARKER` makes the process exit with
//! status 3 on any exec whose code contains the marker.

use std::io::{self, BufRead, BufReader, Stdin, Stdout, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use actkit::executor::mock::{serve_request, to_retrieved};
use actkit::executor::protocol::{to_line, Callback, CallbackReply, ExecRequest, ExecResult, Op};
use minipy::{Host, Kernel, RetrievedAction};

struct StdioHost<'a> {
    input: &'a mut BufReader<Stdin>,
    out: &'a mut Stdout,
    seq: u64,
}

impl Host for StdioHost<'_> {
    fn retrieve(&mut self, query: &str, k: Option<i64>) -> Result<Vec<RetrievedAction>, String> {
        self.seq += 1;
        let cb = Callback {
            op: "callback".into(),
            id: format!("cb{}", self.seq),
            kind: "retrieve".into(),
            query: query.to_string(),
            k,
        };
        self.out
            .write_all(to_line(&cb).as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| e.to_string())?;
        let mut line = String::new();
        if self.input.read_line(&mut line).map_err(|e| e.to_string())? == 0 {
            return Err("client closed the channel".into());
        }
        let reply: CallbackReply = serde_json::from_str(&line).map_err(|e| e.to_string())?;
        if let Some(e) = reply.error {
            return Err(e);
        }
        Ok(to_retrieved(reply.results))
    }
}

fn serve() -> i32 {
    let crash_marker = std::env::var("ACTKIT_MOCK_WORKER_CRASH_MARKER").ok();
    let mut input = BufReader::new(io::stdin());
    let mut out = io::stdout();
    let mut kernel = Kernel::new();
    let mut seq = 0;
    loop {
        let mut line = String::new();
        match input.read_line(&mut line) {
            Ok(0) | Err(_) => return 0,
            Ok(_) => {}
        }
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<ExecRequest>(&line) {
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_string))
                    .unwrap_or_default();
                ExecResult::failure(id, "ProtocolError", format!("bad request: {e}"))
            }
            Ok(req) => {
                if let (Some(m), Op::Exec) = (&crash_marker, req.op) {
                    if req.code.as_deref().is_some_and(|c| c.contains(m.as_str())) {
                        std::process::exit(3);
                    }
                }
                let deadline =
                    Instant::now() + Duration::from_secs(req.timeout_s) + Duration::from_secs(5);
                let mut host = StdioHost {
                    input: &mut input,
                    out: &mut out,
                    seq,
                };
                let r = catch_unwind(AssertUnwindSafe(|| {
                    serve_request(&mut kernel, &req, &mut host, Some(deadline))
                }))
                .unwrap_or_else(|_| {
                    ExecResult::failure(&req.id, "InternalError", "the kernel panicked")
                });
                seq = host.seq;
                if req.op == Op::Shutdown {
                    let _ = out.write_all(to_line(&r).as_bytes());
                    let _ = out.flush();
                    return 0;
                }
                r
            }
        };
        if out
            .write_all(to_line(&reply).as_bytes())
            .and_then(|_| out.flush())
            .is_err()
        {
            return 1;
        }
    }
}

fn main() {
    let code = std::thread::Builder::new()
        .stack_size(minipy::RECOMMENDED_STACK)
        .spawn(serve)
        .expect("spawn worker thread")
        .join()
        .unwrap_or(1);
    std::process::exit(code);
}
