//! A persistent namespace that executes snippets one at a time.

use std::cell::RefCell;
use std::collections::HashMap;
use std::path::PathBuf;
use std::rc::Rc;
use std::time::Instant;

use crate::analysis::{top_level_functions, FunctionInfo, HOOKS};
use crate::ast::StmtKind;
use crate::interp::{exc, Flow, Host, Interp, Unwind, R};
use crate::parser::parse_module;
use crate::value::{exc_message, Dict, Key, Value};

/// Stack size callers should give the thread that runs a [`Kernel`].
pub const RECOMMENDED_STACK: usize = 256 << 20;

/// Captured stdout beyond this many bytes is dropped.
pub const DEFAULT_STDOUT_LIMIT: usize = 1 << 20;

pub const TRUNCATION_MARKER: &str = "\n...[stdout truncated]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorInfo {
    pub ty: String,
    pub message: String,
    pub traceback: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecOutcome {
    pub ok: bool,
    pub stdout: String,
    /// `repr` of a trailing expression statement, unless it evaluated to None.
    pub result_repr: Option<String>,
    pub final_answer: Option<String>,
    pub error: Option<ErrorInfo>,
    pub defined_functions: Vec<FunctionInfo>,
    pub timed_out: bool,
}

pub struct Kernel {
    globals: Rc<RefCell<HashMap<String, Value>>>,
    pub stdout_limit: usize,
    /// Base directory for relative paths in `open` and `os`.
    pub cwd: PathBuf,
}

impl Default for Kernel {
    fn default() -> Self {
        Self::new()
    }
}

impl Kernel {
    pub fn new() -> Self {
        let mut k = Kernel {
            globals: Rc::new(RefCell::new(HashMap::new())),
            stdout_limit: DEFAULT_STDOUT_LIMIT,
            cwd: PathBuf::from("."),
        };
        k.reset();
        k
    }

    /// Drops every user binding, keeping only the hooks.
    pub fn reset(&mut self) {
        let mut g = self.globals.borrow_mut();
        g.clear();
        for h in HOOKS {
            g.insert(h.to_string(), Value::Builtin(h));
        }
    }

    pub fn has(&self, name: &str) -> bool {
        self.globals.borrow().contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.globals.borrow().keys().cloned().collect();
        v.sort();
        v
    }

    /// Names bound to user-defined functions.
    pub fn function_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .globals
            .borrow()
            .iter()
            .filter(|(_, v)| matches!(v, Value::Function(_)))
            .map(|(k, _)| k.clone())
            .collect();
        v.sort();
        v
    }

    pub fn exec(
        &mut self,
        code: &str,
        deadline: Option<Instant>,
        host: &mut dyn Host,
    ) -> ExecOutcome {
        self.run(code, deadline, host, false)
    }

    /// Executes only the definitions and imports in `code`.
    pub fn load(&mut self, code: &str, host: &mut dyn Host) -> ExecOutcome {
        self.run(code, None, host, true)
    }

    fn run(
        &mut self,
        code: &str,
        deadline: Option<Instant>,
        host: &mut dyn Host,
        defs_only: bool,
    ) -> ExecOutcome {
        let module = match parse_module(code) {
            Ok(m) => m,
            Err(e) => {
                return ExecOutcome {
                    ok: false,
                    error: Some(ErrorInfo {
                        ty: e.kind.to_string(),
                        message: e.to_string(),
                        traceback: format!(
                            "  File \"<cell>\", line {}\n{}: {}",
                            e.line, e.kind, e.message
                        ),
                    }),
                    ..Default::default()
                }
            }
        };
        let mut interp = Interp::new(self.globals.clone(), host, deadline, self.stdout_limit);
        interp.cwd = self.cwd.clone();
        let mut last = None;
        let mut failure = None;
        let n = module.body.len();
        for (i, stmt) in module.body.iter().enumerate() {
            if defs_only
                && !matches!(
                    stmt.kind,
                    StmtKind::FunctionDef(_) | StmtKind::Import(_) | StmtKind::ImportFrom { .. }
                )
            {
                continue;
            }
            let r = match &stmt.kind {
                StmtKind::Expr(e) if i + 1 == n => interp.eval(e, &None).map(|v| {
                    last = Some(v);
                    Flow::Normal
                }),
                _ => interp.exec_stmt(stmt, &None),
            };
            match r {
                Ok(_) => {}
                Err(Unwind::Exc(mut e)) => {
                    interp.note_frame(&mut e, stmt.line);
                    failure = Some(Unwind::Exc(e));
                    break;
                }
                Err(Unwind::Timeout) => {
                    failure = Some(Unwind::Timeout);
                    break;
                }
            }
        }
        let mut stdout = std::mem::take(&mut interp.out);
        if interp.out_truncated {
            stdout.push_str(TRUNCATION_MARKER);
        }
        let final_answer = interp.final_answer.take();
        drop(interp);
        match failure {
            None => ExecOutcome {
                ok: true,
                stdout,
                result_repr: last.filter(|v| !matches!(v, Value::None)).map(|v| v.repr()),
                final_answer,
                error: None,
                defined_functions: top_level_functions(&module),
                timed_out: false,
            },
            Some(Unwind::Timeout) => ExecOutcome {
                ok: false,
                stdout,
                final_answer,
                error: Some(ErrorInfo {
                    ty: "Timeout".into(),
                    message: "execution timed out".into(),
                    traceback: String::new(),
                }),
                timed_out: true,
                ..Default::default()
            },
            Some(Unwind::Exc(e)) => {
                let message = exc_message(&e.value);
                let mut tb = String::from("Traceback (most recent call last):\n");
                for (name, line) in e.tb.iter().rev() {
                    tb.push_str(&format!("  File \"<cell>\", line {line}, in {name}\n"));
                }
                if message.is_empty() {
                    tb.push_str(&e.value.ty);
                } else {
                    tb.push_str(&format!("{}: {message}", e.value.ty));
                }
                ExecOutcome {
                    ok: false,
                    stdout,
                    final_answer,
                    error: Some(ErrorInfo {
                        ty: e.value.ty.to_string(),
                        message,
                        traceback: tb,
                    }),
                    ..Default::default()
                }
            }
        }
    }
}

/// Backs the `get_relevant_actions` hook: asks the host, defines any
/// returned function that is not already bound, and returns summaries.
pub fn retrieve_into(interp: &mut Interp, query: &str, k: Option<i64>) -> R<Value> {
    let results = interp
        .host
        .retrieve(query, k)
        .map_err(|m| exc("RuntimeError", m))?;
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        let bound = interp.globals.borrow().contains_key(&r.name);
        if !bound {
            if let Ok(m) = parse_module(&r.source) {
                for s in &m.body {
                    if matches!(
                        s.kind,
                        StmtKind::FunctionDef(_)
                            | StmtKind::Import(_)
                            | StmtKind::ImportFrom { .. }
                    ) {
                        if let Err(Unwind::Timeout) = interp.exec_stmt(s, &None) {
                            return Err(Unwind::Timeout);
                        }
                    }
                }
            }
        }
        let mut d = Dict::new();
        for (k, v) in [
            ("name", Value::str(&r.name)),
            ("docstring", Value::str(&r.docstring)),
            ("score", Value::Float(r.score)),
        ] {
            d.insert(Key::Str(Rc::from(k)), (Value::str(k), v));
        }
        out.push(Value::dict(d));
    }
    Ok(Value::list(out))
}
