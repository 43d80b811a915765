//! Newline-delimited JSON messages exchanged with a kernel worker.

use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Exec,
    Analyze,
    Load,
    Reset,
    Ping,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecRequest {
    pub id: String,
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    pub timeout_s: u64,
}

impl ExecRequest {
    pub fn new(id: impl Into<String>, op: Op, code: Option<String>, timeout_s: u64) -> Self {
        ExecRequest {
            id: id.into(),
            op,
            code,
            timeout_s: timeout_s.max(1),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.timeout_s > 0
            && (!matches!(self.op, Op::Exec | Op::Analyze | Op::Load) || self.code.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPayload {
    #[serde(rename = "type")]
    pub ty: String,
    pub message: String,
    #[serde(default)]
    pub traceback: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinedFunction {
    pub name: String,
    #[serde(default)]
    pub docstring: String,
    pub source: String,
    #[serde(default)]
    pub complexity: Option<u32>,
}

/// Reply to an `analyze` request.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Analysis {
    /// Every function definition or lambda, at any depth.
    pub function_definitions: usize,
    /// Bare-name call targets other than builtins, hooks and imports.
    pub called_names: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecResult {
    pub id: String,
    pub ok: bool,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub result_repr: Option<String>,
    #[serde(default)]
    pub final_answer: Option<String>,
    #[serde(default)]
    pub error: Option<ErrorPayload>,
    #[serde(default)]
    pub defined_functions: Vec<DefinedFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<Analysis>,
    /// Protocol version, present on ping replies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<u32>,
}

impl ExecResult {
    pub fn success(id: impl Into<String>) -> Self {
        ExecResult {
            id: id.into(),
            ok: true,
            ..Default::default()
        }
    }

    pub fn failure(id: impl Into<String>, ty: &str, message: impl Into<String>) -> Self {
        ExecResult {
            id: id.into(),
            ok: false,
            error: Some(ErrorPayload {
                ty: ty.to_string(),
                message: message.into(),
                traceback: String::new(),
            }),
            ..Default::default()
        }
    }

    pub fn error_type(&self) -> Option<&str> {
        self.error.as_ref().map(|e| e.ty.as_str())
    }

    /// Checks the field-level contract of a reply.
    pub fn check(&self) -> Result<(), String> {
        if !self.ok && self.error.is_none() {
            return Err("failed result without error".into());
        }
        if self.final_answer.is_some() && !self.ok {
            return Err("final answer on a failed result".into());
        }
        if !self.ok && !self.defined_functions.is_empty() {
            return Err("failed result lists defined functions".into());
        }
        Ok(())
    }
}

/// Worker-to-client retrieval request sent while an `exec` is running.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Callback {
    pub op: String,
    pub id: String,
    pub kind: String,
    pub query: String,
    #[serde(default)]
    pub k: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallbackResult {
    pub name: String,
    pub docstring: String,
    pub source: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallbackReply {
    pub id: String,
    pub results: Vec<CallbackResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A line read from the worker.
#[derive(Debug, Clone, PartialEq)]
pub enum Incoming {
    Result(ExecResult),
    Callback(Callback),
}

pub fn parse_incoming(line: &str) -> Result<Incoming, String> {
    let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if v.get("op").and_then(|o| o.as_str()) == Some("callback") {
        serde_json::from_value(v)
            .map(Incoming::Callback)
            .map_err(|e| e.to_string())
    } else {
        serde_json::from_value(v)
            .map(Incoming::Result)
            .map_err(|e| e.to_string())
    }
}

/// Serializes to one line; JSON string escaping keeps newlines out.
pub fn to_line<T: Serialize>(msg: &T) -> String {
    let mut s = serde_json::to_string(msg).expect("protocol messages serialize");
    s.push('\n');
    s
}
