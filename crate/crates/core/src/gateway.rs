//! Chat providers, system prompt assembly, and response parsing.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::types::ActionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpChat,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub transcript_path: Option<PathBuf>,
    #[serde(default)]
    pub record_path: Option<PathBuf>,
}

fn default_temperature() -> f64 {
    0.5
}

impl ProviderConfig {
    pub fn scripted(transcript: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            kind: ProviderKind::Scripted,
            endpoint_url: None,
            model_name: "scripted".into(),
            temperature: default_temperature(),
            transcript_path: Some(transcript.into()),
            record_path: None,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        match self.kind {
            ProviderKind::HttpChat if self.endpoint_url.is_none() => Err(ProviderError::Config(
                "http_chat provider needs endpoint_url".into(),
            )),
            ProviderKind::Scripted if self.transcript_path.is_none() => Err(ProviderError::Config(
                "scripted provider needs transcript_path".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("transcript has no entry for task `{task_id}` step {step}")]
    TranscriptExhausted { task_id: String, step: u32 },
    #[error("{0}")]
    Config(String),
}

impl ProviderError {
    /// Deterministic failures are not worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ProviderError::Http { .. } | ProviderError::Transport(_) | ProviderError::Malformed(_)
        )
    }
}

/// Identifies one model call within a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CallKey {
    pub task_id: String,
    pub step: u32,
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, key: &CallKey, messages: &[ChatMessage]) -> Result<String, ProviderError>;
}

const BODY_EXCERPT: usize = 512;

fn excerpt(s: &str) -> String {
    s.chars().take(BODY_EXCERPT).collect()
}

/// One line of a transcript or replay file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub task_id: String,
    pub step: u32,
    pub response: String,
}

/// Replays stored responses keyed by task and step.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    entries: HashMap<(String, u32), String>,
}

impl ScriptedProvider {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let mut map = HashMap::new();
        for e in entries {
            map.entry((e.task_id, e.step)).or_insert(e.response);
        }
        ScriptedProvider { entries: map }
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let file = File::open(path).map_err(|e| {
            ProviderError::Config(format!("cannot open transcript {}: {e}", path.display()))
        })?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line =
                line.map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: TranscriptEntry = serde_json::from_str(&line).map_err(|e| {
                ProviderError::Config(format!("{} line {}: {e}", path.display(), i + 1))
            })?;
            entries.push(e);
        }
        Ok(Self::new(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, key: &CallKey, _messages: &[ChatMessage]) -> Result<String, ProviderError> {
        self.entries
            .get(&(key.task_id.clone(), key.step))
            .cloned()
            .ok_or_else(|| ProviderError::TranscriptExhausted {
                task_id: key.task_id.clone(),
                step: key.step,
            })
    }
}

/// OpenAI-compatible chat completions over HTTP.
pub struct HttpChatProvider {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
}

/// Environment variable holding the chat endpoint's bearer token.
pub const CHAT_API_KEY_ENV: &str = "ACTKIT_CHAT_API_KEY";

pub(crate) fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build()
        .into()
}

/// POSTs `body` and returns the parsed JSON reply, mapping non-2xx to `Http`.
pub(crate) fn post_json(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &serde_json::Value,
) -> Result<serde_json::Value, ProviderError> {
    let mut req = agent.post(url);
    if let Some(k) = api_key {
        req = req.header("Authorization", &format!("Bearer {k}"));
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| ProviderError::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| ProviderError::Transport(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(ProviderError::Http {
            status,
            body: excerpt(&text),
        });
    }
    serde_json::from_str(&text)
        .map_err(|e| ProviderError::Malformed(format!("{e}: {}", excerpt(&text))))
}

impl HttpChatProvider {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, temperature: f64) -> Self {
        HttpChatProvider {
            agent: http_agent(Duration::from_secs(300)),
            endpoint: endpoint.into(),
            model: model.into(),
            temperature,
            api_key: std::env::var(CHAT_API_KEY_ENV).ok(),
        }
    }
}

impl ChatProvider for HttpChatProvider {
    fn complete(&self, _key: &CallKey, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": messages,
        });
        let v = post_json(&self.agent, &self.endpoint, self.api_key.as_deref(), &body)?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Malformed("no choices[0].message.content".into()))
    }
}

/// Appends every successful exchange to a replay file that
/// [`ScriptedProvider::load`] can read back.
pub struct RecordingProvider<P> {
    inner: P,
    out: Mutex<File>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn new(inner: P, path: &Path) -> std::io::Result<Self> {
        let out = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RecordingProvider {
            inner,
            out: Mutex::new(out),
        })
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn complete(&self, key: &CallKey, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        let response = self.inner.complete(key, messages)?;
        let line = json!({
            "task_id": key.task_id,
            "step": key.step,
            "request": messages,
            "response": response,
        });
        let mut f = self.out.lock().unwrap_or_else(|p| p.into_inner());
        if let Err(e) = writeln!(f, "{line}") {
            tracing::warn!("failed to append replay record: {e}");
        }
        Ok(response)
    }
}

impl ChatProvider for Box<dyn ChatProvider> {
    fn complete(&self, key: &CallKey, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        (**self).complete(key, messages)
    }
}

pub fn build_provider(cfg: &ProviderConfig) -> Result<Box<dyn ChatProvider>, ProviderError> {
    cfg.validate()?;
    let base: Box<dyn ChatProvider> = match cfg.kind {
        ProviderKind::Scripted => Box::new(ScriptedProvider::load(
            cfg.transcript_path.as_deref().unwrap(),
        )?),
        ProviderKind::HttpChat => Box::new(HttpChatProvider::new(
            cfg.endpoint_url.clone().unwrap(),
            cfg.model_name.clone(),
            cfg.temperature,
        )),
    };
    match &cfg.record_path {
        Some(p) => Ok(Box::new(RecordingProvider::new(base, p).map_err(|e| {
            ProviderError::Config(format!("{}: {e}", p.display()))
        })?)),
        None => Ok(base),
    }
}

/// Backoff schedule between attempts; the number of retries is `delays.len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub delays: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            delays: [1, 2, 4].into_iter().map(Duration::from_secs).collect(),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy { delays: Vec::new() }
    }
}

pub fn complete_with_retry(
    provider: &dyn ChatProvider,
    key: &CallKey,
    messages: &[ChatMessage],
    policy: &RetryPolicy,
    sleep: &dyn Fn(Duration),
) -> Result<String, ProviderError> {
    let mut attempt = 0;
    loop {
        match provider.complete(key, messages) {
            Ok(s) => return Ok(s),
            Err(e) if e.is_retryable() && attempt < policy.delays.len() => {
                tracing::warn!(task = %key.task_id, step = key.step, "provider call failed, retrying: {e}");
                sleep(policy.delays[attempt]);
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("action `{0}` has no docstring")]
pub struct PromptError(pub String);

/// `name(params) -> ret` from a function definition, whitespace collapsed.
pub fn signature_of(record: &ActionRecord) -> String {
    let src = &record.source;
    let needle = format!("def {}", record.name);
    let Some(start) = src.find(&needle) else {
        return format!("{}(...)", record.name);
    };
    let rest = &src[start + 4..];
    let mut depth = 0i32;
    let mut end = None;
    for (i, c) in rest.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ':' if depth == 0 => {
                end = Some(i);
                break;
            }
            _ => {}
        }
    }
    match end {
        Some(e) => rest[..e].split_whitespace().collect::<Vec<_>>().join(" "),
        None => format!("{}(...)", record.name),
    }
}

const PROMPT_HEAD: &str = "\
You solve tasks by writing code that runs in a persistent Python session.

Answer every message with one short paragraph of reasoning followed by exactly one fenced code block, like this:

I will add the two numbers and print the result.
```python
print(2 + 3)
```

Guidelines:
- Variables and functions you define stay available in later steps.
- Anything you print, and any error raised, is returned to you as the next message.
- When a reusable function would help, define it with a docstring that describes its purpose. Well-documented functions are kept for future tasks.
- Call get_relevant_actions(query, k) to find functions written for earlier tasks; the returned functions become callable right away.
- When you know the answer, call submit_final_answer(answer). This ends the task.
";

/// System prompt listing the human-designed actions in order.
pub fn build_system_prompt(human_actions: &[ActionRecord]) -> Result<String, PromptError> {
    let mut out = String::from(PROMPT_HEAD);
    out.push_str("\nAvailable actions:\n");
    if human_actions.is_empty() {
        out.push_str("(none)\n");
    }
    for a in human_actions {
        let doc = a.docstring.trim();
        if doc.is_empty() {
            return Err(PromptError(a.name.clone()));
        }
        out.push_str(&format!("- {}\n", signature_of(a)));
        for line in doc.lines() {
            out.push_str("    ");
            out.push_str(line.trim_end());
            out.push('\n');
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub thought: String,
    pub code: Option<String>,
}

fn is_fence(line: &str) -> bool {
    line.starts_with("```")
}

/// Splits model output into the thought before the first fence and the
/// body of the first complete fenced block.
pub fn parse_response(text: &str) -> ParsedResponse {
    let lines: Vec<&str> = text.split('\n').collect();
    let Some(open) = lines.iter().position(|l| is_fence(l)) else {
        return ParsedResponse {
            thought: text.trim().to_string(),
            code: None,
        };
    };
    let thought = lines[..open].join("\n").trim().to_string();
    let close = lines[open + 1..]
        .iter()
        .position(|l| l.trim_end() == "```")
        .map(|i| i + open + 1);
    let code = close.map(|c| {
        lines[open + 1..c]
            .iter()
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .collect::<Vec<_>>()
            .join("\n")
    });
    ParsedResponse { thought, code }
}

/// Renders an assistant turn the way the parser reads it back.
pub fn render_response(thought: &str, code: Option<&str>) -> String {
    match code {
        Some(c) if thought.is_empty() => format!("```python\n{c}\n```"),
        Some(c) => format!("{thought}\n```python\n{c}\n```"),
        None => thought.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Origin;
    use chrono::DateTime;

    fn rec(name: &str, doc: &str, src: &str) -> ActionRecord {
        ActionRecord {
            name: name.into(),
            docstring: doc.into(),
            source: src.into(),
            origin: Origin::Human,
            created_by_task: None,
            created_at: DateTime::from_timestamp(0, 0).unwrap(),
            embedding: None,
            complexity: None,
        }
    }

    #[test]
    fn parses_first_fence() {
        let p = parse_response("I will compute X.\n```\nprint(1)\n```");
        assert_eq!(p.thought, "I will compute X.");
        assert_eq!(p.code.as_deref(), Some("print(1)"));

        let p = parse_response("no code here");
        assert_eq!(p.thought, "no code here");
        assert_eq!(p.code, None);

        let p = parse_response("a\n```python\nx = 1\n```\nb\n```\ny = 2\n```\n");
        assert_eq!(p.code.as_deref(), Some("x = 1"));

        let p = parse_response("unterminated\n```python\nx = 1\n");
        assert_eq!(p.thought, "unterminated");
        assert_eq!(p.code, None);
    }

    #[test]
    fn signatures() {
        let r = rec(
            "download_file",
            "d",
            "def download_file(url: str,\n                  path=None) -> str:\n    pass",
        );
        assert_eq!(
            signature_of(&r),
            "download_file(url: str, path=None) -> str"
        );
        let r = rec("f", "d", "x = 1");
        assert_eq!(signature_of(&r), "f(...)");
    }

    #[test]
    fn prompt_requires_docstrings() {
        let err = build_system_prompt(&[rec("f", "  ", "def f():\n    pass")]).unwrap_err();
        assert_eq!(err, PromptError("f".into()));
        let empty = build_system_prompt(&[]).unwrap();
        assert!(empty.contains("(none)"));
        assert!(empty.contains("submit_final_answer(answer)"));
        assert!(empty.contains("exactly one fenced code block"));
    }

    #[test]
    fn retries_follow_the_schedule() {
        struct Flaky(Mutex<u32>);
        impl ChatProvider for Flaky {
            fn complete(&self, _: &CallKey, _: &[ChatMessage]) -> Result<String, ProviderError> {
                let mut n = self.0.lock().unwrap();
                *n += 1;
                if *n < 4 {
                    Err(ProviderError::Transport("down".into()))
                } else {
                    Ok("ok".into())
                }
            }
        }
        let key = CallKey {
            task_id: "t".into(),
            step: 1,
        };
        let slept = Mutex::new(Vec::new());
        let p = Flaky(Mutex::new(0));
        let out = complete_with_retry(&p, &key, &[], &RetryPolicy::default(), &|d| {
            slept.lock().unwrap().push(d)
        });
        assert_eq!(out.unwrap(), "ok");
        let secs: Vec<u64> = slept.lock().unwrap().iter().map(|d| d.as_secs()).collect();
        assert_eq!(secs, vec![1, 2, 4]);

        let p = Flaky(Mutex::new(0));
        let out = complete_with_retry(
            &p,
            &key,
            &[],
            &RetryPolicy {
                delays: vec![Duration::ZERO; 2],
            },
            &|_| {},
        );
        assert!(matches!(out, Err(ProviderError::Transport(_))));
    }

    #[test]
    fn exhaustion_is_not_retried() {
        let p = ScriptedProvider::default();
        let key = CallKey {
            task_id: "t".into(),
            step: 3,
        };
        let calls = Mutex::new(0);
        let out = complete_with_retry(&p, &key, &[], &RetryPolicy::default(), &|_| {
            *calls.lock().unwrap() += 1
        });
        assert!(matches!(
            out,
            Err(ProviderError::TranscriptExhausted { step: 3, .. })
        ));
        assert_eq!(*calls.lock().unwrap(), 0);
    }
}
