//! The agent loop: prompt, sample, execute, observe, accumulate.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{
    step_status, to_observation, truncate_chars, CallbackResult, Executor, RetrievalHandler,
};
use crate::gateway::{
    build_system_prompt, complete_with_retry, parse_response, render_response, signature_of,
    CallKey, ChatMessage, ChatProvider, PromptError, RetryPolicy,
};
use crate::metrics::score_answer;
use crate::registry::SharedLibrary;
use crate::types::{
    mark_novelty, now_utc, validate_config, ActionRecord, ConfigError, Origin, RunConfig, Step,
    StepStatus, TaskSpec, Trajectory,
};

pub const PARSE_ERROR_OBSERVATION: &str =
    "No code block found. Respond with one fenced code block.";

#[derive(Debug, Error)]
pub enum LoopError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("task `{task}` attachment {path} does not exist")]
    MissingAttachment { task: String, path: String },
}

pub struct LoopOptions {
    pub retry: RetryPolicy,
    pub sleep: fn(Duration),
    pub clock: fn() -> DateTime<Utc>,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions {
            retry: RetryPolicy::default(),
            sleep: std::thread::sleep,
            clock: now_utc,
        }
    }
}

/// A finished task together with the names known when it started.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRun {
    pub trajectory: Trajectory,
    pub start_action_names: BTreeSet<String>,
    pub expected_answer: Option<String>,
    /// Names added to the library during this task.
    pub accumulated: Vec<String>,
    /// Non-fatal problems such as storage or indexing failures.
    pub warnings: Vec<String>,
}

pub fn task_message(task: &TaskSpec) -> String {
    let mut s = format!("Task: {}", task.question.trim());
    if !task.attachments.is_empty() {
        s.push_str("\n\nAttached files:");
        for a in &task.attachments {
            let abs = fs::canonicalize(a).unwrap_or_else(|_| a.clone());
            s.push_str(&format!("\n- {}", abs.display()));
        }
    }
    s
}

/// Messages for step `steps.len() + 1`: system prompt, task, then each
/// earlier step as an assistant turn and its observation.
pub fn build_messages(system: &str, task: &TaskSpec, steps: &[Step]) -> Vec<ChatMessage> {
    let mut m = vec![
        ChatMessage::system(system),
        ChatMessage::user(task_message(task)),
    ];
    for s in steps {
        let code = (s.status != StepStatus::ParseError).then_some(s.code.as_str());
        m.push(ChatMessage::assistant(render_response(&s.thought, code)));
        let obs = if s.observation.is_empty() {
            "(no output)".to_string()
        } else {
            s.observation.clone()
        };
        m.push(ChatMessage::user(obs));
    }
    m
}

struct Retriever<'a> {
    library: &'a SharedLibrary,
    default_k: usize,
    reports: Vec<String>,
}

fn format_hits(query: &str, hits: &[CallbackResult], records: &[ActionRecord]) -> String {
    if hits.is_empty() {
        return format!("get_relevant_actions({query:?}): no actions found.");
    }
    let mut s = format!(
        "get_relevant_actions({query:?}) returned {} action(s), now callable:",
        hits.len()
    );
    for (h, r) in hits.iter().zip(records) {
        s.push_str(&format!(
            "\n\n{}  [score {:.4}]\n{}\n```python\n{}\n```",
            signature_of(r),
            h.score,
            h.docstring.trim(),
            h.source.trim_end()
        ));
    }
    s
}

impl RetrievalHandler for Retriever<'_> {
    fn retrieve(&mut self, query: &str, k: Option<i64>) -> Result<Vec<CallbackResult>, String> {
        let k = match k {
            None => self.default_k,
            Some(k) if k >= 1 => k as usize,
            Some(k) => return Err(format!("k must be a positive integer, got {k}")),
        };
        if query.trim().is_empty() {
            return Err("query must be a non-empty string".into());
        }
        let found = self.library.retrieve(query, k).map_err(|e| {
            let m = format!("action retrieval failed: {e}");
            self.reports.push(m.clone());
            m
        })?;
        let hits: Vec<CallbackResult> = found
            .iter()
            .map(|r| CallbackResult {
                name: r.record.name.clone(),
                docstring: r.record.docstring.clone(),
                source: r.record.source.clone(),
                score: r.score,
            })
            .collect();
        let records: Vec<ActionRecord> = found.into_iter().map(|r| r.record).collect();
        self.reports.push(format_hits(query, &hits, &records));
        Ok(hits)
    }
}

/// Why a snippet may not run when generation is disabled, if it may not.
fn policy_violation(
    exec: &mut dyn Executor,
    code: &str,
    human: &BTreeSet<String>,
) -> Option<String> {
    let analysis = match exec.analyze(code) {
        Ok(r) if r.ok => r.analysis,
        Ok(_) => return None,
        Err(e) => {
            tracing::warn!("worker analysis failed, using the local analyzer: {e}");
            None
        }
    };
    let (defs, called) = match analysis {
        Some(a) => (a.function_definitions, a.called_names),
        None => match minipy::analyze(code) {
            Ok(a) => (a.definition_count, a.called_names),
            Err(_) => return None,
        },
    };
    let unknown: Vec<String> = called.into_iter().filter(|n| !human.contains(n)).collect();
    if defs == 0 && unknown.is_empty() {
        return None;
    }
    let mut s = String::from("Policy violation: the code was not executed.");
    if defs > 0 {
        s.push_str(&format!(
            " Defining functions is disabled in this run ({defs} definition(s) found)."
        ));
    }
    if !unknown.is_empty() {
        s.push_str(&format!(" Unknown actions called: {}.", unknown.join(", ")));
    }
    s.push_str(" Use only the listed actions and built-in functions.");
    Some(s)
}

/// Runs one task to a final answer or the step limit.
pub fn run_task(
    task: &TaskSpec,
    config: &RunConfig,
    library: &SharedLibrary,
    provider: &dyn ChatProvider,
    exec: &mut dyn Executor,
    opts: &LoopOptions,
) -> Result<TaskRun, LoopError> {
    let config = validate_config(config.clone())?;
    for a in &task.attachments {
        if !a.exists() {
            return Err(LoopError::MissingAttachment {
                task: task.task_id.clone(),
                path: a.display().to_string(),
            });
        }
    }
    let (human, start_names, frozen) = {
        let lib = library.lock();
        (
            lib.human_actions().to_vec(),
            lib.snapshot_names(),
            lib.is_frozen(),
        )
    };
    let human_names: BTreeSet<String> = human.iter().map(|r| r.name.clone()).collect();
    let system = build_system_prompt(&human)?;
    let accumulate = config.accumulates() && !frozen;
    if let Err(e) = exec.reset() {
        tracing::warn!("kernel reset before task `{}` failed: {e}", task.task_id);
    }

    let mut steps: Vec<Step> = Vec::new();
    let mut aborted = None;
    let mut accumulated = Vec::new();
    let mut warnings = Vec::new();
    let timeout = Duration::from_secs(config.step_timeout_s);

    for index in 1..=config.max_steps {
        let messages = build_messages(&system, task, &steps);
        let key = CallKey {
            task_id: task.task_id.clone(),
            step: index,
        };
        let text = match complete_with_retry(provider, &key, &messages, &opts.retry, &opts.sleep) {
            Ok(t) => t,
            Err(e) => {
                aborted = Some(format!("provider error at step {index}: {e}"));
                break;
            }
        };
        let parsed = parse_response(&text);
        let mut step = Step {
            index,
            thought: parsed.thought,
            code: String::new(),
            observation: String::new(),
            status: StepStatus::ParseError,
            defined_functions: Vec::new(),
            is_novel: false,
            final_answer: None,
        };
        let Some(code) = parsed.code else {
            step.observation = PARSE_ERROR_OBSERVATION.to_string();
            steps.push(step);
            continue;
        };
        step.code = code;

        if !config.flags.allow_generation {
            if let Some(msg) = policy_violation(exec, &step.code, &human_names) {
                step.status = StepStatus::PolicyViolation;
                step.observation = msg;
                steps.push(step);
                continue;
            }
        }

        let mut retriever = Retriever {
            library,
            default_k: config.retrieval_k as usize,
            reports: Vec::new(),
        };
        let res = exec.execute(&step.code, timeout, &mut retriever);
        step.status = step_status(&res);
        let mut obs = to_observation(&res, usize::MAX);
        for r in &retriever.reports {
            if !obs.is_empty() && !obs.ends_with('\n') {
                obs.push('\n');
            }
            obs.push_str(r);
        }
        step.observation = truncate_chars(&obs, config.observation_limit_chars);
        if step.status == StepStatus::Ok {
            let now = (opts.clock)();
            step.defined_functions = res
                .defined_functions
                .iter()
                .map(|f| ActionRecord {
                    name: f.name.clone(),
                    docstring: f.docstring.clone(),
                    source: f.source.clone(),
                    origin: Origin::Generated,
                    created_by_task: Some(task.task_id.clone()),
                    created_at: now,
                    embedding: None,
                    complexity: f.complexity,
                })
                .collect();
            step.final_answer = res.final_answer.clone();
        }
        step.is_novel = mark_novelty(&step, &start_names);

        if accumulate && step.status == StepStatus::Ok && !step.defined_functions.is_empty() {
            match library.accumulate(&step, &task.task_id, (opts.clock)()) {
                Ok(out) => {
                    accumulated.extend(out.accepted.iter().map(|r| r.name.clone()));
                    if let Some(e) = out.storage_error {
                        tracing::error!("{e}");
                        warnings.push(e.to_string());
                    }
                }
                Err(e) => {
                    tracing::error!("{e}");
                    warnings.push(e.to_string());
                }
            }
        }

        let done = step.final_answer.is_some();
        steps.push(step);
        if done {
            break;
        }
    }

    let final_answer = steps.last().and_then(|s| s.final_answer.clone());
    let success = task
        .expected_answer
        .as_ref()
        .map(|exp| final_answer.as_ref().is_some_and(|p| score_answer(p, exp)));
    Ok(TaskRun {
        trajectory: Trajectory {
            task_id: task.task_id.clone(),
            steps,
            final_answer,
            success,
            config_snapshot: config,
            aborted,
        },
        start_action_names: start_names,
        expected_answer: task.expected_answer.clone(),
        accumulated,
        warnings,
    })
}

/// Trailing line of a trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub task_id: String,
    pub final_answer: Option<String>,
    pub success: Option<bool>,
    pub steps: usize,
    pub novel_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    pub start_action_names: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_answer: Option<String>,
    pub config_snapshot: RunConfig,
}

#[derive(Serialize, Deserialize)]
struct SummaryLine {
    summary: TrajectorySummary,
}

/// One JSON object per step, then `{"summary": {...}}`.
pub fn trajectory_log(run: &TaskRun) -> String {
    let t = &run.trajectory;
    let mut out = String::new();
    for s in &t.steps {
        out.push_str(&serde_json::to_string(s).expect("steps serialize"));
        out.push('\n');
    }
    let summary = SummaryLine {
        summary: TrajectorySummary {
            task_id: t.task_id.clone(),
            final_answer: t.final_answer.clone(),
            success: t.success,
            steps: t.steps.len(),
            novel_steps: t.steps.iter().filter(|s| s.is_novel).count(),
            aborted: t.aborted.clone(),
            start_action_names: run.start_action_names.clone(),
            expected_answer: run.expected_answer.clone(),
            config_snapshot: t.config_snapshot.clone(),
        },
    };
    out.push_str(&serde_json::to_string(&summary).expect("summary serializes"));
    out.push('\n');
    out
}

pub fn write_trajectory_log(run_dir: &Path, run: &TaskRun) -> std::io::Result<()> {
    let dir = run_dir.join("trajectories");
    fs::create_dir_all(&dir)?;
    fs::write(
        dir.join(format!("{}.jsonl", run.trajectory.task_id)),
        trajectory_log(run),
    )
}

/// Parses a log written by [`trajectory_log`].
pub fn parse_trajectory_log(text: &str) -> Result<TaskRun, String> {
    let mut steps = Vec::new();
    let mut summary = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if summary.is_some() {
            return Err(format!("line {}: content after the summary", i + 1));
        }
        if line.starts_with("{\"summary\"") {
            let s: SummaryLine =
                serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            summary = Some(s.summary);
        } else {
            steps.push(
                serde_json::from_str::<Step>(line).map_err(|e| format!("line {}: {e}", i + 1))?,
            );
        }
    }
    let s = summary.ok_or("missing summary line")?;
    if s.steps != steps.len() {
        return Err(format!(
            "summary counts {} steps, log has {}",
            s.steps,
            steps.len()
        ));
    }
    Ok(TaskRun {
        trajectory: Trajectory {
            task_id: s.task_id,
            steps,
            final_answer: s.final_answer,
            success: s.success,
            config_snapshot: s.config_snapshot,
            aborted: s.aborted,
        },
        start_action_names: s.start_action_names,
        expected_answer: s.expected_answer,
        accumulated: Vec::new(),
        warnings: Vec::new(),
    })
}
