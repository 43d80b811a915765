//! Domain types shared by every module. Nothing here touches the disk.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub question: String,
    #[serde(default)]
    pub attachments: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Human,
    Generated,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Human => "human",
            Origin::Generated => "generated",
        })
    }
}

/// UTC timestamps are kept at whole-second resolution.
pub fn now_utc() -> DateTime<Utc> {
    Utc::now().trunc_subsecs(0)
}

mod iso_seconds {
    use chrono::{DateTime, NaiveDateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    const FMT: &str = "%Y-%m-%dT%H:%M:%SZ";

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format(FMT).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        NaiveDateTime::parse_from_str(&raw, FMT)
            .map(|n| n.and_utc())
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub name: String,
    #[serde(default)]
    pub docstring: String,
    pub source: String,
    pub origin: Origin,
    #[serde(default)]
    pub created_by_task: Option<String>,
    #[serde(with = "iso_seconds")]
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default)]
    pub complexity: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("`{0}` is not a valid identifier")]
    BadName(String),
    #[error("action `{0}` has empty source")]
    EmptySource(String),
    #[error("generated action `{0}` has no docstring")]
    MissingDocstring(String),
    #[error("embedding of `{name}` has dimension {got}, expected {want}")]
    Dimension {
        name: String,
        got: usize,
        want: usize,
    },
    #[error("embedding of `{name}` has norm {norm}")]
    NotUnit { name: String, norm: f64 },
    #[error("complexity of `{0}` must be positive")]
    ZeroComplexity(String),
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}

impl ActionRecord {
    pub fn validate(&self, dimension: Option<usize>) -> Result<(), RecordError> {
        if !is_identifier(&self.name) {
            return Err(RecordError::BadName(self.name.clone()));
        }
        if self.source.trim().is_empty() {
            return Err(RecordError::EmptySource(self.name.clone()));
        }
        if self.origin == Origin::Generated && self.docstring.trim().is_empty() {
            return Err(RecordError::MissingDocstring(self.name.clone()));
        }
        if self.complexity == Some(0) {
            return Err(RecordError::ZeroComplexity(self.name.clone()));
        }
        if let Some(v) = &self.embedding {
            if let Some(want) = dimension {
                if v.len() != want {
                    return Err(RecordError::Dimension {
                        name: self.name.clone(),
                        got: v.len(),
                        want,
                    });
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(RecordError::NotUnit {
                    name: self.name.clone(),
                    norm,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    ExecError,
    ParseError,
    Timeout,
    /// The code was rejected before execution because generation is disabled.
    PolicyViolation,
}

impl fmt::Display for StepStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepStatus::Ok => "ok",
            StepStatus::ExecError => "exec_error",
            StepStatus::ParseError => "parse_error",
            StepStatus::Timeout => "timeout",
            StepStatus::PolicyViolation => "policy_violation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// 1-based.
    pub index: u32,
    pub thought: String,
    pub code: String,
    pub observation: String,
    pub status: StepStatus,
    #[serde(default)]
    pub defined_functions: Vec<ActionRecord>,
    pub is_novel: bool,
    #[serde(default)]
    pub final_answer: Option<String>,
}

impl Step {
    pub fn defined_names(&self) -> impl Iterator<Item = &str> {
        self.defined_functions.iter().map(|r| r.name.as_str())
    }
}

/// True when `step` defines a name that is not in `start_names`.
pub fn mark_novelty(step: &Step, start_names: &BTreeSet<String>) -> bool {
    step.defined_names().any(|n| !start_names.contains(n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub steps: Vec<Step>,
    pub final_answer: Option<String>,
    pub success: Option<bool>,
    pub config_snapshot: RunConfig,
    /// Set when the loop stopped for an infrastructure reason.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl Trajectory {
    /// Checks the structural invariants a finished trajectory must satisfy.
    pub fn check(&self) -> Result<(), String> {
        if self.steps.len() > self.config_snapshot.max_steps as usize {
            return Err(format!(
                "{} steps exceed max_steps {}",
                self.steps.len(),
                self.config_snapshot.max_steps
            ));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.index as usize != i + 1 {
                return Err(format!("step {} carries index {}", i + 1, s.index));
            }
            if s.status != StepStatus::Ok && !s.defined_functions.is_empty() {
                return Err(format!("step {} is not ok but lists definitions", s.index));
            }
            if s.final_answer.is_some() && i + 1 != self.steps.len() {
                return Err(format!(
                    "step {} carries a final answer but is not last",
                    s.index
                ));
            }
        }
        let last = self.steps.last().and_then(|s| s.final_answer.clone());
        if last != self.final_answer {
            return Err("final answer does not match the last step".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Test,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Train => "train",
            Phase::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub accumulate: bool,
    pub allow_generation: bool,
    pub load_initial_actions: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Flags {
            accumulate: true,
            allow_generation: true,
            load_initial_actions: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub max_steps: u32,
    pub temperature: f64,
    pub retrieval_k: u32,
    pub flags: Flags,
    pub phase: Phase,
    pub step_timeout_s: u64,
    pub observation_limit_chars: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_steps: 20,
            temperature: 0.5,
            retrieval_k: 10,
            flags: Flags::default(),
            phase: Phase::Train,
            step_timeout_s: 120,
            observation_limit_chars: 8192,
        }
    }
}

impl RunConfig {
    /// Defaults for `phase`, with accumulation off outside training.
    pub fn for_phase(phase: Phase) -> Self {
        let mut c = RunConfig {
            phase,
            ..Default::default()
        };
        c.flags.accumulate = phase == Phase::Train;
        c
    }

    /// Whether the loop may add to the library under this config.
    pub fn accumulates(&self) -> bool {
        self.phase == Phase::Train && self.flags.accumulate && self.flags.allow_generation
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

pub fn validate_config(cfg: RunConfig) -> Result<RunConfig, ConfigError> {
    if cfg.max_steps == 0 {
        return Err(ConfigError("max_steps must be positive".into()));
    }
    if !(0.0..=2.0).contains(&cfg.temperature) {
        return Err(ConfigError(format!(
            "temperature {} is outside [0, 2]",
            cfg.temperature
        )));
    }
    if cfg.retrieval_k == 0 {
        return Err(ConfigError("retrieval_k must be positive".into()));
    }
    if cfg.step_timeout_s == 0 {
        return Err(ConfigError("step_timeout_s must be positive".into()));
    }
    if cfg.observation_limit_chars == 0 {
        return Err(ConfigError(
            "observation_limit_chars must be positive".into(),
        ));
    }
    if !cfg.flags.allow_generation && cfg.flags.accumulate {
        return Err(ConfigError("accumulate requires allow_generation".into()));
    }
    if cfg.phase == Phase::Test && cfg.flags.accumulate {
        return Err(ConfigError(
            "accumulate must be off in the test phase".into(),
        ));
    }
    Ok(cfg)
}
