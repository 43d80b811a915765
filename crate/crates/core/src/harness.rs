//! Dataset ingestion, phase runs, reports and library management behind the
//! command-line front end.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{Executor, ExecutorError, MockExecutor, ProcessExecutor, WorkerCommand};
use crate::gateway::{build_provider, ChatProvider, ProviderConfig, ProviderError, ProviderKind};
use crate::metrics::{
    complexity_summary, coverage_curve, coverage_curve_csv, CoverageReport, ScoreReport,
};
use crate::orchestrator::{
    parse_trajectory_log, run_task, write_trajectory_log, LoopError, LoopOptions, TaskRun,
};
use crate::registry::{
    install_plugins, load_initial_actions, ActionLibrary, Manifest, RegistryError, SharedLibrary,
};
use crate::retrieval::{
    Embedder, EmbedderKind, EmbeddingIndex, HttpEmbedder, IndexError, TrigramEmbedder,
    DETERMINISTIC_DIM,
};
use crate::types::{validate_config, ActionRecord, ConfigError, Flags, Phase, RunConfig, TaskSpec};

pub const DEFAULT_WORKER_CMD: &str = "python3 -m actkit_worker";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("dataset line {line}: {message}")]
    Line { line: usize, message: String },
}

impl DatasetError {
    pub fn line(&self) -> Option<usize> {
        match self {
            DatasetError::Line { line, .. } => Some(*line),
            DatasetError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub path: PathBuf,
    pub tasks: Vec<TaskSpec>,
}

impl Dataset {
    /// Reads a JSONL task file. Relative attachment paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|e| DatasetError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let tasks = Self::parse(&text, base)?;
        Ok(Dataset {
            path: path.to_path_buf(),
            tasks,
        })
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Vec<TaskSpec>, DatasetError> {
        let mut tasks = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let err = |message: String| DatasetError::Line { line, message };
            let mut t: TaskSpec = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
            if t.task_id.trim().is_empty() {
                return Err(err("task_id is empty".into()));
            }
            if t.task_id.contains(['/', '\\']) || t.task_id.starts_with('.') {
                return Err(err(format!(
                    "task_id `{}` cannot be used as a file name",
                    t.task_id
                )));
            }
            if t.question.trim().is_empty() {
                return Err(err("question is empty".into()));
            }
            if !ids.insert(t.task_id.clone()) {
                return Err(err(format!("duplicate task_id `{}`", t.task_id)));
            }
            for a in &mut t.attachments {
                if a.is_relative() {
                    *a = base_dir.join(&*a);
                }
                if !a.exists() {
                    return Err(err(format!("attachment {} does not exist", a.display())));
                }
            }
            tasks.push(t);
        }
        Ok(tasks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderChoice {
    Http,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderChoice {
    Deterministic,
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlagSettings {
    pub accumulate: Option<bool>,
    pub allow_generation: Option<bool>,
    pub load_initial_actions: Option<bool>,
}

/// Run settings as given by a config file or by command-line flags. Every
/// field is optional; [`Settings::merge`] layers one source over another.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub max_steps: Option<u32>,
    pub temperature: Option<f64>,
    pub retrieval_k: Option<u32>,
    pub step_timeout_s: Option<u64>,
    pub observation_limit_chars: Option<usize>,
    pub phase: Option<Phase>,
    #[serde(default)]
    pub flags: FlagSettings,
    pub provider: Option<ProviderChoice>,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub transcript: Option<PathBuf>,
    pub record_transcript: Option<PathBuf>,
    pub embedder: Option<EmbedderChoice>,
    pub embedding_endpoint: Option<String>,
    pub embedding_model: Option<String>,
    pub embedding_dim: Option<usize>,
    pub mock_executor: Option<bool>,
    pub worker_cmd: Option<String>,
    pub parallel: Option<usize>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// Fields set in `self` win over those in `lower`.
    pub fn merge(self, lower: Settings) -> Settings {
        Settings {
            max_steps: self.max_steps.or(lower.max_steps),
            temperature: self.temperature.or(lower.temperature),
            retrieval_k: self.retrieval_k.or(lower.retrieval_k),
            step_timeout_s: self.step_timeout_s.or(lower.step_timeout_s),
            observation_limit_chars: self
                .observation_limit_chars
                .or(lower.observation_limit_chars),
            phase: self.phase.or(lower.phase),
            flags: FlagSettings {
                accumulate: self.flags.accumulate.or(lower.flags.accumulate),
                allow_generation: self.flags.allow_generation.or(lower.flags.allow_generation),
                load_initial_actions: self
                    .flags
                    .load_initial_actions
                    .or(lower.flags.load_initial_actions),
            },
            provider: self.provider.or(lower.provider),
            endpoint_url: self.endpoint_url.or(lower.endpoint_url),
            model_name: self.model_name.or(lower.model_name),
            transcript: self.transcript.or(lower.transcript),
            record_transcript: self.record_transcript.or(lower.record_transcript),
            embedder: self.embedder.or(lower.embedder),
            embedding_endpoint: self.embedding_endpoint.or(lower.embedding_endpoint),
            embedding_model: self.embedding_model.or(lower.embedding_model),
            embedding_dim: self.embedding_dim.or(lower.embedding_dim),
            mock_executor: self.mock_executor.or(lower.mock_executor),
            worker_cmd: self.worker_cmd.or(lower.worker_cmd),
            parallel: self.parallel.or(lower.parallel),
        }
    }

    pub fn resolve_embedder(&self) -> Result<EmbedderSettings, ConfigError> {
        Ok(
            match self.embedder.unwrap_or(EmbedderChoice::Deterministic) {
                EmbedderChoice::Deterministic => {
                    if self.embedding_dim.is_some_and(|d| d != DETERMINISTIC_DIM) {
                        return Err(ConfigError(format!(
                            "the deterministic embedder has dimension {DETERMINISTIC_DIM}"
                        )));
                    }
                    EmbedderSettings::Deterministic
                }
                EmbedderChoice::Remote => EmbedderSettings::Remote {
                    endpoint: self.embedding_endpoint.clone().ok_or_else(|| {
                        ConfigError("the remote embedder needs embedding_endpoint".into())
                    })?,
                    model: self.embedding_model.clone().ok_or_else(|| {
                        ConfigError("the remote embedder needs embedding_model".into())
                    })?,
                    dim: self.embedding_dim.filter(|d| *d > 0).ok_or_else(|| {
                        ConfigError("the remote embedder needs a positive embedding_dim".into())
                    })?,
                },
            },
        )
    }

    /// Fills defaults and checks the combination.
    pub fn resolve(&self) -> Result<EffectiveConfig, ConfigError> {
        let phase = self.phase.unwrap_or(Phase::Train);
        let base = RunConfig::for_phase(phase);
        let allow_generation = self
            .flags
            .allow_generation
            .unwrap_or(base.flags.allow_generation);
        let run = validate_config(RunConfig {
            max_steps: self.max_steps.unwrap_or(base.max_steps),
            temperature: self.temperature.unwrap_or(base.temperature),
            retrieval_k: self.retrieval_k.unwrap_or(base.retrieval_k),
            step_timeout_s: self.step_timeout_s.unwrap_or(base.step_timeout_s),
            observation_limit_chars: self
                .observation_limit_chars
                .unwrap_or(base.observation_limit_chars),
            phase,
            flags: Flags {
                // Nothing can be accumulated without generation, so turning
                // generation off also turns the default accumulation off.
                accumulate: self
                    .flags
                    .accumulate
                    .unwrap_or(base.flags.accumulate && allow_generation),
                allow_generation,
                load_initial_actions: self
                    .flags
                    .load_initial_actions
                    .unwrap_or(base.flags.load_initial_actions),
            },
        })?;

        let kind = match (self.provider, &self.transcript) {
            (Some(ProviderChoice::Scripted), _) | (None, Some(_)) => ProviderKind::Scripted,
            (Some(ProviderChoice::Http), _) | (None, None) => ProviderKind::HttpChat,
        };
        let provider = ProviderConfig {
            kind,
            endpoint_url: self.endpoint_url.clone(),
            model_name: self.model_name.clone().unwrap_or_else(|| match kind {
                ProviderKind::Scripted => "scripted".into(),
                ProviderKind::HttpChat => String::new(),
            }),
            temperature: run.temperature,
            transcript_path: self.transcript.clone(),
            record_path: self.record_transcript.clone(),
        };
        provider
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        if kind == ProviderKind::HttpChat && provider.model_name.is_empty() {
            return Err(ConfigError("the http provider needs model_name".into()));
        }

        let embedder = self.resolve_embedder()?;

        let executor = if self.mock_executor.unwrap_or(false) {
            ExecutorSettings::Mock
        } else {
            let line = self
                .worker_cmd
                .clone()
                .unwrap_or_else(|| DEFAULT_WORKER_CMD.to_string());
            ExecutorSettings::Worker(
                WorkerCommand::parse(&line)
                    .ok_or_else(|| ConfigError("worker_cmd is empty".into()))?,
            )
        };
        let parallel = self.parallel.unwrap_or(1);
        if parallel == 0 {
            return Err(ConfigError("parallel must be at least 1".into()));
        }
        Ok(EffectiveConfig {
            run,
            provider,
            embedder,
            executor,
            parallel,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EmbedderSettings {
    Deterministic,
    Remote {
        endpoint: String,
        model: String,
        dim: usize,
    },
}

impl EmbedderSettings {
    pub fn dimension(&self) -> usize {
        match self {
            EmbedderSettings::Deterministic => DETERMINISTIC_DIM,
            EmbedderSettings::Remote { dim, .. } => *dim,
        }
    }

    pub fn kind(&self) -> EmbedderKind {
        match self {
            EmbedderSettings::Deterministic => EmbedderKind::DeterministicTest,
            EmbedderSettings::Remote { .. } => EmbedderKind::Remote,
        }
    }

    pub fn build(&self) -> Arc<dyn Embedder> {
        match self {
            EmbedderSettings::Deterministic => Arc::new(TrigramEmbedder),
            EmbedderSettings::Remote {
                endpoint,
                model,
                dim,
            } => Arc::new(HttpEmbedder::new(endpoint, model, *dim)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutorSettings {
    Mock,
    Worker(WorkerCommand),
}

impl ExecutorSettings {
    pub fn start(&self, human: &[ActionRecord]) -> Result<Box<dyn Executor>, ExecutorError> {
        Ok(match self {
            ExecutorSettings::Mock => Box::new(MockExecutor::start(human)?),
            ExecutorSettings::Worker(cmd) => Box::new(ProcessExecutor::start(cmd.clone(), human)?),
        })
    }
}

/// Fully resolved settings, written to `effective_config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveConfig {
    pub run: RunConfig,
    pub provider: ProviderConfig,
    pub embedder: EmbedderSettings,
    pub executor: ExecutorSettings,
    pub parallel: usize,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Executor(#[from] ExecutorError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// JSON with object keys in sorted order, pretty-printed, newline-terminated.
pub fn sorted_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("report values serialize");
    let mut s = serde_json::to_string_pretty(&v).expect("json values serialize");
    s.push('\n');
    s
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// `manifest.json` of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub phase: Phase,
    pub dataset: PathBuf,
    pub library_dir: PathBuf,
    pub tasks: Vec<String>,
    pub aborted: Vec<String>,
    pub library: Manifest,
    /// The action set at the end of the run.
    pub actions: Vec<ActionRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub runs: Vec<TaskRun>,
    pub manifest: RunManifest,
    pub report: ReportOutcome,
}

impl RunOutcome {
    /// 0 on completion, 2 when any task was cut short by its provider.
    pub fn exit_code(&self) -> i32 {
        if self.manifest.aborted.is_empty() {
            0
        } else {
            2
        }
    }
}

type OpenedLibrary = (ActionLibrary, EmbeddingIndex<f64>, Arc<dyn Embedder>);

fn open_library(library_dir: &Path, cfg: &EffectiveConfig) -> Result<OpenedLibrary, HarnessError> {
    let (mut lib, problems) =
        load_initial_actions(library_dir, cfg.run.flags.load_initial_actions)?;
    for p in problems {
        tracing::warn!("{p}");
    }
    let mut index =
        EmbeddingIndex::<f64>::open(library_dir, cfg.embedder.dimension(), cfg.embedder.kind())?;
    let embedder = cfg.embedder.build();
    match cfg.run.phase {
        Phase::Train => {
            lib.thaw()?;
            let missing: Vec<ActionRecord> = lib
                .generated_actions()
                .values()
                .filter(|r| index.get(&r.name).is_none())
                .cloned()
                .collect();
            for r in missing {
                if let Err(e) = index.index_action(embedder.as_ref(), &r) {
                    tracing::warn!("cannot index `{}`: {e}", r.name);
                }
            }
        }
        Phase::Test => {
            lib.set_read_only();
            lib.freeze()?;
        }
    }
    Ok((lib, index, embedder))
}

/// Runs every task of `dataset` in order and writes the run directory.
pub fn cmd_run(
    dataset: &Dataset,
    cfg: &EffectiveConfig,
    library_dir: &Path,
    out_dir: &Path,
    opts: &LoopOptions,
) -> Result<RunOutcome, HarnessError> {
    let provider = build_provider(&cfg.provider)?;
    cmd_run_with(dataset, cfg, library_dir, out_dir, provider.as_ref(), opts)
}

/// [`cmd_run`] with a caller-supplied provider.
pub fn cmd_run_with(
    dataset: &Dataset,
    cfg: &EffectiveConfig,
    library_dir: &Path,
    out_dir: &Path,
    provider: &dyn ChatProvider,
    opts: &LoopOptions,
) -> Result<RunOutcome, HarnessError> {
    validate_config(cfg.run.clone())?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    write_file(&out_dir.join("effective_config.json"), &sorted_json(cfg))?;

    let (lib, index, embedder) = open_library(library_dir, cfg)?;
    let human = lib.human_actions().to_vec();
    let shared = SharedLibrary::new(lib, index, embedder);

    let workers = cfg.parallel.min(dataset.tasks.len()).max(1);
    let mut executors = Vec::with_capacity(workers);
    for _ in 0..workers {
        executors.push(cfg.executor.start(&human)?);
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<TaskRun, LoopError>>>> =
        Mutex::new((0..dataset.tasks.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for exec in executors.iter_mut() {
            let (next, results, shared) = (&next, &results, &shared);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = dataset.tasks.get(i) else {
                    break;
                };
                tracing::info!("task {} ({}/{})", task.task_id, i + 1, dataset.tasks.len());
                let r = run_task(task, &cfg.run, shared, provider, exec.as_mut(), opts);
                if let Ok(run) = &r {
                    if let Err(e) = write_trajectory_log(out_dir, run) {
                        tracing::error!("cannot write trajectory for {}: {e}", task.task_id);
                    }
                }
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    for mut e in executors {
        let _ = e.shutdown();
    }

    let mut runs = Vec::new();
    for r in results.into_inner().unwrap_or_else(|e| e.into_inner()) {
        runs.push(r.expect("every task ran")?);
    }
    for r in &runs {
        if let Some(w) = r.warnings.first() {
            tracing::warn!("{}: {w}", r.trajectory.task_id);
        }
    }

    let (mut lib, _index) = shared.into_parts();
    if cfg.run.phase == Phase::Train {
        lib.freeze()?;
    }
    let manifest = RunManifest {
        version: 1,
        phase: cfg.run.phase,
        dataset: dataset.path.clone(),
        library_dir: library_dir.to_path_buf(),
        tasks: dataset.tasks.iter().map(|t| t.task_id.clone()).collect(),
        aborted: runs
            .iter()
            .filter(|r| r.trajectory.aborted.is_some())
            .map(|r| r.trajectory.task_id.clone())
            .collect(),
        library: lib.manifest(),
        actions: lib
            .human_actions()
            .iter()
            .chain(lib.generated_actions().values())
            .cloned()
            .collect(),
    };
    write_file(&out_dir.join("manifest.json"), &sorted_json(&manifest))?;
    let report = cmd_report(out_dir);
    Ok(RunOutcome {
        runs,
        manifest,
        report,
    })
}

/// Result of a report or library command: exit code and printable text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReportOutcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Reads the trajectory logs in `run_dir` in file-name order.
pub fn read_run(run_dir: &Path) -> Result<(Vec<TaskRun>, Vec<String>), String> {
    let dir = run_dir.join("trajectories");
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    for f in files {
        match fs::read_to_string(&f)
            .map_err(|e| e.to_string())
            .and_then(|t| parse_trajectory_log(&t))
        {
            Ok(r) => runs.push(r),
            Err(e) => errors.push(format!("{}: {e}", f.display())),
        }
    }
    Ok((runs, errors))
}

/// Writes `reports/` for a run directory and prints a summary.
pub fn cmd_report(run_dir: &Path) -> ReportOutcome {
    let mut out = ReportOutcome::default();
    let (runs, mut errors) = match read_run(run_dir) {
        Ok(r) => r,
        Err(e) => {
            out.code = 1;
            out.stderr = format!("no trajectory logs found: {e}\n");
            return out;
        }
    };
    if runs.is_empty() {
        out.code = 1;
        out.stderr = format!(
            "no trajectory logs found under {}\n",
            run_dir.join("trajectories").display()
        );
        for e in errors {
            let _ = writeln!(out.stderr, "{e}");
        }
        return out;
    }
    let manifest: Option<RunManifest> = match fs::read_to_string(run_dir.join("manifest.json")) {
        Ok(t) => match serde_json::from_str(&t) {
            Ok(m) => Some(m),
            Err(e) => {
                errors.push(format!("manifest.json: {e}"));
                None
            }
        },
        Err(e) => {
            errors.push(format!("manifest.json: {e}"));
            None
        }
    };
    let reports = run_dir.join("reports");

    let library_size = manifest
        .as_ref()
        .map(|m| m.actions.len())
        .unwrap_or_else(|| {
            runs.iter()
                .map(|r| r.start_action_names.len())
                .max()
                .unwrap_or(0)
        });
    let coverage = CoverageReport::build(
        runs.iter().map(|r| (&r.trajectory, &r.start_action_names)),
        library_size,
    );
    let curve_input: Vec<_> = runs
        .iter()
        .filter_map(|r| {
            coverage
                .per_task
                .get(&r.trajectory.task_id)
                .map(|c| (r.start_action_names.len(), *c))
        })
        .collect();
    let curve = coverage_curve(&curve_input);
    let scores = ScoreReport::build(
        runs.iter()
            .map(|r| (&r.trajectory, r.expected_answer.as_deref())),
    );

    let mut written = vec![
        (reports.join("coverage.json"), sorted_json(&coverage)),
        (
            reports.join("coverage_curve.csv"),
            coverage_curve_csv(&curve),
        ),
        (reports.join("scores.json"), sorted_json(&scores)),
    ];
    if let Some(m) = &manifest {
        written.push((
            reports.join("complexity.json"),
            sorted_json(&complexity_summary(&m.actions)),
        ));
    } else {
        errors.push("complexity report skipped: the run manifest is unavailable".into());
    }
    for (path, text) in written {
        if let Err(e) = write_file(&path, &text) {
            errors.push(e.to_string());
        }
    }

    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    let _ = writeln!(out.stdout, "{:<28} {}", "tasks", scores.tasks);
    let _ = writeln!(
        out.stdout,
        "{:<28} {}",
        "success rate (%)",
        scores
            .accuracy
            .map_or("n/a".to_string(), |v| format!("{v:.2}"))
    );
    let _ = writeln!(
        out.stdout,
        "{:<28} {}",
        "mean coverage",
        fmt(coverage.mean_success_conditioned)
    );
    let _ = writeln!(
        out.stdout,
        "{:<28} {}",
        "mean coverage (literal)",
        fmt(coverage.mean_literal)
    );
    let _ = writeln!(out.stdout, "{:<28} {}", "library size", library_size);
    for e in &errors {
        let _ = writeln!(out.stderr, "report error: {e}");
    }
    if !errors.is_empty() {
        out.code = 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LibraryCommand {
    List,
    Show(String),
    Verify,
    InstallPlugins,
}

/// Inspects or maintains the library at `library_dir`.
pub fn cmd_library(
    library_dir: &Path,
    cmd: &LibraryCommand,
    embedder: &EmbedderSettings,
) -> ReportOutcome {
    let mut out = ReportOutcome::default();
    let fail = |out: &mut ReportOutcome, msg: String| {
        out.code = 1;
        out.stderr.push_str(&msg);
        out.stderr.push('\n');
    };
    if *cmd == LibraryCommand::InstallPlugins {
        match install_plugins(library_dir) {
            Ok(names) if names.is_empty() => out.stdout.push_str("all plugins already installed\n"),
            Ok(names) => {
                for n in names {
                    let _ = writeln!(out.stdout, "installed {n}");
                }
            }
            Err(e) => fail(&mut out, e.to_string()),
        }
        return out;
    }
    let (mut lib, problems) = match load_initial_actions(library_dir, true) {
        Ok(x) => x,
        Err(e) => {
            fail(&mut out, e.to_string());
            return out;
        }
    };
    lib.set_read_only();
    match cmd {
        LibraryCommand::List => {
            let _ = writeln!(out.stdout, "{:<32} {:<10} complexity", "name", "origin");
            for r in lib
                .human_actions()
                .iter()
                .chain(lib.generated_actions().values())
            {
                let c =
                    crate::metrics::record_complexity(r).map_or("?".to_string(), |c| c.to_string());
                let _ = writeln!(out.stdout, "{:<32} {:<10} {}", r.name, r.origin, c);
            }
        }
        LibraryCommand::Show(name) => match lib.get(name) {
            Some(r) => {
                let _ = writeln!(out.stdout, "{}", r.docstring.trim());
                let _ = writeln!(out.stdout, "\n{}", r.source.trim_end());
            }
            None => fail(&mut out, format!("no action named `{name}`")),
        },
        LibraryCommand::Verify => {
            let mut violations: Vec<String> = problems.iter().map(|p| p.to_string()).collect();
            match EmbeddingIndex::<f64>::open(library_dir, embedder.dimension(), embedder.kind()) {
                Ok(index) => violations.extend(lib.verify(&index)),
                Err(e) => violations.push(format!("index unreadable: {e}")),
            }
            if violations.is_empty() {
                let _ = writeln!(out.stdout, "ok: {} actions", lib.len());
            } else {
                for v in violations {
                    fail(&mut out, v);
                }
            }
        }
        LibraryCommand::InstallPlugins => unreachable!(),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_reports_bad_line() {
        let text = "{\"task_id\":\"a\",\"question\":\"q\"}\n{\"task_id\":\"b\",\"question\":\"q\"}\n{oops\n";
        let e = Dataset::parse(text, Path::new(".")).unwrap_err();
        assert_eq!(e.line(), Some(3));
    }

    #[test]
    fn dataset_rejects_duplicates_and_missing_fields() {
        let dup =
            "{\"task_id\":\"a\",\"question\":\"q\"}\n{\"task_id\":\"a\",\"question\":\"r\"}\n";
        assert_eq!(
            Dataset::parse(dup, Path::new(".")).unwrap_err().line(),
            Some(2)
        );
        let missing = "{\"task_id\":\"a\"}\n";
        assert_eq!(
            Dataset::parse(missing, Path::new(".")).unwrap_err().line(),
            Some(1)
        );
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let file = Settings {
            max_steps: Some(7),
            retrieval_k: Some(3),
            transcript: Some("t.jsonl".into()),
            ..Default::default()
        };
        let flags = Settings {
            max_steps: Some(5),
            ..Default::default()
        };
        let eff = flags.merge(file).resolve().unwrap();
        assert_eq!(eff.run.max_steps, 5);
        assert_eq!(eff.run.retrieval_k, 3);
        assert_eq!(eff.run.temperature, 0.5);
        assert_eq!(eff.provider.kind, ProviderKind::Scripted);
    }

    #[test]
    fn test_phase_turns_accumulation_off() {
        let s = Settings {
            phase: Some(Phase::Test),
            transcript: Some("t".into()),
            ..Default::default()
        };
        assert!(!s.resolve().unwrap().run.flags.accumulate);
        let bad = Settings {
            flags: FlagSettings {
                accumulate: Some(true),
                ..Default::default()
            },
            ..s
        };
        assert!(bad.resolve().is_err());
    }

    #[test]
    fn no_generation_implies_no_accumulation() {
        let s = Settings {
            flags: FlagSettings {
                allow_generation: Some(false),
                ..Default::default()
            },
            transcript: Some("t".into()),
            ..Default::default()
        };
        let run = s.resolve().unwrap().run;
        assert!(!run.flags.accumulate && !run.flags.allow_generation);
    }

    #[test]
    fn http_provider_needs_endpoint() {
        assert!(Settings::default().resolve().is_err());
    }
}
