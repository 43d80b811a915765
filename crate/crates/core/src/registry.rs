//! The action library: human actions from built-ins and plugins, generated
//! actions accumulated from successful steps, and their on-disk layout.
//!
//! ```text
//! storage_dir/
//!   actions/<name>.json     generated actions
//!   plugins/<file>.json     human actions
//!   index/embeddings.jsonl  owned by the retrieval index
//!   manifest.json           {version, frozen, counts}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::{EmbedError, Embedder, EmbeddingIndex, Hit, IndexError};
use crate::types::{is_identifier, ActionRecord, Origin, Step, StepStatus};

pub const MANIFEST_VERSION: u32 = 1;
pub const SUBMIT_FINAL_ANSWER: &str = "submit_final_answer";
pub const GET_RELEVANT_ACTIONS: &str = "get_relevant_actions";

/// Framework primitives installed by the kernel itself. Their records exist
/// for the prompt; the sources are descriptive and never loaded.
pub fn builtin_actions() -> Vec<ActionRecord> {
    let epoch = DateTime::<Utc>::UNIX_EPOCH;
    let mk = |name: &str, doc: &str, src: &str| ActionRecord {
        name: name.into(),
        docstring: doc.into(),
        source: src.into(),
        origin: Origin::Human,
        created_by_task: None,
        created_at: epoch,
        embedding: None,
        complexity: Some(1),
    };
    vec![
        mk(
            SUBMIT_FINAL_ANSWER,
            "Submits the final answer to the given problem.",
            "def submit_final_answer(answer):\n    \"\"\"Submits the final answer to the given problem.\"\"\"\n    return str(answer)",
        ),
        mk(
            GET_RELEVANT_ACTIONS,
            "Retrieve the k generated actions whose docstrings best match a query.\nReturns a list of {name, docstring, score}; the functions become callable.",
            "def get_relevant_actions(query, k=None):\n    \"\"\"Retrieve the k generated actions whose docstrings best match a query.\n    Returns a list of {name, docstring, score}; the functions become callable.\n    \"\"\"\n    return []",
        ),
    ]
}

pub fn is_hook(name: &str) -> bool {
    name == SUBMIT_FINAL_ANSWER || name == GET_RELEVANT_ACTIONS
}

const DOWNLOAD_FILE_SRC: &str = r#"def download_file(url, path=None):
    """Download the file at a URL and save it locally. Returns the saved path."""
    import os
    import urllib.request
    if path is None:
        name = os.path.basename(url.split("?")[0]) or "download"
        path = os.path.join("downloads", name)
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with urllib.request.urlopen(url) as resp:
        data = resp.read()
    with open(path, "wb") as fh:
        fh.write(data)
    return path"#;

const INSPECT_FILE_SRC: &str = r#"def inspect_file_as_text(path, max_chars=20000):
    """Read a plain-text or CSV file and return its content as text.
    CSV files come back as a Markdown table."""
    with open(path, encoding="utf-8", errors="replace") as fh:
        text = fh.read()
    if path.lower().endswith(".csv"):
        rows = [line.split(",") for line in text.splitlines() if line.strip()]
        if rows:
            out = ["| " + " | ".join(c.strip() for c in rows[0]) + " |"]
            out.append("|" + " --- |" * len(rows[0]))
            for row in rows[1:]:
                out.append("| " + " | ".join(c.strip() for c in row) + " |")
            text = "\n".join(out)
    if len(text) > max_chars:
        text = text[:max_chars] + "\n...[truncated]"
    return text"#;

/// The plugin tools shipped with the runtime.
pub fn shipped_plugins() -> Vec<ActionRecord> {
    let epoch = DateTime::<Utc>::UNIX_EPOCH;
    [
        ("download_file", "Download the file at a URL and save it locally. Returns the saved path.", DOWNLOAD_FILE_SRC),
        (
            "inspect_file_as_text",
            "Read a plain-text or CSV file and return its content as text.\nCSV files come back as a Markdown table.",
            INSPECT_FILE_SRC,
        ),
    ]
    .into_iter()
    .map(|(name, doc, src)| ActionRecord {
        name: name.into(),
        docstring: doc.into(),
        source: src.into(),
        origin: Origin::Human,
        created_by_task: None,
        created_at: epoch,
        embedding: None,
        complexity: minipy::complexity_of_source(src).ok(),
    })
    .collect()
}

/// Browser and vision tools that fit the plugin interface but are not shipped.
pub const DECLARED_PLUGINS: &[&str] = &[
    "informational_web_search",
    "navigational_web_search",
    "visit_page",
    "page_up",
    "page_down",
    "find_on_page_ctrl_f",
    "find_next",
    "find_archived_url",
    "visualizer",
];

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("storage error on {path}: {message}")]
    Storage { path: PathBuf, message: String },
    #[error("the action library is frozen")]
    Frozen,
    #[error("only successfully executed steps can be accumulated (step status {0})")]
    NotExecuted(StepStatus),
    #[error(transparent)]
    Index(#[from] IndexError),
}

fn storage(path: &Path, e: impl std::fmt::Display) -> RegistryError {
    RegistryError::Storage {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// A plugin file that could not be used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PluginError {
    pub path: PathBuf,
    pub message: String,
}

impl std::fmt::Display for PluginError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub human: usize,
    pub generated: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub frozen: bool,
    pub counts: Counts,
}

/// Result of [`ActionLibrary::accumulate`]. A storage failure keeps the
/// records in memory and is reported alongside them.
#[derive(Debug, Default)]
pub struct Accumulated {
    pub accepted: Vec<ActionRecord>,
    pub storage_error: Option<RegistryError>,
}

#[derive(Debug, Clone)]
pub struct ActionLibrary {
    storage_dir: PathBuf,
    human: Vec<ActionRecord>,
    generated: BTreeMap<String, ActionRecord>,
    frozen: bool,
    /// Never touches the disk; used for test-phase runs.
    read_only: bool,
    unpersisted: BTreeSet<String>,
}

pub fn actions_dir(storage_dir: &Path) -> PathBuf {
    storage_dir.join("actions")
}

pub fn plugins_dir(storage_dir: &Path) -> PathBuf {
    storage_dir.join("plugins")
}

pub fn manifest_path(storage_dir: &Path) -> PathBuf {
    storage_dir.join("manifest.json")
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, RegistryError> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| storage(dir, e))? {
        let p = e.map_err(|e| storage(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "json") && p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Sorted-key JSON with a trailing newline.
pub fn record_json(record: &ActionRecord) -> String {
    let mut r = record.clone();
    r.embedding = None;
    let v = serde_json::to_value(&r).expect("records serialize");
    let mut s = serde_json::to_string_pretty(&v).expect("values serialize");
    s.push('\n');
    s
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), RegistryError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, contents).map_err(|e| storage(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| storage(path, e))
}

fn read_record(path: &Path) -> Result<ActionRecord, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

/// Opens a library, creating the directory layout if needed. Built-ins are
/// always present; plugins are loaded only when `enable` is set. Malformed
/// plugin files are skipped and reported.
pub fn load_initial_actions(
    storage_dir: &Path,
    enable: bool,
) -> Result<(ActionLibrary, Vec<PluginError>), RegistryError> {
    for d in [
        storage_dir.to_path_buf(),
        actions_dir(storage_dir),
        plugins_dir(storage_dir),
        storage_dir.join("index"),
    ] {
        fs::create_dir_all(&d).map_err(|e| storage(&d, e))?;
    }
    let mut human = builtin_actions();
    let mut problems = Vec::new();
    if enable {
        for path in json_files(&plugins_dir(storage_dir))? {
            let bad = |message: String| PluginError {
                path: path.clone(),
                message,
            };
            let rec = match read_record(&path) {
                Ok(r) => r,
                Err(m) => {
                    problems.push(bad(m));
                    continue;
                }
            };
            if rec.origin != Origin::Human {
                problems.push(bad("plugin origin must be human".into()));
            } else if let Err(e) = rec.validate(None) {
                problems.push(bad(e.to_string()));
            } else if rec.docstring.trim().is_empty() {
                problems.push(bad("plugin has no docstring".into()));
            } else if human.iter().any(|h| h.name == rec.name) {
                problems.push(bad(format!("duplicate action name `{}`", rec.name)));
            } else {
                human.push(rec);
            }
        }
    }
    let mut generated = BTreeMap::new();
    for path in json_files(&actions_dir(storage_dir))? {
        let rec = read_record(&path).map_err(|m| storage(&path, m))?;
        if human.iter().any(|h| h.name == rec.name) {
            problems.push(PluginError {
                path: path.clone(),
                message: format!(
                    "generated action `{}` shadows a human action and was skipped",
                    rec.name
                ),
            });
            continue;
        }
        generated.insert(rec.name.clone(), rec);
    }
    let mp = manifest_path(storage_dir);
    let frozen = if mp.exists() {
        let text = fs::read_to_string(&mp).map_err(|e| storage(&mp, e))?;
        serde_json::from_str::<Manifest>(&text)
            .map_err(|e| storage(&mp, e))?
            .frozen
    } else {
        false
    };
    let lib = ActionLibrary {
        storage_dir: storage_dir.to_path_buf(),
        human,
        generated,
        frozen,
        read_only: false,
        unpersisted: BTreeSet::new(),
    };
    if !mp.exists() {
        lib.write_manifest()?;
    }
    Ok((lib, problems))
}

/// Writes the shipped plugin files into `storage_dir/plugins`. Returns the
/// names written; existing files are left alone.
pub fn install_plugins(storage_dir: &Path) -> Result<Vec<String>, RegistryError> {
    let dir = plugins_dir(storage_dir);
    fs::create_dir_all(&dir).map_err(|e| storage(&dir, e))?;
    let mut written = Vec::new();
    for p in shipped_plugins() {
        let path = dir.join(format!("{}.json", p.name));
        if path.exists() {
            continue;
        }
        write_atomic(&path, &record_json(&p))?;
        written.push(p.name);
    }
    Ok(written)
}

impl ActionLibrary {
    /// An in-memory library with only the built-ins. Nothing is persisted.
    pub fn ephemeral() -> Self {
        ActionLibrary {
            storage_dir: PathBuf::new(),
            human: builtin_actions(),
            generated: BTreeMap::new(),
            frozen: false,
            read_only: true,
            unpersisted: BTreeSet::new(),
        }
    }

    pub fn storage_dir(&self) -> &Path {
        &self.storage_dir
    }

    pub fn human_actions(&self) -> &[ActionRecord] {
        &self.human
    }

    pub fn generated_actions(&self) -> &BTreeMap<String, ActionRecord> {
        &self.generated
    }

    pub fn get(&self, name: &str) -> Option<&ActionRecord> {
        self.human
            .iter()
            .find(|r| r.name == name)
            .or_else(|| self.generated.get(name))
    }

    pub fn len(&self) -> usize {
        self.human.len() + self.generated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn is_read_only(&self) -> bool {
        self.read_only
    }

    /// Stops all disk writes from this handle.
    pub fn set_read_only(&mut self) {
        self.read_only = true;
    }

    pub fn snapshot_names(&self) -> BTreeSet<String> {
        self.human
            .iter()
            .map(|r| r.name.clone())
            .chain(self.generated.keys().cloned())
            .collect()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            version: MANIFEST_VERSION,
            frozen: self.frozen,
            counts: Counts {
                human: self.human.len(),
                generated: self.generated.len(),
            },
        }
    }

    fn write_manifest(&self) -> Result<(), RegistryError> {
        if self.read_only {
            return Ok(());
        }
        let mut s =
            serde_json::to_string_pretty(&serde_json::to_value(self.manifest()).expect("manifest"))
                .expect("manifest");
        s.push('\n');
        let path = manifest_path(&self.storage_dir);
        if fs::read_to_string(&path).is_ok_and(|old| old == s) {
            return Ok(());
        }
        write_atomic(&path, &s)
    }

    fn persist(&self, record: &ActionRecord) -> Result<(), RegistryError> {
        if self.read_only {
            return Ok(());
        }
        let path = actions_dir(&self.storage_dir).join(format!("{}.json", record.name));
        write_atomic(&path, &record_json(record))
    }

    /// Adds the documented, not-yet-known functions a successful step
    /// defined. The first definition of a name wins.
    pub fn accumulate(
        &mut self,
        step: &Step,
        task_id: &str,
        now: DateTime<Utc>,
    ) -> Result<Accumulated, RegistryError> {
        if self.frozen {
            return Err(RegistryError::Frozen);
        }
        if step.status != StepStatus::Ok {
            return Err(RegistryError::NotExecuted(step.status));
        }
        let mut known = self.snapshot_names();
        let mut out = Accumulated::default();
        for f in &step.defined_functions {
            if known.contains(&f.name)
                || f.docstring.trim().is_empty()
                || !is_identifier(&f.name)
                || f.source.trim().is_empty()
            {
                continue;
            }
            known.insert(f.name.clone());
            let rec = ActionRecord {
                name: f.name.clone(),
                docstring: f.docstring.clone(),
                source: f.source.clone(),
                origin: Origin::Generated,
                created_by_task: Some(task_id.to_string()),
                created_at: now,
                embedding: None,
                complexity: f.complexity,
            };
            if let Err(e) = self.persist(&rec) {
                self.unpersisted.insert(rec.name.clone());
                out.storage_error.get_or_insert(e);
            }
            self.generated.insert(rec.name.clone(), rec.clone());
            out.accepted.push(rec);
        }
        if !out.accepted.is_empty() {
            if let Err(e) = self.write_manifest() {
                out.storage_error.get_or_insert(e);
            }
        }
        Ok(out)
    }

    /// Writes any records whose earlier persistence failed.
    pub fn flush(&mut self) -> Result<(), RegistryError> {
        for name in std::mem::take(&mut self.unpersisted) {
            let rec = self.generated[&name].clone();
            if let Err(e) = self.persist(&rec) {
                self.unpersisted.insert(name);
                return Err(e);
            }
        }
        self.write_manifest()
    }

    pub fn freeze(&mut self) -> Result<(), RegistryError> {
        self.flush()?;
        self.frozen = true;
        self.write_manifest()
    }

    pub fn thaw(&mut self) -> Result<(), RegistryError> {
        self.frozen = false;
        self.write_manifest()
    }

    /// Name-keyed union with `other`; records already present win.
    pub fn merge_from(&mut self, other: &ActionLibrary) -> Result<Vec<String>, RegistryError> {
        if self.frozen {
            return Err(RegistryError::Frozen);
        }
        let known = self.snapshot_names();
        let mut added = Vec::new();
        for (name, rec) in &other.generated {
            if known.contains(name) {
                continue;
            }
            if let Err(e) = self.persist(rec) {
                self.unpersisted.insert(name.clone());
                tracing::warn!("{e}");
            }
            self.generated.insert(name.clone(), rec.clone());
            added.push(name.clone());
        }
        self.write_manifest()?;
        Ok(added)
    }

    /// Checks registry and index invariants, in memory and on disk.
    pub fn verify(&self, index: &EmbeddingIndex<f64>) -> Vec<String> {
        let mut v = Vec::new();
        let mut seen = BTreeSet::new();
        for r in self.human.iter().chain(self.generated.values()) {
            if !seen.insert(r.name.clone()) {
                v.push(format!("duplicate action name `{}`", r.name));
            }
            if let Err(e) = r.validate(None) {
                v.push(e.to_string());
            }
        }
        for r in &self.human {
            if r.origin != Origin::Human {
                v.push(format!("human action `{}` has origin {}", r.name, r.origin));
            }
        }
        for (name, r) in &self.generated {
            if r.origin != Origin::Generated {
                v.push(format!("generated action `{name}` has origin {}", r.origin));
            }
            if index.get(name).is_none() {
                v.push(format!("generated action `{name}` has no index entry"));
            }
        }
        for (name, vector) in index.entries() {
            if !self.generated.contains_key(name) {
                v.push(format!("index entry `{name}` has no generated action"));
            }
            let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                v.push(format!("index entry `{name}` has norm {norm}"));
            }
        }
        if !self.read_only && !self.storage_dir.as_os_str().is_empty() {
            self.verify_disk(&mut v);
        }
        v
    }

    fn verify_disk(&self, v: &mut Vec<String>) {
        let dir = actions_dir(&self.storage_dir);
        let files = match json_files(&dir) {
            Ok(f) => f,
            Err(e) => {
                v.push(e.to_string());
                return;
            }
        };
        let mut on_disk = BTreeSet::new();
        for path in files {
            match read_record(&path) {
                Ok(r) => {
                    let stem = path
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or_default();
                    if stem != r.name {
                        v.push(format!("{} holds action `{}`", path.display(), r.name));
                    }
                    on_disk.insert(r.name);
                }
                Err(e) => v.push(format!("{}: {e}", path.display())),
            }
        }
        for name in self.generated.keys() {
            if !on_disk.contains(name) {
                v.push(format!("generated action `{name}` is not persisted"));
            }
        }
        let mp = manifest_path(&self.storage_dir);
        match fs::read_to_string(&mp).map(|t| serde_json::from_str::<Manifest>(&t)) {
            Ok(Ok(m)) if m.counts.generated != on_disk.len() => v.push(format!(
                "manifest counts {} generated actions, {} on disk",
                m.counts.generated,
                on_disk.len()
            )),
            Ok(Ok(_)) => {}
            Ok(Err(e)) => v.push(format!("{}: {e}", mp.display())),
            Err(e) => v.push(format!("{}: {e}", mp.display())),
        }
    }
}

/// A library and its index behind the single-writer lock. Readers take an
/// immutable index snapshot and search without holding any lock.
pub struct SharedLibrary {
    lib: Mutex<ActionLibrary>,
    index: RwLock<Arc<EmbeddingIndex<f64>>>,
    embedder: Arc<dyn Embedder>,
}

/// An action returned by retrieval, with its record.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub record: ActionRecord,
    pub score: f64,
}

impl SharedLibrary {
    pub fn new(
        lib: ActionLibrary,
        index: EmbeddingIndex<f64>,
        embedder: Arc<dyn Embedder>,
    ) -> Self {
        SharedLibrary {
            lib: Mutex::new(lib),
            index: RwLock::new(Arc::new(index)),
            embedder,
        }
    }

    pub fn lock(&self) -> MutexGuard<'_, ActionLibrary> {
        self.lib.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn index(&self) -> Arc<EmbeddingIndex<f64>> {
        self.index.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn embedder(&self) -> &dyn Embedder {
        &*self.embedder
    }

    pub fn snapshot(&self) -> ActionLibrary {
        self.lock().clone()
    }

    pub fn snapshot_names(&self) -> BTreeSet<String> {
        self.lock().snapshot_names()
    }

    /// Accumulates a step and indexes the accepted records under the lock.
    /// Embedding failures leave records queued in the index for retry.
    pub fn accumulate(
        &self,
        step: &Step,
        task_id: &str,
        now: DateTime<Utc>,
    ) -> Result<Accumulated, RegistryError> {
        let mut lib = self.lock();
        let out = lib.accumulate(step, task_id, now)?;
        if out.accepted.is_empty() {
            return Ok(out);
        }
        let mut index = (*self.index()).clone();
        let mut first_err = None;
        for r in &out.accepted {
            if let Err(e) = index.index_action(&*self.embedder, r) {
                tracing::warn!("indexing `{}` failed: {e}", r.name);
                first_err.get_or_insert(e);
            }
        }
        *self.index.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(index);
        match (out.storage_error.is_none(), first_err) {
            (true, Some(e)) => Ok(Accumulated {
                accepted: out.accepted,
                storage_error: Some(RegistryError::Index(e)),
            }),
            _ => Ok(out),
        }
    }

    /// Top-k generated actions for `query`.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Retrieved>, EmbedError> {
        let index = self.index();
        let hits: Vec<Hit<f64>> = index.retrieve(&*self.embedder, query, k)?;
        let lib = self.lock();
        Ok(hits
            .into_iter()
            .filter_map(|h| {
                lib.generated.get(&h.name).map(|r| Retrieved {
                    record: r.clone(),
                    score: h.score,
                })
            })
            .collect())
    }

    pub fn into_parts(self) -> (ActionLibrary, EmbeddingIndex<f64>) {
        let lib = self.lib.into_inner().unwrap_or_else(|p| p.into_inner());
        let index = self.index.into_inner().unwrap_or_else(|p| p.into_inner());
        (lib, Arc::try_unwrap(index).unwrap_or_else(|a| (*a).clone()))
    }
}
