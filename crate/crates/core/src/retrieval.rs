//! Docstring embeddings and top-k cosine retrieval over generated actions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{Debug, LowerExp};
use std::fs;
use std::hash::Hasher;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use fnv::FnvHasher;
use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::gateway::{http_agent, post_json, ProviderError};
use crate::types::{ActionRecord, Origin};

/// Element type of stored vectors.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + LowerExp + Debug + Default + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + LowerExp + Debug + Default + Send + Sync + 'static
{
}

pub const DETERMINISTIC_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Remote,
    DeterministicTest,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("embedding has dimension {got}, expected {want}")]
    Dimension { got: usize, want: usize },
    #[error("embedding has zero norm")]
    ZeroVector,
}

pub trait Embedder: Send + Sync {
    fn kind(&self) -> EmbedderKind;
    fn dimension(&self) -> usize;
    /// A unit vector for non-empty `text`.
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Character trigrams of the lowercased text, hashed into 256 bins.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramEmbedder;

/// Trigrams in text order; text shorter than three characters is one gram.
pub fn trigrams(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    if chars.len() < 3 {
        return vec![chars.into_iter().collect()];
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

pub fn trigram_bin(gram: &str) -> usize {
    let mut h = FnvHasher::default();
    h.write(gram.as_bytes());
    (h.finish() % DETERMINISTIC_DIM as u64) as usize
}

impl Embedder for TrigramEmbedder {
    fn kind(&self) -> EmbedderKind {
        EmbedderKind::DeterministicTest
    }

    fn dimension(&self) -> usize {
        DETERMINISTIC_DIM
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut v = vec![0.0f64; DETERMINISTIC_DIM];
        for g in trigrams(text) {
            v[trigram_bin(&g)] += 1.0;
        }
        normalize(&mut v).ok_or(EmbedError::ZeroVector)?;
        Ok(v)
    }
}

/// Environment variable holding the embedding endpoint's bearer token.
pub const EMBEDDING_API_KEY_ENV: &str = "ACTKIT_EMBEDDING_API_KEY";

/// OpenAI-compatible embeddings endpoint.
pub struct HttpEmbedder {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    dim: usize,
    api_key: Option<String>,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, dim: usize) -> Self {
        HttpEmbedder {
            agent: http_agent(Duration::from_secs(60)),
            endpoint: endpoint.into(),
            model: model.into(),
            dim,
            api_key: std::env::var(EMBEDDING_API_KEY_ENV).ok(),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn kind(&self) -> EmbedderKind {
        EmbedderKind::Remote
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let body = json!({"model": self.model, "input": [text]});
        let v = post_json(&self.agent, &self.endpoint, self.api_key.as_deref(), &body)?;
        let arr = v
            .pointer("/data/0/embedding")
            .and_then(|a| a.as_array())
            .ok_or_else(|| ProviderError::Malformed("no data[0].embedding".into()))?;
        let mut out = Vec::with_capacity(arr.len());
        for x in arr {
            out.push(
                x.as_f64().ok_or_else(|| {
                    ProviderError::Malformed("non-numeric embedding entry".into())
                })?,
            );
        }
        if out.len() != self.dim {
            return Err(EmbedError::Dimension {
                got: out.len(),
                want: self.dim,
            });
        }
        normalize(&mut out).ok_or(EmbedError::ZeroVector)?;
        Ok(out)
    }
}

/// Scales `v` to unit length; `None` for the zero vector.
pub fn normalize<S: Scalar>(v: &mut [S]) -> Option<()> {
    let norm = v.iter().fold(S::zero(), |acc, &x| acc + x * x).sqrt();
    if norm == S::zero() || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x = *x / norm);
    Some(())
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == S::zero() || nb == S::zero() {
        return S::zero();
    }
    dot(a, b) / (na * nb)
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("only generated actions are indexed (`{0}` is human)")]
    HumanAction(String),
    #[error("action `{0}` has no docstring to index")]
    NoDocstring(String),
    #[error("embedding for `{name}` failed: {source}")]
    Embed { name: String, source: EmbedError },
    #[error("vector for `{name}` has dimension {got}, index has {want}")]
    Dimension {
        name: String,
        got: usize,
        want: usize,
    },
    #[error("vector for `{0}` is not unit length")]
    NotUnit(String),
    #[error("index file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexLine {
    name: String,
    dim: usize,
    vector: Vec<f64>,
}

/// Unit vectors keyed by generated-action name.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex<S: Scalar> {
    dimension: usize,
    entries: BTreeMap<String, Vec<S>>,
    provider: EmbedderKind,
    /// Records whose embedding failed, retried on the next `index_action`.
    pending: Vec<ActionRecord>,
    path: Option<PathBuf>,
}

/// Ranked hit: action name and cosine similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit<S> {
    pub name: String,
    pub score: S,
}

pub fn index_file(storage_dir: &Path) -> PathBuf {
    storage_dir.join("index").join("embeddings.jsonl")
}

/// Width of the band treated as a tie: about a thousand ulps at 1.0, well
/// above the rounding error of a unit-vector dot product.
pub fn tie_band<S: Scalar>() -> S {
    S::epsilon() * to_scalar(1024.0)
}

fn to_scalar<S: Scalar>(x: f64) -> S {
    S::from_f64(x).unwrap_or_else(S::nan)
}

impl<S: Scalar> EmbeddingIndex<S> {
    pub fn new(dimension: usize, provider: EmbedderKind) -> Self {
        EmbeddingIndex {
            dimension,
            entries: BTreeMap::new(),
            provider,
            pending: Vec::new(),
            path: None,
        }
    }

    /// Opens (or starts) the index file under `storage_dir`. Nothing is
    /// written until the index changes.
    pub fn open(
        storage_dir: &Path,
        dimension: usize,
        provider: EmbedderKind,
    ) -> Result<Self, IndexError> {
        let path = index_file(storage_dir);
        let mut idx = Self::new(dimension, provider);
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|source| IndexError::Io {
                path: path.clone(),
                source,
            })?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let l: IndexLine = serde_json::from_str(line).map_err(|e| IndexError::File {
                    path: path.clone(),
                    message: format!("line {}: {e}", i + 1),
                })?;
                if l.dim != dimension || l.vector.len() != dimension {
                    return Err(IndexError::Dimension {
                        name: l.name,
                        got: l.vector.len(),
                        want: dimension,
                    });
                }
                idx.entries
                    .insert(l.name, l.vector.into_iter().map(to_scalar).collect());
            }
        }
        idx.path = Some(path);
        Ok(idx)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn provider(&self) -> EmbedderKind {
        self.provider
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<&[S]> {
        self.entries.get(name).map(Vec::as_slice)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &[S])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn pending(&self) -> &[ActionRecord] {
        &self.pending
    }

    /// Stores a unit vector directly. Used by loaders and tests.
    pub fn insert(&mut self, name: &str, mut vector: Vec<S>) -> Result<(), IndexError> {
        if vector.len() != self.dimension {
            return Err(IndexError::Dimension {
                name: name.to_string(),
                got: vector.len(),
                want: self.dimension,
            });
        }
        normalize(&mut vector).ok_or_else(|| IndexError::NotUnit(name.to_string()))?;
        self.entries.insert(name.to_string(), vector);
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> bool {
        self.entries.remove(name).is_some()
    }

    /// Top `k` entries by cosine against `query`, ties by ascending name.
    pub fn search(&self, query: &[S], k: usize) -> Vec<Hit<S>> {
        let mut hits: Vec<Hit<S>> = self
            .entries
            .iter()
            .map(|(name, v)| Hit {
                name: name.clone(),
                score: dot(query, v),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.name.cmp(&b.name))
        });
        // Equal cosines computed from different vectors can differ in the
        // last bits. Scores within `tie_band` of a run's first score count
        // as tied and are ordered by name.
        let band = tie_band::<S>();
        let mut start = 0;
        while start < hits.len() {
            let top = hits[start].score;
            let mut end = start + 1;
            while end < hits.len() && top - hits[end].score <= band {
                end += 1;
            }
            hits[start..end].sort_by(|a, b| a.name.cmp(&b.name));
            start = end;
        }
        hits.truncate(k);
        hits
    }

    /// Embeds `query` and ranks the stored entries against it.
    pub fn retrieve(
        &self,
        embedder: &dyn Embedder,
        query: &str,
        k: usize,
    ) -> Result<Vec<Hit<S>>, EmbedError> {
        if self.entries.is_empty() {
            return Ok(Vec::new());
        }
        let q: Vec<S> = embedder.embed(query)?.into_iter().map(to_scalar).collect();
        if q.len() != self.dimension {
            return Err(EmbedError::Dimension {
                got: q.len(),
                want: self.dimension,
            });
        }
        Ok(self.search(&q, k))
    }

    /// Embeds the docstring of a generated record and stores it, retrying
    /// earlier failures first. Persists when backed by a file.
    pub fn index_action(
        &mut self,
        embedder: &dyn Embedder,
        record: &ActionRecord,
    ) -> Result<(), IndexError> {
        if record.origin != Origin::Generated {
            return Err(IndexError::HumanAction(record.name.clone()));
        }
        if record.docstring.trim().is_empty() {
            return Err(IndexError::NoDocstring(record.name.clone()));
        }
        let retry = std::mem::take(&mut self.pending);
        let mut changed = false;
        for r in retry {
            if r.name == record.name {
                continue;
            }
            match self.embed_record(embedder, &r) {
                Ok(()) => changed = true,
                Err(_) => self.pending.push(r),
            }
        }
        let result = self.embed_record(embedder, record);
        if result.is_ok() {
            changed = true;
        } else {
            self.pending.push(record.clone());
        }
        if changed {
            self.save()?;
        }
        result
    }

    fn embed_record(
        &mut self,
        embedder: &dyn Embedder,
        record: &ActionRecord,
    ) -> Result<(), IndexError> {
        let v = embedder
            .embed(&record.docstring)
            .map_err(|source| IndexError::Embed {
                name: record.name.clone(),
                source,
            })?;
        self.insert(&record.name, v.into_iter().map(to_scalar).collect())
    }

    /// Rewrites the index file, one `{name, dim, vector}` object per line
    /// with 17 significant digits per component.
    pub fn save(&self) -> Result<(), IndexError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let io = |source| IndexError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut buf = Vec::new();
        for (name, v) in &self.entries {
            let comps: Vec<String> = v
                .iter()
                .map(|x| format!("{:.16e}", x.to_f64().unwrap_or(f64::NAN)))
                .collect();
            writeln!(
                buf,
                "{{\"name\":{},\"dim\":{},\"vector\":[{}]}}",
                serde_json::to_string(name).expect("string serializes"),
                self.dimension,
                comps.join(",")
            )
            .map_err(io)?;
        }
        let tmp = path.with_extension("jsonl.tmp");
        fs::write(&tmp, &buf).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_text_is_one_gram() {
        assert_eq!(trigrams("ab"), vec!["ab".to_string()]);
        assert_eq!(trigrams("ABCd"), vec!["abc".to_string(), "bcd".to_string()]);
        let v = TrigramEmbedder.embed("abc").unwrap();
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 1);
        assert!((dot(&v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_rejected() {
        assert_eq!(TrigramEmbedder.embed(""), Err(EmbedError::EmptyText));
    }

    #[test]
    fn search_breaks_ties_by_name() {
        let mut idx = EmbeddingIndex::<f64>::new(2, EmbedderKind::DeterministicTest);
        idx.insert("b", vec![1.0, 0.0]).unwrap();
        idx.insert("a", vec![2.0, 0.0]).unwrap();
        idx.insert("c", vec![0.0, 1.0]).unwrap();
        let hits = idx.search(&[1.0, 0.0], 10);
        let names: Vec<_> = hits.iter().map(|h| h.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "c"]);
        assert_eq!(idx.search(&[1.0, 0.0], 1).len(), 1);
    }

    #[test]
    fn single_precision_index_ranks_the_same() {
        let mut a = EmbeddingIndex::<f32>::new(DETERMINISTIC_DIM, EmbedderKind::DeterministicTest);
        let mut b = EmbeddingIndex::<f64>::new(DETERMINISTIC_DIM, EmbedderKind::DeterministicTest);
        for (n, d) in [
            ("load_csv", "Load a CSV file"),
            ("sum_col", "Sum a column"),
            ("fetch", "Download a page"),
        ] {
            let v = TrigramEmbedder.embed(d).unwrap();
            a.insert(n, v.iter().map(|x| *x as f32).collect()).unwrap();
            b.insert(n, v).unwrap();
        }
        let ra: Vec<_> = a
            .retrieve(&TrigramEmbedder, "read a csv file", 3)
            .unwrap()
            .into_iter()
            .map(|h| h.name)
            .collect();
        let rb: Vec<_> = b
            .retrieve(&TrigramEmbedder, "read a csv file", 3)
            .unwrap()
            .into_iter()
            .map(|h| h.name)
            .collect();
        assert_eq!(ra, rb);
    }
}
