//! Reference implementations and fixture tables checked against the library.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use actkit::{ActionRecord, Origin, RunConfig, Step, StepStatus, Trajectory};
use chrono::{TimeZone, Utc};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

// ---- scorer ----

/// (predicted, expected, verdict). Each verdict was worked out by hand from
/// the normalization rules, then checked against `reference_score`.
pub const SCORER_TABLE: [(&str, &str, bool); 30] = [
    ("42", "42", true),
    ("  42 ", "42", true),
    ("42.0", "42", true),
    ("1,000", "1000", true),
    ("$1,000", "1000", true),
    ("50%", "50", true),
    ("€3.5", "3.50", true),
    ("1e3", "1000", true),
    ("0", "-0", true),
    ("42", "43", false),
    ("0.1", "0.10000001", false),
    ("1/2", "0.5", false),
    ("Paris", "paris", true),
    ("  PARIS ", "Paris", true),
    ("Pariss", "Paris", false),
    ("Mount Everest", "mount everest", true),
    ("inf", "INF", true),
    ("apple, banana", "apple,banana", true),
    ("Apple; Banana", "apple;banana", true),
    ("apple, banana", "banana, apple", false),
    ("apple", "apple, banana", false),
    ("apple, banana, cherry", "apple, banana", false),
    ("1, 2, 3", "1,2,3", true),
    ("3.0, 4", "3, 4.00", true),
    ("a,,b", "a,,b", true),
    ("a, ,b", "a,,b", true),
    ("1,2,3", "123", true),
    ("", "", false),
    ("", "x", false),
    ("x", "", false),
];

fn ref_number(s: &str) -> Option<f64> {
    let mut kept = String::new();
    for c in s.chars() {
        if !matches!(c, ',' | '%' | '$' | '€' | '£' | '¥') {
            kept.push(c);
        }
    }
    let t = kept.trim();
    if t.bytes().any(|b| b.is_ascii_digit()) {
        t.parse::<f64>().ok().filter(|x| x.is_finite())
    } else {
        None
    }
}

fn ref_text_eq(a: &str, b: &str) -> bool {
    a.to_lowercase() == b.to_lowercase()
}

/// A second reading of the scoring rules, written independently.
pub fn reference_score(predicted: &str, expected: &str) -> bool {
    let (p, e) = (predicted.trim(), expected.trim());
    if p.is_empty() || e.is_empty() {
        return false;
    }
    if let (Some(x), Some(y)) = (ref_number(p), ref_number(e)) {
        return x == y;
    }
    if !e.contains(',') && !e.contains(';') {
        return ref_text_eq(p, e);
    }
    let split = |s: &str| -> Vec<String> {
        s.split(|c| c == ',' || c == ';')
            .map(|x| x.trim().to_string())
            .collect()
    };
    let (ps, es) = (split(p), split(e));
    if ps.len() != es.len() {
        return false;
    }
    ps.iter()
        .zip(&es)
        .all(|(a, b)| match (a.is_empty(), b.is_empty()) {
            (true, true) => true,
            (false, false) => match (ref_number(a), ref_number(b)) {
                (Some(x), Some(y)) => x == y,
                _ => ref_text_eq(a, b),
            },
            _ => false,
        })
}

// ---- coverage ----

/// One step per entry, each listing the names it defines. `start` holds the
/// names known when the task began. `novel` is the hand count of steps that
/// define something outside `start`.
pub struct CoverageFixture {
    pub id: &'static str,
    pub success: bool,
    pub steps: &'static [&'static [&'static str]],
    pub start: &'static [&'static str],
    pub novel: usize,
    /// Extra names used for the start-set enlargement check.
    pub extra: &'static [&'static str],
}

const NONE: &[&str] = &[];

pub const COVERAGE_FIXTURES: [CoverageFixture; 20] = [
    CoverageFixture {
        id: "c01",
        success: true,
        steps: &[NONE],
        start: &[],
        novel: 0,
        extra: &["f"],
    },
    CoverageFixture {
        id: "c02",
        success: true,
        steps: &[&["f"]],
        start: &[],
        novel: 1,
        extra: &["f"],
    },
    CoverageFixture {
        id: "c03",
        success: true,
        steps: &[&["f"], NONE, NONE, NONE],
        start: &[],
        novel: 1,
        extra: &["g"],
    },
    CoverageFixture {
        id: "c04",
        success: true,
        steps: &[&["f"], &["g"], NONE],
        start: &[],
        novel: 2,
        extra: &["f"],
    },
    CoverageFixture {
        id: "c05",
        success: true,
        steps: &[&["f"], &["g"], NONE],
        start: &["f"],
        novel: 1,
        extra: &["g"],
    },
    CoverageFixture {
        id: "c06",
        success: true,
        steps: &[&["f", "g"], NONE, NONE],
        start: &["f"],
        novel: 1,
        extra: &["g"],
    },
    CoverageFixture {
        id: "c07",
        success: true,
        steps: &[&["f", "g"], NONE, NONE],
        start: &["f", "g"],
        novel: 0,
        extra: &["h"],
    },
    CoverageFixture {
        id: "c08",
        success: true,
        steps: &[&["a"], &["b"], &["c"], &["d"], &["e"], &["f"], &["g"]],
        start: &[],
        novel: 7,
        extra: &["a", "c", "e"],
    },
    CoverageFixture {
        id: "c09",
        success: true,
        steps: &[&["a"], NONE, &["a"], NONE, NONE, NONE],
        start: &[],
        novel: 2,
        extra: &["a"],
    },
    CoverageFixture {
        id: "c10",
        success: true,
        steps: &[
            &["a"],
            &["b"],
            NONE,
            NONE,
            NONE,
            NONE,
            NONE,
            NONE,
            NONE,
            NONE,
            NONE,
        ],
        start: &["b"],
        novel: 1,
        extra: &["a"],
    },
    CoverageFixture {
        id: "c11",
        success: true,
        steps: &[NONE; 20],
        start: &["x"],
        novel: 0,
        extra: &[],
    },
    CoverageFixture {
        id: "c12",
        success: true,
        steps: &[
            &["h1"],
            &["h2"],
            &["h3"],
            NONE,
            NONE,
            NONE,
            NONE,
            NONE,
            NONE,
        ],
        start: &["h2"],
        novel: 2,
        extra: &["h1", "h3"],
    },
    CoverageFixture {
        id: "c13",
        success: true,
        steps: &[&["p", "q"], &["r"], NONE],
        start: &["q", "r"],
        novel: 1,
        extra: &["p"],
    },
    CoverageFixture {
        id: "c14",
        success: true,
        steps: &[&["z"], &["z"], &["z"]],
        start: &[],
        novel: 3,
        extra: &["z"],
    },
    CoverageFixture {
        id: "c15",
        success: true,
        steps: &[NONE, NONE, &["m"], NONE, NONE, NONE, NONE],
        start: &["n"],
        novel: 1,
        extra: &["m"],
    },
    CoverageFixture {
        id: "c16",
        success: false,
        steps: &[&["f"], NONE],
        start: &[],
        novel: 1,
        extra: &["f"],
    },
    CoverageFixture {
        id: "c17",
        success: false,
        steps: &[NONE, NONE, NONE],
        start: &[],
        novel: 0,
        extra: &[],
    },
    CoverageFixture {
        id: "c18",
        success: false,
        steps: &[&["a"], &["b"], &["c"]],
        start: &["a"],
        novel: 2,
        extra: &["b"],
    },
    CoverageFixture {
        id: "c19",
        success: false,
        steps: &[&["a"]],
        start: &["a"],
        novel: 0,
        extra: &["b"],
    },
    CoverageFixture {
        id: "c20",
        success: true,
        steps: &[
            &["u"],
            &["v"],
            &["w"],
            NONE,
            NONE,
            NONE,
            NONE,
            NONE,
            NONE,
            NONE,
            NONE,
            NONE,
            NONE,
        ],
        start: &["w"],
        novel: 2,
        extra: &["v"],
    },
];

pub fn record(name: &str) -> ActionRecord {
    ActionRecord {
        name: name.into(),
        docstring: format!("Helper {name}."),
        source: format!("def {name}():\n    \"\"\"Helper {name}.\"\"\"\n    return 1\n"),
        origin: Origin::Generated,
        created_by_task: None,
        created_at: Utc.timestamp_opt(0, 0).unwrap(),
        embedding: None,
        complexity: Some(1),
    }
}

impl CoverageFixture {
    pub fn start_set(&self) -> BTreeSet<String> {
        self.start.iter().map(|s| s.to_string()).collect()
    }

    pub fn enlarged_start_set(&self) -> BTreeSet<String> {
        self.start
            .iter()
            .chain(self.extra)
            .map(|s| s.to_string())
            .collect()
    }

    pub fn trajectory(&self) -> Trajectory {
        let start = self.start_set();
        let n = self.steps.len();
        let mut cfg = RunConfig::default();
        cfg.max_steps = n as u32;
        let answer = self.success.then(|| "done".to_string());
        Trajectory {
            task_id: self.id.into(),
            steps: self
                .steps
                .iter()
                .enumerate()
                .map(|(i, defs)| Step {
                    index: i as u32 + 1,
                    thought: String::new(),
                    code: String::new(),
                    observation: String::new(),
                    status: StepStatus::Ok,
                    defined_functions: defs.iter().map(|d| record(d)).collect(),
                    is_novel: defs.iter().any(|d| !start.contains(*d)),
                    final_answer: if i + 1 == n { answer.clone() } else { None },
                })
                .collect(),
            final_answer: answer,
            success: Some(self.success),
            config_snapshot: cfg,
            aborted: None,
        }
    }

    /// Coverage from integer counts, divided once.
    pub fn expected(&self) -> Option<f64> {
        let n = self.steps.len();
        self.success.then(|| (n - self.novel) as f64 / n as f64)
    }
}

// ---- retrieval ----

const VOCAB: &[&str] = &[
    "load", "csv", "file", "sum", "column", "parse", "date", "text", "count", "words", "page",
    "table", "rows", "the", "a", "of",
];

fn phrase(rng: &mut StdRng, max_words: usize) -> String {
    let n = rng.gen_range(1..=max_words);
    (0..n)
        .map(|_| *VOCAB.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

pub struct RetrievalCase {
    pub docs: BTreeMap<String, String>,
    pub query: String,
    pub k: usize,
}

/// Index sizes between 1 and 100. Docstrings draw from a small vocabulary,
/// so identical texts and exact score ties are common.
pub fn retrieval_case(rng: &mut StdRng) -> RetrievalCase {
    let size = rng.gen_range(1..=100);
    let docs = (0..size)
        .map(|i| {
            (
                format!("act_{:03}", rng.gen_range(0..1000) * 1000 + i),
                phrase(rng, 5),
            )
        })
        .collect();
    RetrievalCase {
        docs,
        query: phrase(rng, 4),
        k: rng.gen_range(1..=size + 3),
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Raw trigram counts; the embedder's vector is this divided by its norm.
pub fn trigram_counts(text: &str) -> [u64; 256] {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut v = [0u64; 256];
    let mut add = |g: &[char]| {
        let s: String = g.iter().collect();
        v[(fnv1a(s.as_bytes()) % 256) as usize] += 1;
    };
    if chars.len() < 3 {
        add(&chars);
    } else {
        for w in chars.windows(3) {
            add(w);
        }
    }
    v
}

/// Ranks by exact cosine against the query. With non-negative counts,
/// cos(a) > cos(b) iff dot_a^2 * |b|^2 > dot_b^2 * |a|^2, which integers
/// decide without rounding. Ties fall back to ascending name.
pub fn exact_ranking(case: &RetrievalCase) -> Vec<String> {
    let q = trigram_counts(&case.query);
    let mut rows: Vec<(String, u128, u128)> = case
        .docs
        .iter()
        .map(|(name, doc)| {
            let v = trigram_counts(doc);
            let dot: u128 = v.iter().zip(&q).map(|(a, b)| u128::from(a * b)).sum();
            let norm2: u128 = v.iter().map(|a| u128::from(a * a)).sum();
            (name.clone(), dot, norm2)
        })
        .collect();
    rows.sort_by(|a, b| {
        let lhs = a.1 * a.1 * b.2;
        let rhs = b.1 * b.1 * a.2;
        match rhs.cmp(&lhs) {
            Ordering::Equal => a.0.cmp(&b.0),
            o => o,
        }
    });
    rows.into_iter().take(case.k).map(|r| r.0).collect()
}
