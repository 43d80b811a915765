//! Coverage, complexity aggregates and answer scoring.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{mark_novelty, ActionRecord, Origin, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("task `{0}` has no expected answer")]
    MissingLabel(String),
    #[error("task `{0}` has no steps")]
    Empty(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskCoverage {
    /// `1 - novel/steps` on success, absent otherwise.
    pub coverage: Option<f64>,
    /// The formula with the success indicator applied literally; failed
    /// tasks get 1.
    pub coverage_literal: f64,
    pub success: bool,
    pub steps: usize,
    pub novel_steps: usize,
}

/// Coverage of one trajectory against the names known when it started.
/// Novelty is recomputed from the steps' defined functions.
pub fn coverage_of_trajectory(
    traj: &Trajectory,
    start_action_names: &BTreeSet<String>,
) -> Result<TaskCoverage, CoverageError> {
    let success = traj
        .success
        .ok_or_else(|| CoverageError::MissingLabel(traj.task_id.clone()))?;
    if traj.steps.is_empty() {
        return Err(CoverageError::Empty(traj.task_id.clone()));
    }
    let steps = traj.steps.len();
    let novel_steps = traj
        .steps
        .iter()
        .filter(|s| mark_novelty(s, start_action_names))
        .count();
    let ratio = novel_steps as f64 / steps as f64;
    Ok(TaskCoverage {
        coverage: success.then_some(1.0 - ratio),
        coverage_literal: 1.0 - if success { ratio } else { 0.0 },
        success,
        steps,
        novel_steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub per_task: BTreeMap<String, TaskCoverage>,
    /// Mean over successful tasks; absent when none succeeded.
    pub mean_success_conditioned: Option<f64>,
    /// Mean of the literal variant over all tasks.
    pub mean_literal: Option<f64>,
    pub action_set_size: usize,
    /// Tasks left out, with the reason.
    #[serde(default)]
    pub skipped: BTreeMap<String, String>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl CoverageReport {
    /// `runs` pairs each trajectory with its start action names.
    pub fn build<'a>(
        runs: impl IntoIterator<Item = (&'a Trajectory, &'a BTreeSet<String>)>,
        action_set_size: usize,
    ) -> Self {
        let mut per_task = BTreeMap::new();
        let mut skipped = BTreeMap::new();
        for (t, names) in runs {
            match coverage_of_trajectory(t, names) {
                Ok(c) => {
                    per_task.insert(t.task_id.clone(), c);
                }
                Err(e) => {
                    skipped.insert(t.task_id.clone(), e.to_string());
                }
            }
        }
        let mut r = CoverageReport {
            per_task,
            mean_success_conditioned: None,
            mean_literal: None,
            action_set_size,
            skipped,
        };
        r.recompute_means();
        r
    }

    pub fn recompute_means(&mut self) {
        self.mean_success_conditioned = mean(self.per_task.values().filter_map(|c| c.coverage));
        self.mean_literal = mean(self.per_task.values().map(|c| c.coverage_literal));
    }
}

/// Mean success-conditioned coverage grouped by the size of the action set
/// each task started with.
pub fn coverage_curve(per_task: &[(usize, TaskCoverage)]) -> Vec<(usize, f64)> {
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (size, c) in per_task {
        if let Some(v) = c.coverage {
            groups.entry(*size).or_default().push(v);
        }
    }
    groups
        .into_iter()
        .filter_map(|(size, vs)| mean(vs).map(|m| (size, m)))
        .collect()
}

pub fn coverage_curve_csv(curve: &[(usize, f64)]) -> String {
    let mut s = String::from("action_set_size,mean_coverage\n");
    for (size, m) in curve {
        s.push_str(&format!("{size},{m}\n"));
    }
    s
}

const CURRENCY: &[char] = &['$', '€', '£', '¥'];

fn as_number(s: &str) -> Option<f64> {
    let cleaned: String = s
        .chars()
        .filter(|c| *c != ',' && *c != '%' && !CURRENCY.contains(c))
        .collect();
    let cleaned = cleaned.trim();
    if !cleaned.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn split_elements(s: &str) -> Vec<&str> {
    s.split([',', ';']).map(str::trim).collect()
}

fn element_matches(p: &str, e: &str) -> bool {
    if p.is_empty() || e.is_empty() {
        return p.is_empty() && e.is_empty();
    }
    match (as_number(p), as_number(e)) {
        (Some(a), Some(b)) => a == b,
        _ => p.to_lowercase() == e.to_lowercase(),
    }
}

/// Exact-match scoring after normalization.
///
/// Numbers compare by value once commas, currency symbols and percent signs
/// are removed. Otherwise an expected answer containing `,` or `;` is
/// compared element by element, and anything else case-insensitively.
pub fn score_answer(predicted: &str, expected: &str) -> bool {
    let p = predicted.trim();
    let e = expected.trim();
    if p.is_empty() || e.is_empty() {
        return false;
    }
    if let (Some(a), Some(b)) = (as_number(p), as_number(e)) {
        return a == b;
    }
    if e.contains([',', ';']) {
        let pe = split_elements(p);
        let ee = split_elements(e);
        return pe.len() == ee.len() && pe.iter().zip(&ee).all(|(a, b)| element_matches(a, b));
    }
    p.to_lowercase() == e.to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexitySummary {
    /// Mean over generated actions.
    pub mean: Option<f64>,
    /// Generated actions per complexity value.
    pub histogram: BTreeMap<u32, usize>,
    pub by_origin: BTreeMap<Origin, Option<f64>>,
    /// Generated actions analyzed.
    pub count: usize,
    /// Records whose source could not be analyzed, with the reason.
    pub analysis_errors: BTreeMap<String, String>,
}

/// Complexity of a record, analyzing its source when the stored value is
/// missing.
pub fn record_complexity(r: &ActionRecord) -> Result<u32, String> {
    match r.complexity {
        Some(c) => Ok(c),
        None => minipy::complexity_of_source(&r.source).map_err(|e| e.to_string()),
    }
}

pub fn complexity_summary<'a>(
    records: impl IntoIterator<Item = &'a ActionRecord>,
) -> ComplexitySummary {
    let mut histogram = BTreeMap::new();
    let mut per_origin: BTreeMap<Origin, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    let mut analysis_errors = BTreeMap::new();
    for r in records {
        match record_complexity(r) {
            Ok(c) => {
                if r.origin == Origin::Generated {
                    *histogram.entry(c).or_insert(0) += 1;
                    all.push(c as f64);
                }
                per_origin.entry(r.origin).or_default().push(c as f64);
            }
            Err(e) => {
                analysis_errors.insert(r.name.clone(), e);
            }
        }
    }
    let mut by_origin: BTreeMap<Origin, Option<f64>> =
        [(Origin::Human, None), (Origin::Generated, None)].into();
    for (o, v) in per_origin {
        by_origin.insert(o, mean(v));
    }
    ComplexitySummary {
        count: all.len(),
        mean: mean(all),
        histogram,
        by_origin,
        analysis_errors,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub predicted: Option<String>,
    pub expected: Option<String>,
    pub correct: Option<bool>,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_task: BTreeMap<String, TaskScore>,
    pub tasks: usize,
    pub labelled: usize,
    pub correct: usize,
    /// Percentage of labelled tasks answered correctly.
    pub accuracy: Option<f64>,
}

impl ScoreReport {
    pub fn build<'a>(runs: impl IntoIterator<Item = (&'a Trajectory, Option<&'a str>)>) -> Self {
        let mut per_task = BTreeMap::new();
        for (t, expected) in runs {
            let correct = expected.map(|e| {
                t.final_answer
                    .as_deref()
                    .is_some_and(|p| score_answer(p, e))
            });
            per_task.insert(
                t.task_id.clone(),
                TaskScore {
                    predicted: t.final_answer.clone(),
                    expected: expected.map(str::to_string),
                    correct: correct.or(t.success),
                    steps: t.steps.len(),
                    aborted: t.aborted.clone(),
                },
            );
        }
        let labelled = per_task.values().filter(|s| s.correct.is_some()).count();
        let correct = per_task
            .values()
            .filter(|s| s.correct == Some(true))
            .count();
        ScoreReport {
            tasks: per_task.len(),
            accuracy: (labelled > 0).then(|| 100.0 * correct as f64 / labelled as f64),
            per_task,
            labelled,
            correct,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{RunConfig, Step, StepStatus};
    use chrono::{TimeZone, Utc};

    fn step(i: u32, defines: &[&str]) -> Step {
        Step {
            index: i,
            thought: String::new(),
            code: String::new(),
            observation: String::new(),
            status: StepStatus::Ok,
            defined_functions: defines
                .iter()
                .map(|n| ActionRecord {
                    name: n.to_string(),
                    docstring: "d".into(),
                    source: format!("def {n}():\n    return 1\n"),
                    origin: Origin::Generated,
                    created_by_task: None,
                    created_at: Utc.timestamp_opt(0, 0).unwrap(),
                    embedding: None,
                    complexity: Some(1),
                })
                .collect(),
            is_novel: false,
            final_answer: None,
        }
    }

    fn traj(success: Option<bool>, steps: Vec<Step>) -> Trajectory {
        Trajectory {
            task_id: "t".into(),
            steps,
            final_answer: None,
            success,
            config_snapshot: RunConfig::default(),
            aborted: None,
        }
    }

    #[test]
    fn four_steps_one_novel() {
        let t = traj(
            Some(true),
            vec![step(1, &["f"]), step(2, &[]), step(3, &[]), step(4, &[])],
        );
        let c = coverage_of_trajectory(&t, &BTreeSet::new()).unwrap();
        assert_eq!(c.coverage, Some(0.75));
        assert_eq!(c.coverage_literal, 0.75);
    }

    #[test]
    fn failed_task_literal_is_one() {
        let t = traj(Some(false), vec![step(1, &["f"])]);
        let c = coverage_of_trajectory(&t, &BTreeSet::new()).unwrap();
        assert_eq!(c.coverage, None);
        assert_eq!(c.coverage_literal, 1.0);
    }

    #[test]
    fn unlabelled_and_empty() {
        assert!(matches!(
            coverage_of_trajectory(&traj(None, vec![step(1, &[])]), &BTreeSet::new()),
            Err(CoverageError::MissingLabel(_))
        ));
        assert!(matches!(
            coverage_of_trajectory(&traj(Some(true), vec![]), &BTreeSet::new()),
            Err(CoverageError::Empty(_))
        ));
    }

    #[test]
    fn scorer_examples() {
        assert!(score_answer("1,234", "1234"));
        assert!(score_answer("Paris ", "paris"));
        assert!(score_answer("3.0", "3"));
        assert!(score_answer("$12.50", "12.5"));
        assert!(score_answer("a; B", "A,b"));
        assert!(!score_answer("", "x"));
        assert!(!score_answer("a, b, c", "a, b"));
    }

    #[test]
    fn complexity_means() {
        let mut recs: Vec<ActionRecord> = ["a", "b", "c"]
            .iter()
            .map(|n| step(1, &[n]).defined_functions.remove(0))
            .collect();
        recs[0].complexity = Some(1);
        recs[1].complexity = Some(3);
        recs[2].complexity = Some(5);
        let s = complexity_summary(&recs);
        assert_eq!(s.mean, Some(3.0));
        assert_eq!(s.by_origin[&Origin::Human], None);
        let empty = complexity_summary(std::iter::empty());
        assert_eq!(empty.mean, None);
    }
}
