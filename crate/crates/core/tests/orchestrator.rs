mod common;

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use actkit::executor::MockExecutor;
use actkit::gateway::{
    render_response, CallKey, ChatMessage, ChatProvider, ProviderError, RetryPolicy, Role,
};
use actkit::orchestrator::{parse_trajectory_log, trajectory_log, PARSE_ERROR_OBSERVATION};
use actkit::registry::{load_initial_actions, SharedLibrary};
use actkit::retrieval::{EmbedderKind, EmbeddingIndex, TrigramEmbedder, DETERMINISTIC_DIM};
use actkit::{run_task, LoopOptions, Phase, RunConfig, StepStatus, TaskSpec};
use common::suite::reply;
use proptest::prelude::*;

/// Answers from a fixed list and keeps every request.
struct Canned {
    responses: Vec<String>,
    seen: Mutex<Vec<Vec<ChatMessage>>>,
}

impl Canned {
    fn new(responses: Vec<String>) -> Self {
        Canned {
            responses,
            seen: Mutex::new(Vec::new()),
        }
    }
}

impl ChatProvider for Canned {
    fn complete(&self, key: &CallKey, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        self.seen.lock().unwrap().push(messages.to_vec());
        self.responses.get(key.step as usize - 1).cloned().ok_or(
            ProviderError::TranscriptExhausted {
                task_id: key.task_id.clone(),
                step: key.step,
            },
        )
    }
}

fn library(dir: &Path) -> SharedLibrary {
    let (lib, _) = load_initial_actions(dir, true).unwrap();
    let index =
        EmbeddingIndex::open(dir, DETERMINISTIC_DIM, EmbedderKind::DeterministicTest).unwrap();
    SharedLibrary::new(lib, index, Arc::new(TrigramEmbedder))
}

fn task(id: &str, expected: Option<&str>) -> TaskSpec {
    TaskSpec {
        task_id: id.into(),
        question: "Work it out.".into(),
        attachments: vec![],
        expected_answer: expected.map(str::to_string),
        level: None,
    }
}

fn opts() -> LoopOptions {
    LoopOptions {
        retry: RetryPolicy::none(),
        ..Default::default()
    }
}

const HELPER: &str = "def add_three(x):\n    \"\"\"Add three to a number.\"\"\"\n    return x + 3\n\nprint(add_three(4))";

#[test]
fn two_step_transcript_grows_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = library(tmp.path());
    let p = Canned::new(vec![
        reply("Define a helper.", HELPER),
        reply("Submit.", "submit_final_answer(str(add_three(4)))"),
    ]);
    let mut exec = MockExecutor::start(lib.lock().human_actions()).unwrap();
    let before = lib.lock().len();
    let run = run_task(
        &task("t1", Some("7")),
        &RunConfig::default(),
        &lib,
        &p,
        &mut exec,
        &opts(),
    )
    .unwrap();
    let t = &run.trajectory;
    assert_eq!(t.steps.len(), 2);
    assert_eq!(t.final_answer.as_deref(), Some("7"));
    assert_eq!(t.success, Some(true));
    assert_eq!(t.steps[0].observation, "7\n");
    assert!(t.steps[0].is_novel && !t.steps[1].is_novel);
    assert_eq!(lib.lock().len(), before + 1);
    assert_eq!(run.accumulated, ["add_three"]);
    assert!(lib.index().get("add_three").is_some());
    assert!(tmp.path().join("actions/add_three.json").is_file());
    t.check().unwrap();
}

#[test]
fn generation_off_blocks_definitions() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = library(tmp.path());
    let p = Canned::new(vec![
        reply("Define a helper.", HELPER),
        reply("Call something unknown.", "print(mystery(1))"),
        reply("Use a human action.", "text = 'abc'\nprint(len(text))"),
    ]);
    let mut cfg = RunConfig::default();
    cfg.flags.allow_generation = false;
    cfg.flags.accumulate = false;
    cfg.max_steps = 3;
    let mut exec = MockExecutor::start(lib.lock().human_actions()).unwrap();
    let before = lib.lock().snapshot_names();
    let t = run_task(&task("t", None), &cfg, &lib, &p, &mut exec, &opts())
        .unwrap()
        .trajectory;
    let statuses: Vec<_> = t.steps.iter().map(|s| s.status).collect();
    assert_eq!(
        statuses,
        [
            StepStatus::PolicyViolation,
            StepStatus::PolicyViolation,
            StepStatus::Ok
        ]
    );
    assert!(t.steps[0]
        .observation
        .contains("Defining functions is disabled"));
    assert!(t.steps[1].observation.contains("mystery"));
    assert!(t.steps.iter().all(|s| s.defined_functions.is_empty()));
    assert_eq!(lib.lock().snapshot_names(), before);
    // nothing from the blocked step reached the kernel
    let r = actkit::Executor::execute(
        &mut exec,
        "add_three",
        Duration::from_secs(5),
        &mut actkit::executor::NoRetrieval,
    );
    assert_eq!(r.error_type(), Some("NameError"));
}

#[test]
fn step_limit_ends_the_task() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = library(tmp.path());
    let p = Canned::new(
        (0..25)
            .map(|i| reply("Keep going.", &format!("print({i})")))
            .collect(),
    );
    let mut exec = MockExecutor::start(lib.lock().human_actions()).unwrap();
    let t = run_task(
        &task("t", Some("x")),
        &RunConfig::default(),
        &lib,
        &p,
        &mut exec,
        &opts(),
    )
    .unwrap()
    .trajectory;
    assert_eq!(t.steps.len(), 20);
    assert_eq!(t.final_answer, None);
    assert_eq!(t.success, Some(false));
    assert!(t.aborted.is_none());
}

#[test]
fn messages_replay_the_history_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = library(tmp.path());
    let p = Canned::new(vec![
        "no code at all".into(),
        reply("First.", "x = 2\nprint(x)"),
        reply("Second.", "print(x * 10)"),
        reply("Done.", "submit_final_answer(x)"),
    ]);
    let mut exec = MockExecutor::start(lib.lock().human_actions()).unwrap();
    let t = run_task(
        &task("t", None),
        &RunConfig::default(),
        &lib,
        &p,
        &mut exec,
        &opts(),
    )
    .unwrap()
    .trajectory;
    assert_eq!(t.steps.len(), 4);
    assert_eq!(t.steps[0].observation, PARSE_ERROR_OBSERVATION);
    let seen = p.seen.lock().unwrap();
    for (i, msgs) in seen.iter().enumerate() {
        assert_eq!(msgs.len(), 2 + 2 * i);
        assert_eq!(msgs[0].role, Role::System);
        assert_eq!(msgs[1].role, Role::User);
        assert!(msgs[1].content.starts_with("Task: Work it out."));
        for (j, s) in t.steps[..i].iter().enumerate() {
            let code = (s.status != StepStatus::ParseError).then_some(s.code.as_str());
            assert_eq!(
                msgs[2 + 2 * j],
                ChatMessage::assistant(render_response(&s.thought, code))
            );
            assert_eq!(msgs[3 + 2 * j], ChatMessage::user(s.observation.clone()));
        }
    }
    assert_eq!(t.steps[2].observation, "20\n");
}

static SLEPT_MS: AtomicU64 = AtomicU64::new(0);

fn record_sleep(d: Duration) {
    SLEPT_MS.fetch_add(d.as_millis() as u64, Ordering::SeqCst);
}

struct Down;

impl ChatProvider for Down {
    fn complete(&self, _: &CallKey, _: &[ChatMessage]) -> Result<String, ProviderError> {
        Err(ProviderError::Transport("connection refused".into()))
    }
}

#[test]
fn provider_failure_aborts_after_backoff() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = library(tmp.path());
    let mut exec = MockExecutor::start(lib.lock().human_actions()).unwrap();
    let o = LoopOptions {
        sleep: record_sleep,
        ..Default::default()
    };
    let t = run_task(
        &task("t", Some("1")),
        &RunConfig::default(),
        &lib,
        &Down,
        &mut exec,
        &o,
    )
    .unwrap()
    .trajectory;
    assert!(t.steps.is_empty());
    assert!(t.aborted.as_deref().unwrap().contains("connection refused"));
    assert_eq!(t.success, Some(false));
    assert_eq!(SLEPT_MS.load(Ordering::SeqCst), 7000);
}

#[test]
fn retrieval_uses_the_configured_k() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = library(tmp.path());
    let mut exec = MockExecutor::start(lib.lock().human_actions()).unwrap();
    let empty = Canned::new(vec![reply(
        "Look.",
        "get_relevant_actions('sorting numbers')",
    )]);
    let mut cfg = RunConfig::default();
    cfg.max_steps = 1;
    let t = run_task(&task("t0", None), &cfg, &lib, &empty, &mut exec, &opts())
        .unwrap()
        .trajectory;
    assert!(
        t.steps[0].observation.contains("no actions found"),
        "{}",
        t.steps[0].observation
    );

    let defs: String = (0..5)
        .map(|i| format!("def helper_{i}(x):\n    \"\"\"Helper number {i} for sorting numbers.\"\"\"\n    return x\n\n"))
        .collect();
    let p = Canned::new(vec![reply("Define.", &defs)]);
    run_task(&task("t1", None), &cfg, &lib, &p, &mut exec, &opts()).unwrap();
    assert_eq!(lib.index().len(), 5);

    cfg.retrieval_k = 3;
    let p = Canned::new(vec![reply("Look.", "found = get_relevant_actions('sorting numbers')\nprint(len(found))\nprint(found[0]['name'] == 'helper_0', helper_0(9))")]);
    let t = run_task(&task("t2", None), &cfg, &lib, &p, &mut exec, &opts())
        .unwrap()
        .trajectory;
    let obs = &t.steps[0].observation;
    assert!(obs.starts_with("3\nTrue 9\n"), "{obs}");
    assert!(obs.contains("returned 3 action(s)"));
    let p = Canned::new(vec![reply(
        "Look.",
        "print(len(get_relevant_actions('sorting numbers', k=5)))",
    )]);
    let t = run_task(&task("t3", None), &cfg, &lib, &p, &mut exec, &opts())
        .unwrap()
        .trajectory;
    assert!(t.steps[0].observation.starts_with("5\n"));
}

#[test]
fn frozen_library_is_not_changed() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = library(tmp.path());
    lib.lock().freeze().unwrap();
    let p = Canned::new(vec![reply("Define.", HELPER)]);
    let mut cfg = RunConfig::for_phase(Phase::Test);
    cfg.max_steps = 1;
    let mut exec = MockExecutor::start(lib.lock().human_actions()).unwrap();
    let run = run_task(&task("t", None), &cfg, &lib, &p, &mut exec, &opts()).unwrap();
    assert!(run.trajectory.steps[0].is_novel);
    assert!(run.accumulated.is_empty());
    assert!(lib.lock().get("add_three").is_none());
}

#[test]
fn missing_attachment_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = library(tmp.path());
    let mut t = task("t", None);
    t.attachments.push(tmp.path().join("absent.txt"));
    let mut exec = MockExecutor::start(&[]).unwrap();
    let r = run_task(
        &t,
        &RunConfig::default(),
        &lib,
        &Canned::new(vec![]),
        &mut exec,
        &opts(),
    );
    assert!(r.is_err());
}

#[test]
fn logs_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = library(tmp.path());
    let p = Canned::new(vec![
        reply("Define.", HELPER),
        reply("Submit.", "submit_final_answer(7)"),
    ]);
    let mut exec = MockExecutor::start(lib.lock().human_actions()).unwrap();
    let run = run_task(
        &task("t", Some("7")),
        &RunConfig::default(),
        &lib,
        &p,
        &mut exec,
        &opts(),
    )
    .unwrap();
    let text = trajectory_log(&run);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().last().unwrap().starts_with("{\"summary\""));
    let back = parse_trajectory_log(&text).unwrap();
    assert_eq!(back.trajectory, run.trajectory);
    assert_eq!(back.start_action_names, run.start_action_names);
}

const TEMPLATES: &[&str] = &[
    "just thinking",
    "print('hi')",
    "def gen_{n}(x):\n    \"\"\"Generated helper {n}.\"\"\"\n    return x\n",
    "def nodoc_{n}(x):\n    return x\n",
    "raise ValueError('bad')",
    "print(unknown_{n}(1))",
    "submit_final_answer({n})",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loop_invariants(
        picks in prop::collection::vec(0..TEMPLATES.len(), 1..8),
        max_steps in 1u32..6,
        allow_generation: bool,
        accumulate: bool,
    ) {
        let tmp = tempfile::tempdir().unwrap();
        let lib = library(tmp.path());
        let responses: Vec<String> = picks
            .iter()
            .enumerate()
            .map(|(n, &i)| {
                let body = TEMPLATES[i].replace("{n}", &n.to_string());
                if i == 0 { body } else { reply("Step.", &body) }
            })
            .collect();
        let p = Canned::new(responses);
        let mut cfg = RunConfig::default();
        cfg.max_steps = max_steps;
        cfg.flags.allow_generation = allow_generation;
        cfg.flags.accumulate = accumulate && allow_generation;
        let mut exec = MockExecutor::start(lib.lock().human_actions()).unwrap();
        let before = lib.lock().len();
        let run = run_task(&task("t", None), &cfg, &lib, &p, &mut exec, &opts()).unwrap();
        let t = &run.trajectory;
        prop_assert!(t.steps.len() <= max_steps as usize);
        prop_assert!(t.check().is_ok());
        if !allow_generation {
            prop_assert!(t.steps.iter().all(|s| s.defined_functions.is_empty()));
        }
        if !cfg.flags.accumulate {
            prop_assert_eq!(lib.lock().len(), before);
        }
        for (i, s) in t.steps.iter().enumerate() {
            prop_assert_eq!(s.index as usize, i + 1);
            prop_assert_eq!(s.is_novel, s.defined_functions.iter().any(|f| !run.start_action_names.contains(&f.name)));
        }
        let seen = p.seen.lock().unwrap();
        prop_assert_eq!(seen.len(), t.steps.len() + usize::from(t.aborted.is_some()));
    }
}
