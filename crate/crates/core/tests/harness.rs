mod common;

use std::fs;

use actkit::harness::{cmd_library, cmd_report, EmbedderSettings, LibraryCommand, Settings};
use actkit::{Phase, StepStatus};
use common::suite::{self, EXPECTED_ACCUMULATED};
use common::{fresh_library, offline_settings, run};

#[test]
fn scripted_suite_reaches_every_answer() {
    let tmp = tempfile::tempdir().unwrap();
    let f = suite::write_fixture(tmp.path(), &suite::suite_tasks(tmp.path()));
    let lib = fresh_library(&tmp.path().join("lib"));
    let out = run(&f, offline_settings(&f), &lib, &tmp.path().join("run"));
    for r in &out.runs {
        let t = &r.trajectory;
        assert_eq!(
            t.success,
            Some(true),
            "{}: {:#?}",
            t.task_id,
            t.steps
                .iter()
                .map(|s| (&s.status, &s.observation))
                .collect::<Vec<_>>()
        );
    }
    assert_eq!(out.exit_code(), 0);
    assert_eq!(out.report.code, 0, "{}", out.report.stderr);
    let generated: Vec<&str> = out
        .manifest
        .actions
        .iter()
        .filter(|a| a.origin == actkit::Origin::Generated)
        .map(|a| a.name.as_str())
        .collect();
    assert_eq!(generated, EXPECTED_ACCUMULATED);
}

fn library_files_without_index(lib: &std::path::Path) -> usize {
    fs::read_dir(lib.join("actions")).unwrap().count()
}

#[test]
fn test_phase_keeps_the_library_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let f = suite::write_fixture(tmp.path(), &suite::suite_tasks(tmp.path()));
    let lib = fresh_library(&tmp.path().join("lib"));
    run(&f, offline_settings(&f), &lib, &tmp.path().join("train"));
    let after_train = suite::snapshot_tree(&lib);
    assert_eq!(
        library_files_without_index(&lib),
        EXPECTED_ACCUMULATED.len()
    );

    let test = Settings {
        phase: Some(Phase::Test),
        ..offline_settings(&f)
    };
    let out = run(&f, test, &lib, &tmp.path().join("test"));
    assert_eq!(suite::snapshot_tree(&lib), after_train);
    assert_eq!(out.manifest.actions.len(), 4 + EXPECTED_ACCUMULATED.len());
    assert!(out.manifest.library.frozen);
    assert!(out.runs.iter().all(|r| r.trajectory.success == Some(true)));
}

#[test]
fn train_thaws_and_refreezes() {
    let tmp = tempfile::tempdir().unwrap();
    let f = suite::write_fixture(tmp.path(), &suite::suite_tasks(tmp.path()));
    let lib = fresh_library(&tmp.path().join("lib"));
    let manifest = || fs::read_to_string(lib.join("manifest.json")).unwrap();
    run(&f, offline_settings(&f), &lib, &tmp.path().join("r1"));
    assert!(manifest().contains("\"frozen\": true"));
    let out = run(&f, offline_settings(&f), &lib, &tmp.path().join("r2"));
    assert!(manifest().contains("\"frozen\": true"));
    // names learnt in the first run are no longer novel
    assert!(out
        .runs
        .iter()
        .all(|r| r.trajectory.steps.iter().filter(|s| s.is_novel).count() <= 1));
    assert_eq!(
        library_files_without_index(&lib),
        EXPECTED_ACCUMULATED.len()
    );
}

#[test]
fn replay_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let f = suite::write_fixture(tmp.path(), &suite::suite_tasks(tmp.path()));
    let a = fresh_library(&tmp.path().join("lib_a"));
    let b = fresh_library(&tmp.path().join("lib_b"));
    run(&f, offline_settings(&f), &a, &tmp.path().join("run_a"));
    run(&f, offline_settings(&f), &b, &tmp.path().join("run_b"));
    let la = suite::normalized_logs(&tmp.path().join("run_a"));
    assert_eq!(la.len(), 12);
    assert_eq!(la, suite::normalized_logs(&tmp.path().join("run_b")));
}

#[test]
fn no_generation_without_initial_actions() {
    let tmp = tempfile::tempdir().unwrap();
    let f = suite::write_fixture(tmp.path(), &suite::ablation_tasks(tmp.path()));
    let lib = fresh_library(&tmp.path().join("lib"));
    let settings = Settings {
        max_steps: Some(2),
        flags: actkit::harness::FlagSettings {
            allow_generation: Some(false),
            load_initial_actions: Some(false),
            ..Default::default()
        },
        ..offline_settings(&f)
    };
    let out = run(&f, settings, &lib, &tmp.path().join("run"));
    let human: Vec<&str> = out
        .manifest
        .actions
        .iter()
        .map(|a| a.name.as_str())
        .collect();
    assert_eq!(human, ["submit_final_answer", "get_relevant_actions"]);
    for r in &out.runs {
        assert!(r
            .trajectory
            .steps
            .iter()
            .all(|s| s.defined_functions.is_empty()));
    }
    // only plain arithmetic survives without the file tool
    let solved: Vec<&str> = out
        .runs
        .iter()
        .filter(|r| r.trajectory.success == Some(true))
        .map(|r| r.trajectory.task_id.as_str())
        .collect();
    assert_eq!(solved, ["a1_arithmetic"]);
    assert_eq!(library_files_without_index(&lib), 0);
}

#[test]
fn parallel_runs_share_one_library() {
    let tmp = tempfile::tempdir().unwrap();
    let f = suite::write_fixture(tmp.path(), &suite::ablation_tasks(tmp.path()));
    let lib = fresh_library(&tmp.path().join("lib"));
    let settings = Settings {
        parallel: Some(3),
        ..offline_settings(&f)
    };
    let out = run(&f, settings, &lib, &tmp.path().join("run"));
    assert!(out.runs.iter().all(|r| r.trajectory.success == Some(true)));
    let order: Vec<&str> = out
        .runs
        .iter()
        .map(|r| r.trajectory.task_id.as_str())
        .collect();
    assert_eq!(
        order,
        [
            "a1_arithmetic",
            "a2_line_count",
            "a3_digit_sum",
            "a4_vowels",
            "a5_fibonacci",
            "a6_palindromes"
        ]
    );
    assert_eq!(library_files_without_index(&lib), 4);
    let report = cmd_library(
        &lib,
        &LibraryCommand::Verify,
        &EmbedderSettings::Deterministic,
    );
    assert_eq!(report.code, 0, "{}", report.stderr);
}

#[test]
fn reports_are_rebuilt_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let f = suite::write_fixture(tmp.path(), &suite::suite_tasks(tmp.path()));
    let lib = fresh_library(&tmp.path().join("lib"));
    let run_dir = tmp.path().join("run");
    run(&f, offline_settings(&f), &lib, &run_dir);
    let reports = run_dir.join("reports");
    for name in [
        "coverage.json",
        "complexity.json",
        "scores.json",
        "coverage_curve.csv",
    ] {
        assert!(reports.join(name).is_file(), "{name}");
    }
    let first = suite::snapshot_tree(&reports);
    let out = cmd_report(&run_dir);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("tasks") && out.stdout.contains("100.00"));
    assert_eq!(suite::snapshot_tree(&reports), first);
}

#[test]
fn report_on_empty_dir_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cmd_report(tmp.path());
    assert_eq!(out.code, 1);
    assert!(out.stderr.contains("no trajectory logs"));
    fs::create_dir(tmp.path().join("trajectories")).unwrap();
    assert_eq!(cmd_report(tmp.path()).code, 1);
}

#[test]
fn library_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = tmp.path().join("lib");
    let det = EmbedderSettings::Deterministic;
    let list = cmd_library(&lib, &LibraryCommand::List, &det);
    assert_eq!(list.code, 0);
    let rows: Vec<&str> = list.stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "{}", list.stdout);
    assert!(rows[0].starts_with("submit_final_answer") && rows[0].contains("human"));

    let show = cmd_library(
        &lib,
        &LibraryCommand::Show("submit_final_answer".into()),
        &det,
    );
    assert!(show
        .stdout
        .starts_with("Submits the final answer to the given problem.\n"));
    let missing = cmd_library(&lib, &LibraryCommand::Show("nope".into()), &det);
    assert_eq!(missing.code, 1);

    let inst = cmd_library(&lib, &LibraryCommand::InstallPlugins, &det);
    assert!(inst.stdout.contains("installed inspect_file_as_text"));
    assert_eq!(
        cmd_library(&lib, &LibraryCommand::List, &det)
            .stdout
            .lines()
            .count(),
        5
    );
    assert_eq!(cmd_library(&lib, &LibraryCommand::Verify, &det).code, 0);
}

#[test]
fn verify_names_missing_index_entries() {
    let tmp = tempfile::tempdir().unwrap();
    let f = suite::write_fixture(tmp.path(), &suite::suite_tasks(tmp.path()));
    let lib = fresh_library(&tmp.path().join("lib"));
    run(&f, offline_settings(&f), &lib, &tmp.path().join("run"));
    let det = EmbedderSettings::Deterministic;
    assert_eq!(cmd_library(&lib, &LibraryCommand::Verify, &det).code, 0);
    fs::remove_file(lib.join("index").join("embeddings.jsonl")).unwrap();
    let v = cmd_library(&lib, &LibraryCommand::Verify, &det);
    assert_ne!(v.code, 0);
    for name in EXPECTED_ACCUMULATED {
        assert!(v.stderr.contains(name), "{name} not named in {}", v.stderr);
    }
}

#[test]
fn malformed_dataset_line_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("tasks.jsonl");
    fs::write(
        &path,
        "{\"task_id\":\"a\",\"question\":\"q\"}\n\n{\"task_id\":\"b\"\n",
    )
    .unwrap();
    let e = actkit::harness::Dataset::load(&path).unwrap_err();
    assert_eq!(e.line(), Some(3));
}

#[test]
fn step_statuses_in_the_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let f = suite::write_fixture(tmp.path(), &suite::suite_tasks(tmp.path()));
    let lib = fresh_library(&tmp.path().join("lib"));
    let out = run(&f, offline_settings(&f), &lib, &tmp.path().join("run"));
    let by_id = |id: &str| {
        out.runs
            .iter()
            .find(|r| r.trajectory.task_id == id)
            .unwrap()
    };
    assert_eq!(
        by_id("s07_capitals").trajectory.steps[0].status,
        StepStatus::ParseError
    );
    assert_eq!(
        by_id("s08_power").trajectory.steps[0].status,
        StepStatus::ExecError
    );
    let retrieval = &by_id("s06_mild_day").trajectory.steps[0].observation;
    assert!(
        retrieval.contains("fahrenheit_to_celsius(f)  [score"),
        "{retrieval}"
    );
}
