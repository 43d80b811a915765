use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;

fn actkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_fixture(dir: &Path) {
    let tasks = [
        json!({"task_id": "double", "question": "What is 21 doubled?", "expected_answer": "42"}),
        json!({"task_id": "triple", "question": "What is 5 tripled?", "expected_answer": "15"}),
    ];
    let steps = [
        ("double", 1, "Write a helper.\n```python\ndef double(x):\n    \"\"\"Return twice the number.\"\"\"\n    return 2 * x\n\nprint(double(21))\n```"),
        ("double", 2, "Submit.\n```python\nsubmit_final_answer(double(21))\n```"),
        ("triple", 1, "Reuse the helper.\n```python\nget_relevant_actions('twice a number')\nsubmit_final_answer(double(5) + 5)\n```"),
    ];
    let mut ds = String::new();
    for t in tasks {
        ds += &format!("{t}\n");
    }
    let mut tr = String::new();
    for (id, step, response) in steps {
        tr += &format!(
            "{}\n",
            json!({"task_id": id, "step": step, "response": response})
        );
    }
    fs::write(dir.join("tasks.jsonl"), ds).unwrap();
    fs::write(dir.join("transcript.jsonl"), tr).unwrap();
}

#[test]
fn run_report_and_library_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_fixture(d);
    let lib = d.join("lib");
    let out = d.join("run");
    let r = actkit(&[
        "run",
        "--dataset",
        s(&d.join("tasks.jsonl")),
        "--library",
        s(&lib),
        "--out",
        s(&out),
        "--transcript",
        s(&d.join("transcript.jsonl")),
        "--mock-executor",
    ]);
    assert!(r.status.success(), "{}", text(&r.stderr));
    let stdout = text(&r.stdout);
    assert!(stdout.contains("100.00"), "{stdout}");
    for f in [
        "effective_config.json",
        "manifest.json",
        "trajectories/double.jsonl",
        "reports/scores.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let scores: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports/scores.json")).unwrap())
            .unwrap();
    assert_eq!(scores["correct"], 2);

    let again = actkit(&["report", s(&out)]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(text(&again.stdout), stdout);

    let list = actkit(&["library", "--library", s(&lib), "list"]);
    assert!(list.status.success());
    assert!(text(&list.stdout).contains("double"));

    let show = actkit(&[
        "library",
        "--library",
        s(&lib),
        "show",
        "submit_final_answer",
    ]);
    assert!(show.status.success());
    assert!(text(&show.stdout).contains("Submits the final answer to the given problem."));

    let verify = actkit(&["library", "--library", s(&lib), "verify"]);
    assert_eq!(verify.status.code(), Some(0), "{}", text(&verify.stderr));

    let missing = actkit(&["library", "--library", s(&lib), "show", "no_such_action"]);
    assert!(!missing.status.success());
}

#[test]
fn malformed_dataset_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("tasks.jsonl"),
        "{\"task_id\": \"a\", \"question\": \"q\"}\nnot json\n",
    )
    .unwrap();
    let r = actkit(&[
        "run",
        "--dataset",
        s(&d.join("tasks.jsonl")),
        "--library",
        s(&d.join("lib")),
        "--out",
        s(&d.join("run")),
        "--mock-executor",
        "--transcript",
        s(&d.join("none.jsonl")),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(text(&r.stderr).contains("line 2"), "{}", text(&r.stderr));
}

#[test]
fn invalid_flags_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_fixture(d);
    let r = actkit(&[
        "run",
        "--dataset",
        s(&d.join("tasks.jsonl")),
        "--library",
        s(&d.join("lib")),
        "--out",
        s(&d.join("run")),
        "--max-steps",
        "0",
        "--mock-executor",
        "--transcript",
        s(&d.join("transcript.jsonl")),
    ]);
    assert_eq!(r.status.code(), Some(2), "{}", text(&r.stderr));
    let r = actkit(&["report", s(&d.join("nothing_here"))]);
    assert_eq!(r.status.code(), Some(1));
}
