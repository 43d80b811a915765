mod common;

use std::time::{Duration, Instant};

use actkit::executor::{Executor, ExecutorError, NoRetrieval, ProcessExecutor, WorkerCommand};
use actkit::ActionRecord;
use common::contract;

fn mock_worker() -> WorkerCommand {
    WorkerCommand::new(env!("CARGO_BIN_EXE_actkit-mock-worker"))
}

fn process(human: &[ActionRecord]) -> Box<dyn Executor> {
    Box::new(ProcessExecutor::start(mock_worker(), human).expect("worker starts"))
}

#[test]
fn worker_process_meets_the_contract() {
    let failures = contract::run_all(&process);
    assert!(failures.is_empty(), "{failures:#?}");
}

/// Runs the suite against an external worker when one is configured, for
/// example `ACTKIT_WORKER_CMD="python3 -m actkit_worker"`.
#[test]
fn external_worker_meets_the_contract() {
    let Ok(line) = std::env::var("ACTKIT_WORKER_CMD") else {
        return;
    };
    let cmd = WorkerCommand::parse(&line).expect("non-empty worker command");
    let f = move |human: &[ActionRecord]| -> Box<dyn Executor> {
        Box::new(ProcessExecutor::start(cmd.clone(), human).expect("worker starts"))
    };
    let failures = contract::run_all(&f);
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn missing_program_is_a_spawn_error() {
    let r = ProcessExecutor::start(WorkerCommand::new("/nonexistent/actkit-worker"), &[]);
    assert!(
        matches!(r, Err(ExecutorError::Spawn { .. })),
        "{:?}",
        r.err()
    );
}

#[test]
fn silent_worker_fails_the_handshake() {
    let start = Instant::now();
    // `cat` echoes the ping back, which is not a reply
    let r = ProcessExecutor::start_with_handshake(
        WorkerCommand::new("cat"),
        &[],
        Duration::from_millis(500),
    );
    assert!(
        matches!(r, Err(ExecutorError::HandshakeTimeout(_))),
        "{:?}",
        r.err()
    );
    assert!(start.elapsed() < Duration::from_secs(5));
    let r = ProcessExecutor::start_with_handshake(
        WorkerCommand::new("sleep").arg("30"),
        &[],
        Duration::from_millis(300),
    );
    assert!(
        matches!(r, Err(ExecutorError::HandshakeTimeout(_))),
        "{:?}",
        r.err()
    );
}

#[test]
fn crash_is_reported_and_the_worker_restarted() {
    let cmd = mock_worker().env("ACTKIT_MOCK_WORKER_CRASH_MARKER", "# crash-now");
    let mut e = ProcessExecutor::start(cmd, &contract::human_actions()).unwrap();
    let before = e.pid();
    e.execute("kept = 1", Duration::from_secs(5), &mut NoRetrieval);
    let r = e.execute(
        "x = 1  # crash-now",
        Duration::from_secs(5),
        &mut NoRetrieval,
    );
    assert_eq!(r.error_type(), Some("WorkerCrashed"), "{r:?}");
    assert!(r.error.as_ref().unwrap().message.contains("restarted"));
    assert_ne!(e.pid(), before);
    let r = e.execute("kept", Duration::from_secs(5), &mut NoRetrieval);
    assert_eq!(r.error_type(), Some("NameError"));
    let r = e.execute(
        "add_numbers(20, 22)",
        Duration::from_secs(5),
        &mut NoRetrieval,
    );
    assert_eq!(r.result_repr.as_deref(), Some("42"));
}

#[test]
fn timeout_kills_the_process() {
    let mut e = ProcessExecutor::start(mock_worker(), &[]).unwrap();
    let before = e.pid().unwrap();
    let r = e.execute(
        "while True:\n    pass\n",
        Duration::from_secs(1),
        &mut NoRetrieval,
    );
    assert_eq!(r.error_type(), Some("Timeout"));
    assert_ne!(e.pid().unwrap(), before);
    assert!(!std::path::Path::new(&format!("/proc/{before}")).exists());
}

#[test]
fn shutdown_stops_the_worker() {
    let mut e = ProcessExecutor::start(mock_worker(), &[]).unwrap();
    let pid = e.pid().unwrap();
    e.shutdown().unwrap();
    assert_eq!(e.pid(), None);
    std::thread::sleep(Duration::from_millis(50));
    assert!(!std::path::Path::new(&format!("/proc/{pid}")).exists());
}
