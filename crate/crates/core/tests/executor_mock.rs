mod common;

use actkit::executor::{Executor, MockExecutor};
use actkit::ActionRecord;
use common::contract;

fn mock(human: &[ActionRecord]) -> Box<dyn Executor> {
    Box::new(MockExecutor::start(human).expect("mock kernel starts"))
}

#[test]
fn mock_executor_meets_the_contract() {
    let failures = contract::run_all(&mock);
    assert!(failures.is_empty(), "{failures:#?}");
}
