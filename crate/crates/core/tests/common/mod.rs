#![allow(dead_code)]

pub mod contract;
pub mod oracle;
pub mod suite;

use std::path::{Path, PathBuf};

use actkit::gateway::RetryPolicy;
use actkit::harness::{cmd_run, Dataset, EffectiveConfig, RunOutcome, Settings};
use actkit::LoopOptions;

use suite::Fixture;

/// Scripted provider, in-process kernel, deterministic embedder.
pub fn offline_settings(f: &Fixture) -> Settings {
    Settings {
        transcript: Some(f.transcript.clone()),
        mock_executor: Some(true),
        ..Default::default()
    }
}

pub fn no_retry() -> LoopOptions {
    LoopOptions {
        retry: RetryPolicy::none(),
        ..Default::default()
    }
}

/// A new library directory with the shipped plugins installed.
pub fn fresh_library(dir: &Path) -> PathBuf {
    actkit::registry::install_plugins(dir).unwrap();
    dir.to_path_buf()
}

pub fn run(f: &Fixture, settings: Settings, library: &Path, out: &Path) -> RunOutcome {
    let cfg: EffectiveConfig = settings.resolve().unwrap();
    let ds = Dataset::load(&f.dataset).unwrap();
    cmd_run(&ds, &cfg, library, out, &no_retry()).unwrap()
}
