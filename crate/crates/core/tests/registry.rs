use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use actkit::registry::{
    actions_dir, builtin_actions, install_plugins, load_initial_actions, manifest_path,
    plugins_dir, record_json, shipped_plugins, RegistryError,
};
use actkit::retrieval::{
    index_file, EmbedderKind, EmbeddingIndex, TrigramEmbedder, DETERMINISTIC_DIM,
};
use actkit::{ActionRecord, Origin, Step, StepStatus};
use chrono::{TimeZone, Utc};
use proptest::prelude::*;

fn def(name: &str, doc: &str) -> ActionRecord {
    ActionRecord {
        name: name.into(),
        docstring: doc.into(),
        source: format!("def {name}(x):\n    \"\"\"{doc}\"\"\"\n    return x\n"),
        origin: Origin::Generated,
        created_by_task: None,
        created_at: Utc.timestamp_opt(0, 0).unwrap(),
        embedding: None,
        complexity: Some(1),
    }
}

fn step(defs: Vec<ActionRecord>) -> Step {
    Step {
        index: 1,
        thought: String::new(),
        code: String::new(),
        observation: String::new(),
        status: StepStatus::Ok,
        defined_functions: defs,
        is_novel: true,
        final_answer: None,
    }
}

fn when() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap()
}

fn open_index(dir: &Path) -> EmbeddingIndex<f64> {
    EmbeddingIndex::open(dir, DETERMINISTIC_DIM, EmbedderKind::DeterministicTest).unwrap()
}

#[test]
fn fresh_library_has_the_builtins() {
    let tmp = tempfile::tempdir().unwrap();
    let (lib, problems) = load_initial_actions(tmp.path(), true).unwrap();
    assert!(problems.is_empty());
    let names: Vec<_> = lib
        .human_actions()
        .iter()
        .map(|r| r.name.as_str())
        .collect();
    assert_eq!(names, ["submit_final_answer", "get_relevant_actions"]);
    assert!(lib.generated_actions().is_empty());
    let submit = lib.get("submit_final_answer").unwrap();
    assert_eq!(
        submit.docstring,
        "Submits the final answer to the given problem."
    );
    assert!(manifest_path(tmp.path()).is_file());
    assert!(!lib.is_frozen());
}

#[test]
fn accumulated_actions_survive_reopening() {
    let tmp = tempfile::tempdir().unwrap();
    let (mut lib, _) = load_initial_actions(tmp.path(), true).unwrap();
    let out = lib
        .accumulate(
            &step(vec![
                def("area", "Area of a square."),
                def("perimeter", "Perimeter of a square."),
            ]),
            "t1",
            when(),
        )
        .unwrap();
    assert!(out.storage_error.is_none());
    assert_eq!(out.accepted.len(), 2);
    assert_eq!(out.accepted[0].created_by_task.as_deref(), Some("t1"));
    let (again, _) = load_initial_actions(tmp.path(), true).unwrap();
    assert_eq!(again.generated_actions(), lib.generated_actions());
    assert_eq!(again.manifest().counts.generated, 2);
    let text = fs::read_to_string(actions_dir(tmp.path()).join("area.json")).unwrap();
    assert_eq!(text, record_json(lib.get("area").unwrap()));
    assert!(text.contains("\"created_at\": \"2024-05-01T12:00:00Z\""));
}

#[test]
fn first_definition_wins_and_undocumented_is_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let (mut lib, _) = load_initial_actions(tmp.path(), true).unwrap();
    lib.accumulate(&step(vec![def("f", "First.")]), "a", when())
        .unwrap();
    let mut second = def("f", "Second.");
    second.source.push_str("# changed\n");
    let out = lib
        .accumulate(
            &step(vec![
                second,
                def("g", ""),
                def("submit_final_answer", "Shadow."),
            ]),
            "b",
            when(),
        )
        .unwrap();
    assert!(out.accepted.is_empty());
    assert_eq!(lib.get("f").unwrap().docstring, "First.");
    assert!(lib.get("g").is_none());
    assert_eq!(
        lib.get("submit_final_answer").unwrap().origin,
        Origin::Human
    );

    // duplicates within one step: the first occurrence is kept
    let out = lib
        .accumulate(&step(vec![def("h", "One."), def("h", "Two.")]), "c", when())
        .unwrap();
    assert_eq!(out.accepted.len(), 1);
    assert_eq!(lib.get("h").unwrap().docstring, "One.");
}

#[test]
fn only_successful_steps_accumulate() {
    let mut lib = actkit::ActionLibrary::ephemeral();
    let mut s = step(vec![def("f", "Doc.")]);
    s.status = StepStatus::ExecError;
    assert!(matches!(
        lib.accumulate(&s, "t", when()),
        Err(RegistryError::NotExecuted(StepStatus::ExecError))
    ));
    assert!(lib.get("f").is_none());
}

#[test]
fn frozen_library_rejects_writes() {
    let tmp = tempfile::tempdir().unwrap();
    let (mut lib, _) = load_initial_actions(tmp.path(), true).unwrap();
    lib.freeze().unwrap();
    assert!(matches!(
        lib.accumulate(&step(vec![def("f", "Doc.")]), "t", when()),
        Err(RegistryError::Frozen)
    ));
    let (reopened, _) = load_initial_actions(tmp.path(), true).unwrap();
    assert!(reopened.is_frozen());
    lib.thaw().unwrap();
    assert_eq!(
        lib.accumulate(&step(vec![def("f", "Doc.")]), "t", when())
            .unwrap()
            .accepted
            .len(),
        1
    );
}

#[test]
fn read_only_handle_never_writes() {
    let tmp = tempfile::tempdir().unwrap();
    let (mut lib, _) = load_initial_actions(tmp.path(), true).unwrap();
    let manifest = fs::read(manifest_path(tmp.path())).unwrap();
    lib.set_read_only();
    let out = lib
        .accumulate(&step(vec![def("f", "Doc.")]), "t", when())
        .unwrap();
    assert_eq!(out.accepted.len(), 1);
    assert!(lib.get("f").is_some());
    lib.freeze().unwrap();
    assert_eq!(fs::read_dir(actions_dir(tmp.path())).unwrap().count(), 0);
    assert_eq!(fs::read(manifest_path(tmp.path())).unwrap(), manifest);
}

#[test]
fn plugins_load_only_when_enabled() {
    let tmp = tempfile::tempdir().unwrap();
    let written = install_plugins(tmp.path()).unwrap();
    let shipped: Vec<_> = shipped_plugins().into_iter().map(|p| p.name).collect();
    assert_eq!(written, shipped);
    assert!(install_plugins(tmp.path()).unwrap().is_empty());
    let (on, problems) = load_initial_actions(tmp.path(), true).unwrap();
    assert!(problems.is_empty(), "{problems:?}");
    assert_eq!(
        on.human_actions().len(),
        builtin_actions().len() + shipped.len()
    );
    let (off, _) = load_initial_actions(tmp.path(), false).unwrap();
    assert_eq!(off.human_actions().len(), builtin_actions().len());
}

#[test]
fn bad_plugins_are_reported_and_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = plugins_dir(tmp.path());
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("broken.json"), "{ not json").unwrap();
    let mut gen = def("made_up", "Doc.");
    fs::write(dir.join("gen.json"), record_json(&gen)).unwrap();
    gen.origin = Origin::Human;
    gen.docstring.clear();
    gen.name = "nodoc".into();
    fs::write(dir.join("nodoc.json"), record_json(&gen)).unwrap();
    let mut dup = builtin_actions()[1].clone();
    dup.source = "def submit_final_answer(a):\n    return a\n".into();
    fs::write(dir.join("dup.json"), record_json(&dup)).unwrap();
    let mut fine = def("fine", "A fine plugin.");
    fine.origin = Origin::Human;
    fs::write(dir.join("fine.json"), record_json(&fine)).unwrap();

    let (lib, problems) = load_initial_actions(tmp.path(), true).unwrap();
    let files: BTreeSet<_> = problems
        .iter()
        .map(|p| p.path.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        files,
        ["broken.json", "dup.json", "gen.json", "nodoc.json"]
            .map(String::from)
            .into()
    );
    assert!(lib.get("fine").is_some());
}

#[test]
fn generated_action_cannot_shadow_a_human_one() {
    let tmp = tempfile::tempdir().unwrap();
    load_initial_actions(tmp.path(), true).unwrap();
    let mut rec = def("submit_final_answer", "Sneaky.");
    rec.origin = Origin::Generated;
    fs::write(
        actions_dir(tmp.path()).join("submit_final_answer.json"),
        record_json(&rec),
    )
    .unwrap();
    let (lib, problems) = load_initial_actions(tmp.path(), true).unwrap();
    assert_eq!(problems.len(), 1);
    assert!(problems[0].message.contains("shadows"));
    assert_eq!(
        lib.get("submit_final_answer").unwrap().origin,
        Origin::Human
    );
}

#[test]
fn verify_finds_index_drift() {
    let tmp = tempfile::tempdir().unwrap();
    let (mut lib, _) = load_initial_actions(tmp.path(), true).unwrap();
    let mut index = open_index(tmp.path());
    let out = lib
        .accumulate(
            &step(vec![def("f", "Doc one."), def("g", "Doc two.")]),
            "t",
            when(),
        )
        .unwrap();
    for r in &out.accepted {
        index.index_action(&TrigramEmbedder, r).unwrap();
    }
    assert!(lib.verify(&index).is_empty(), "{:?}", lib.verify(&index));
    assert!(index_file(tmp.path()).is_file());
    let reopened = open_index(tmp.path());
    assert_eq!(reopened, index);

    index.remove("g");
    index.insert("ghost", vec![1.0; DETERMINISTIC_DIM]).unwrap();
    let problems = lib.verify(&index);
    assert!(problems
        .iter()
        .any(|p| p.contains("`g` has no index entry")));
    assert!(problems
        .iter()
        .any(|p| p.contains("`ghost` has no generated action")));

    fs::remove_file(actions_dir(tmp.path()).join("f.json")).unwrap();
    assert!(lib
        .verify(&reopened)
        .iter()
        .any(|p| p.contains("manifest counts 2")));
}

#[test]
fn merge_keeps_existing_records() {
    let a_dir = tempfile::tempdir().unwrap();
    let (mut a, _) = load_initial_actions(a_dir.path(), true).unwrap();
    a.accumulate(&step(vec![def("f", "Mine.")]), "t", when())
        .unwrap();
    let mut b = actkit::ActionLibrary::ephemeral();
    b.accumulate(
        &step(vec![def("f", "Theirs."), def("g", "New.")]),
        "u",
        when(),
    )
    .unwrap();
    assert_eq!(a.merge_from(&b).unwrap(), ["g"]);
    assert_eq!(a.get("f").unwrap().docstring, "Mine.");
    assert!(actions_dir(a_dir.path()).join("g.json").is_file());
}

fn name_strategy() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "alpha",
        "beta",
        "gamma",
        "delta",
        "eps",
        "submit_final_answer",
        "bad name",
    ])
    .prop_map(str::to_string)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn library_only_grows(batches in prop::collection::vec(
        prop::collection::vec((name_strategy(), prop::bool::ANY), 0..5), 1..6))
    {
        let tmp = tempfile::tempdir().unwrap();
        let (mut lib, _) = load_initial_actions(tmp.path(), true).unwrap();
        let mut prev = lib.clone();
        for (i, batch) in batches.iter().enumerate() {
            let defs = batch
                .iter()
                .map(|(n, documented)| def(n, if *documented { "Doc." } else { "" }))
                .collect();
            lib.accumulate(&step(defs), &format!("t{i}"), when()).unwrap();
            prop_assert!(prev.snapshot_names().is_subset(&lib.snapshot_names()));
            for (name, rec) in prev.generated_actions() {
                prop_assert_eq!(&lib.generated_actions()[name], rec);
            }
            prev = lib.clone();
        }
        for rec in lib.generated_actions().values() {
            prop_assert!(!rec.docstring.is_empty());
            prop_assert!(rec.validate(None).is_ok());
        }
        let (back, _) = load_initial_actions(tmp.path(), true).unwrap();
        prop_assert_eq!(back.generated_actions(), lib.generated_actions());
    }
}
