//! Behaviour every executor must show, run against each implementation.

use std::cell::RefCell;
use std::time::{Duration, Instant};

use actkit::executor::{CallbackResult, Executor, NoRetrieval};
use actkit::{ActionRecord, Origin};
use chrono::{DateTime, Utc};

pub type Factory<'a> = &'a dyn Fn(&[ActionRecord]) -> Box<dyn Executor>;

const T: Duration = Duration::from_secs(10);

pub fn human_actions() -> Vec<ActionRecord> {
    let mut v = actkit::registry::builtin_actions();
    v.push(ActionRecord {
        name: "add_numbers".into(),
        docstring: "Add two numbers.".into(),
        source: "def add_numbers(a, b):\n    \"\"\"Add two numbers.\"\"\"\n    return a + b\n"
            .into(),
        origin: Origin::Human,
        created_by_task: None,
        created_at: DateTime::<Utc>::UNIX_EPOCH,
        embedding: None,
        complexity: Some(1),
    });
    v
}

fn ensure(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn run(e: &mut dyn Executor, code: &str) -> actkit::executor::ExecResult {
    e.execute(code, T, &mut NoRetrieval)
}

pub fn persistence(f: Factory) -> Result<(), String> {
    let mut e = f(&human_actions());
    let a = run(e.as_mut(), "x = 41");
    ensure(a.ok, || format!("assignment failed: {a:?}"))?;
    let b = run(e.as_mut(), "print(x + 1)");
    ensure(b.ok && b.stdout == "42\n", || {
        format!("state lost between requests: {b:?}")
    })
}

pub fn result_repr(f: Factory) -> Result<(), String> {
    let mut e = f(&human_actions());
    let r = run(e.as_mut(), "[1, 2] + [3]");
    ensure(r.result_repr.as_deref() == Some("[1, 2, 3]"), || {
        format!("{r:?}")
    })?;
    let r = run(e.as_mut(), "y = 3");
    ensure(r.result_repr.is_none(), || {
        format!("assignment produced a repr: {r:?}")
    })
}

pub fn defined_functions(f: Factory) -> Result<(), String> {
    let mut e = f(&human_actions());
    let src = "def count_keyword_hits(text):\n    \"\"\"Count how many of the listed keywords occur in the text.\"\"\"\n    hits = 0\n    for word in ['alpha', 'beta', 'gamma']:\n        if word in text:\n            hits += 1\n    return hits\n\ndef no_doc(x):\n    return x\n\nprint(count_keyword_hits('alpha and gamma'))\n";
    let r = run(e.as_mut(), src);
    ensure(r.ok && r.stdout == "2\n", || format!("{r:?}"))?;
    ensure(r.defined_functions.len() == 2, || {
        format!("expected two definitions: {:?}", r.defined_functions)
    })?;
    let d = &r.defined_functions[0];
    ensure(d.name == "count_keyword_hits", || d.name.clone())?;
    ensure(
        d.docstring == "Count how many of the listed keywords occur in the text.",
        || d.docstring.clone(),
    )?;
    // one loop and one branch
    ensure(d.complexity == Some(3), || {
        format!("complexity {:?}", d.complexity)
    })?;
    ensure(
        d.source.starts_with("def count_keyword_hits(text):") && d.source.contains("return hits"),
        || d.source.clone(),
    )?;
    let n = &r.defined_functions[1];
    ensure(
        n.name == "no_doc" && n.docstring.is_empty() && n.complexity == Some(1),
        || format!("{n:?}"),
    )?;
    let failed = run(
        e.as_mut(),
        "def later():\n    return 1\nraise ValueError('no')\n",
    );
    ensure(!failed.ok && failed.defined_functions.is_empty(), || {
        format!("failed snippet reported definitions: {failed:?}")
    })
}

pub fn traceback(f: Factory) -> Result<(), String> {
    let mut e = f(&human_actions());
    let r = run(
        e.as_mut(),
        "def f(n):\n    return n / 0\nprint('before')\nf(3)\n",
    );
    ensure(!r.ok, || "division by zero succeeded".into())?;
    let err = r.error.as_ref().ok_or("no error payload")?;
    ensure(err.ty == "ZeroDivisionError", || err.ty.clone())?;
    ensure(
        err.traceback.contains("line 4") && err.traceback.contains("line 2"),
        || err.traceback.clone(),
    )?;
    ensure(r.stdout == "before\n", || {
        format!("stdout before the error was lost: {:?}", r.stdout)
    })?;
    let obs = actkit::executor::to_observation(&r, 8192);
    ensure(obs.starts_with("ZeroDivisionError: "), || obs.clone())
}

pub fn syntax_error(f: Factory) -> Result<(), String> {
    let mut e = f(&human_actions());
    let r = run(e.as_mut(), "def broken(:\n    pass\n");
    ensure(r.error_type() == Some("SyntaxError"), || format!("{r:?}"))?;
    let ok = run(e.as_mut(), "print(1)");
    ensure(ok.ok, || "kernel unusable after a syntax error".into())
}

pub fn final_answer(f: Factory) -> Result<(), String> {
    let mut e = f(&human_actions());
    let r = run(e.as_mut(), "answer = 6 * 7\nsubmit_final_answer(answer)\n");
    ensure(r.ok && r.final_answer.as_deref() == Some("42"), || {
        format!("{r:?}")
    })?;
    let again = run(e.as_mut(), "print('next')");
    ensure(again.final_answer.is_none(), || {
        "final answer reported twice".into()
    })?;
    let failed = run(
        e.as_mut(),
        "submit_final_answer('x')\nraise ValueError('late')\n",
    );
    ensure(!failed.ok && failed.final_answer.is_none(), || {
        format!("answer kept on a failed snippet: {failed:?}")
    })
}

pub fn timeout_and_restart(f: Factory) -> Result<(), String> {
    let mut e = f(&human_actions());
    run(e.as_mut(), "marker = 1");
    let start = Instant::now();
    let r = e.execute(
        "while True:\n    pass\n",
        Duration::from_secs(2),
        &mut NoRetrieval,
    );
    let took = start.elapsed();
    ensure(r.error_type() == Some("Timeout"), || format!("{r:?}"))?;
    ensure(
        took >= Duration::from_secs(2) && took < Duration::from_secs(8),
        || format!("timeout took {took:?}"),
    )?;
    let gone = run(e.as_mut(), "marker");
    ensure(gone.error_type() == Some("NameError"), || {
        format!("namespace survived the restart: {gone:?}")
    })?;
    let human = run(e.as_mut(), "add_numbers(2, 3)");
    ensure(human.result_repr.as_deref() == Some("5"), || {
        format!("human actions not reloaded: {human:?}")
    })
}

pub fn reset(f: Factory) -> Result<(), String> {
    let mut e = f(&human_actions());
    run(e.as_mut(), "y = 1\ndef helper():\n    return 2\n");
    e.reset().map_err(|x| x.to_string())?;
    let r = run(e.as_mut(), "y");
    ensure(r.error_type() == Some("NameError"), || format!("{r:?}"))?;
    let r = run(e.as_mut(), "helper()");
    ensure(r.error_type() == Some("NameError"), || format!("{r:?}"))?;
    let r = run(e.as_mut(), "add_numbers(1, 1)");
    ensure(r.result_repr.as_deref() == Some("2"), || {
        format!("human action missing after reset: {r:?}")
    })
}

pub fn load(f: Factory) -> Result<(), String> {
    let mut e = f(&human_actions());
    let code = "import math\ndef circle_area(r):\n    \"\"\"Area of a circle.\"\"\"\n    return math.pi * r * r\nprint('side effect')\nz = 5\n";
    for _ in 0..2 {
        let r = e.load(code).map_err(|x| x.to_string())?;
        ensure(r.ok && r.stdout.is_empty(), || {
            format!("load ran more than definitions: {r:?}")
        })?;
    }
    let r = run(e.as_mut(), "round(circle_area(1), 4)");
    ensure(r.result_repr.as_deref() == Some("3.1416"), || {
        format!("{r:?}")
    })?;
    let r = run(e.as_mut(), "z");
    ensure(r.error_type() == Some("NameError"), || {
        format!("load executed an assignment: {r:?}")
    })
}

pub fn analyze(f: Factory) -> Result<(), String> {
    let mut e = f(&human_actions());
    let r = e
        .analyze("def h():\n    return [x for x in map(lambda v: v, [1])]\nfoo(1)\nprint(add_numbers(1, 2))\n")
        .map_err(|x| x.to_string())?;
    let a = r
        .analysis
        .as_ref()
        .ok_or_else(|| format!("no analysis: {r:?}"))?;
    ensure(a.function_definitions == 2, || format!("{a:?}"))?;
    ensure(a.called_names == ["add_numbers", "foo"], || {
        format!("{a:?}")
    })?;
    let r = run(e.as_mut(), "foo");
    ensure(r.error_type() == Some("NameError"), || {
        "analyze executed code".into()
    })?;
    let bad = e.analyze("def (").map_err(|x| x.to_string())?;
    ensure(!bad.ok && bad.error_type() == Some("SyntaxError"), || {
        format!("{bad:?}")
    })
}

pub fn retrieval_callback(f: Factory) -> Result<(), String> {
    let mut e = f(&human_actions());
    let calls = RefCell::new(Vec::new());
    let mut handler = |q: &str, k: Option<i64>| {
        calls.borrow_mut().push((q.to_string(), k));
        Ok(vec![CallbackResult {
            name: "triple".into(),
            docstring: "Multiply a number by three.".into(),
            source:
                "def triple(x):\n    \"\"\"Multiply a number by three.\"\"\"\n    return 3 * x\n"
                    .into(),
            score: 0.9,
        }])
    };
    let r = e.execute(
        "found = get_relevant_actions('times three', k=3)\nprint(len(found))\nprint(triple(4))\n",
        T,
        &mut handler,
    );
    ensure(r.ok && r.stdout == "1\n12\n", || format!("{r:?}"))?;
    ensure(
        calls.borrow().as_slice() == [("times three".to_string(), Some(3))],
        || format!("{:?}", calls.borrow()),
    )?;
    let r = e.execute("get_relevant_actions('anything')", T, &mut handler);
    ensure(r.ok, || format!("{r:?}"))?;
    ensure(
        calls.borrow().last() == Some(&("anything".to_string(), None)),
        || "k should be passed as absent".into(),
    )?;
    let mut failing =
        |_: &str, _: Option<i64>| Err::<Vec<CallbackResult>, _>("index offline".to_string());
    let r = e.execute("get_relevant_actions('x')", T, &mut failing);
    ensure(
        !r.ok
            && r.error
                .as_ref()
                .is_some_and(|x| x.message.contains("index offline")),
        || format!("{r:?}"),
    )
}

pub fn ping(f: Factory) -> Result<(), String> {
    let mut e = f(&human_actions());
    let v = e.ping().map_err(|x| x.to_string())?;
    ensure(v == 1, || format!("protocol version {v}"))
}

pub fn large_output(f: Factory) -> Result<(), String> {
    let mut e = f(&human_actions());
    let r = run(e.as_mut(), "for i in range(3000):\n    print('line', i)\n");
    ensure(r.ok, || format!("{r:?}"))?;
    let obs = actkit::executor::to_observation(&r, 8192);
    ensure(
        obs.chars().count() <= 8192 + 40 && obs.contains("...[truncated "),
        || format!("{} chars", obs.len()),
    )?;
    let next = run(e.as_mut(), "print('still here')");
    ensure(next.stdout == "still here\n", || {
        "one reply per request broken".into()
    })
}

pub fn file_access(f: Factory) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("notes.txt");
    std::fs::write(&path, "first line\nsecond line\n").map_err(|e| e.to_string())?;
    let mut e = f(&human_actions());
    let code = format!(
        "with open({:?}) as fh:\n    lines = fh.read().splitlines()\nprint(len(lines), lines[1])\n",
        path.display().to_string()
    );
    let r = run(e.as_mut(), &code);
    ensure(r.ok && r.stdout == "2 second line\n", || format!("{r:?}"))
}

pub type Check = (&'static str, fn(Factory) -> Result<(), String>);

pub const CHECKS: &[Check] = &[
    ("persistence", persistence),
    ("result_repr", result_repr),
    ("defined_functions", defined_functions),
    ("traceback", traceback),
    ("syntax_error", syntax_error),
    ("final_answer", final_answer),
    ("timeout_and_restart", timeout_and_restart),
    ("reset", reset),
    ("load", load),
    ("analyze", analyze),
    ("retrieval_callback", retrieval_callback),
    ("ping", ping),
    ("large_output", large_output),
    ("file_access", file_access),
];

/// Runs every check, returning the failures.
pub fn run_all(f: Factory) -> Vec<(&'static str, String)> {
    CHECKS
        .iter()
        .filter_map(|(name, check)| check(f).err().map(|e| (*name, e)))
        .collect()
}
