//! Hand-written scripted tasks: datasets, transcripts and attachments.

use std::fs;
use std::path::{Path, PathBuf};

use actkit::gateway::TranscriptEntry;
use serde_json::json;

pub struct Fixture {
    pub dir: PathBuf,
    pub dataset: PathBuf,
    pub transcript: PathBuf,
}

pub struct ScriptedTask {
    pub id: &'static str,
    pub question: String,
    pub attachments: Vec<PathBuf>,
    pub expected: &'static str,
    pub responses: Vec<String>,
}

pub fn reply(thought: &str, code: &str) -> String {
    format!("{thought}\n```python\n{}\n```", code.trim_end())
}

const ESSAY: &str = "The quick brown fox jumps over the lazy dog.\nA second line follows here.\n";
const PEOPLE: &str = "name,age,city\nAda,36,London\nGrace,85,Arlington\nLinus,54,Helsinki\n";
const NUMBERS: &str = "3\n14\n15\n92\n65\n";

fn write_files(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let files = dir.join("files");
    fs::create_dir_all(&files).unwrap();
    let essay = files.join("essay.txt");
    let people = files.join("people.csv");
    let numbers = files.join("numbers.txt");
    fs::write(&essay, ESSAY).unwrap();
    fs::write(&people, PEOPLE).unwrap();
    fs::write(&numbers, NUMBERS).unwrap();
    (essay, people, numbers)
}

const F_TO_C: &str = r#"def fahrenheit_to_celsius(f):
    """Convert a temperature from degrees Fahrenheit to degrees Celsius."""
    return (f - 32) * 5 / 9"#;

const WORDS_WITH: &str = r#"def count_words_containing(text, letter):
    """Count the words in a text that contain a given letter, ignoring case."""
    count = 0
    for word in text.split():
        if letter.lower() in word.lower():
            count += 1
    return count"#;

const READ_CSV: &str = r#"def read_csv_rows(path):
    """Read a CSV file with a header row into a list of dictionaries."""
    with open(path) as fh:
        lines = [l for l in fh.read().splitlines() if l.strip()]
    header = [h.strip() for h in lines[0].split(",")]
    rows = []
    for line in lines[1:]:
        values = [v.strip() for v in line.split(",")]
        rows.append(dict(zip(header, values)))
    return rows"#;

const GCD: &str = r#"def gcd(a, b):
    """Return the greatest common divisor of two integers."""
    while b:
        a, b = b, a % b
    return abs(a)"#;

const LCM: &str = r#"def lcm(a, b):
    """Return the least common multiple of two integers."""
    return abs(a * b) // gcd(a, b)"#;

/// Generated actions the train phase must add: documented functions from
/// successful steps whose names were not yet known. Counted by hand from
/// the transcripts below.
pub const EXPECTED_ACCUMULATED: &[&str] = &[
    "count_words_containing",
    "fahrenheit_to_celsius",
    "gcd",
    "lcm",
    "read_csv_rows",
];

pub fn suite_tasks(dir: &Path) -> Vec<ScriptedTask> {
    let (essay, people, _) = write_files(dir);
    let essay_s = essay.display().to_string();
    let people_s = people.display().to_string();
    vec![
        ScriptedTask {
            id: "s01_sum_range",
            question: "What is the sum of the integers from 1 to 100?".into(),
            attachments: vec![],
            expected: "5050",
            responses: vec![
                reply("Add the integers with the built-in sum.", "print(sum(range(1, 101)))"),
                reply("The printed total is the answer.", "submit_final_answer(sum(range(1, 101)))"),
            ],
        },
        ScriptedTask {
            id: "s02_boiling_point",
            question: "Water boils at 212 degrees Fahrenheit. What is that in Celsius?".into(),
            attachments: vec![],
            expected: "100",
            responses: vec![
                reply(
                    "A reusable conversion function will help here.",
                    &format!("{F_TO_C}\n\nprint(fahrenheit_to_celsius(212))"),
                ),
                reply("Submit the converted value.", "submit_final_answer(fahrenheit_to_celsius(212))"),
            ],
        },
        ScriptedTask {
            id: "s03_essay_words",
            question: "How many words are in the attached text file?".into(),
            attachments: vec![essay.clone()],
            expected: "14",
            responses: vec![
                reply(
                    "Read the file with the inspection tool and split on whitespace.",
                    &format!("text = inspect_file_as_text({essay_s:?})\nprint(len(text.split()))"),
                ),
                reply("Report the count.", "submit_final_answer(len(text.split()))"),
            ],
        },
        ScriptedTask {
            id: "s04_words_with_o",
            question: "How many words in the attached file contain the letter o?".into(),
            attachments: vec![essay.clone()],
            expected: "6",
            responses: vec![
                reply(
                    "Write a helper that counts words containing a letter.",
                    &format!("{WORDS_WITH}\n\ntext = inspect_file_as_text({essay_s:?})\nprint(count_words_containing(text, \"o\"))"),
                ),
                reply("Submit the count.", "submit_final_answer(count_words_containing(text, \"o\"))"),
            ],
        },
        ScriptedTask {
            id: "s05_oldest_person",
            question: "Who is the oldest person in the attached CSV file?".into(),
            attachments: vec![people.clone()],
            expected: "Grace",
            responses: vec![
                reply(
                    "Parse the CSV into rows first.",
                    &format!("{READ_CSV}\n\nrows = read_csv_rows({people_s:?})\nprint(len(rows), rows[0][\"name\"])"),
                ),
                reply(
                    "Pick the row with the largest age.",
                    "oldest = max(rows, key=lambda r: int(r[\"age\"]))\nsubmit_final_answer(oldest[\"name\"])",
                ),
            ],
        },
        ScriptedTask {
            id: "s06_mild_day",
            question: "Convert 50 degrees Fahrenheit to Celsius.".into(),
            attachments: vec![],
            expected: "10",
            responses: vec![
                reply(
                    "There may already be a conversion action.",
                    "get_relevant_actions(\"convert a temperature from Fahrenheit to Celsius\")",
                ),
                reply("Use the retrieved action.", "print(fahrenheit_to_celsius(50))"),
                reply("Submit it.", "submit_final_answer(fahrenheit_to_celsius(50))"),
            ],
        },
        ScriptedTask {
            id: "s07_capitals",
            question: "How many uppercase letters are in the phrase 'Hello World From Rust'?".into(),
            attachments: vec![],
            expected: "4",
            responses: vec![
                "I need to count the capital letters in the phrase.".into(),
                reply(
                    "Count them with a comprehension.",
                    "phrase = \"Hello World From Rust\"\nprint(len([c for c in phrase if c.isupper()]))",
                ),
                reply("Submit.", "submit_final_answer(len([c for c in phrase if c.isupper()]))"),
            ],
        },
        ScriptedTask {
            id: "s08_power",
            question: "What is 2 raised to the 20th power?".into(),
            attachments: vec![],
            expected: "1048576",
            responses: vec![
                reply(
                    "Define a helper and print a running total.",
                    "def square(x):\n    \"\"\"Square a number.\"\"\"\n    return x * x\n\nprint(undefined_total)",
                ),
                reply("That name was wrong; compute directly.", "print(2 ** 20)"),
                reply("Submit.", "submit_final_answer(2 ** 20)"),
            ],
        },
        ScriptedTask {
            id: "s09_gcd",
            question: "What is the greatest common divisor of 1071 and 462?".into(),
            attachments: vec![],
            expected: "21",
            responses: vec![
                reply("Euclid's algorithm.", &format!("{GCD}\n\nprint(gcd(1071, 462))")),
                reply("Submit.", "submit_final_answer(gcd(1071, 462))"),
            ],
        },
        ScriptedTask {
            id: "s10_lcm",
            question: "What is the least common multiple of 21 and 6?".into(),
            attachments: vec![],
            expected: "42",
            responses: vec![
                reply(
                    "An lcm needs a gcd; look for one.",
                    "get_relevant_actions(\"greatest common divisor of two integers\", k=2)",
                ),
                reply("Build lcm on top of gcd.", &format!("{LCM}\n\nprint(lcm(21, 6))")),
                reply("Submit.", "submit_final_answer(lcm(21, 6))"),
            ],
        },
        ScriptedTask {
            id: "s11_double",
            question: "What is 21 doubled?".into(),
            attachments: vec![],
            expected: "42",
            responses: vec![
                reply("A tiny helper.", "def double_it(x):\n    return 2 * x\n\nprint(double_it(21))"),
                reply("Submit.", "submit_final_answer(double_it(21))"),
            ],
        },
        ScriptedTask {
            id: "s12_five_words",
            question: "How many words are in 'one two three four five'?".into(),
            attachments: vec![],
            expected: "5",
            responses: vec![
                reply(
                    "Write a counting helper again and count the words.",
                    "def count_words_containing(text, letter):\n    \"\"\"Count words containing a letter.\"\"\"\n    return len([w for w in text.split() if letter in w])\n\nwords = \"one two three four five\".split()\nprint(len(words))",
                ),
                reply("Submit.", "submit_final_answer(len(words))"),
            ],
        },
    ]
}

/// Two tasks answerable with built-ins and human actions, four that need a
/// new function. Every transcript has exactly two steps.
pub fn ablation_tasks(dir: &Path) -> Vec<ScriptedTask> {
    let (_, _, numbers) = write_files(dir);
    let numbers_s = numbers.display().to_string();
    let novel = |id, question: &str, expected, def: &str, call: &str| ScriptedTask {
        id,
        question: question.into(),
        attachments: vec![],
        expected,
        responses: vec![
            reply(
                "Write a helper for this.",
                &format!("{def}\n\nprint({call})"),
            ),
            reply("Submit.", &format!("submit_final_answer({call})")),
        ],
    };
    vec![
        ScriptedTask {
            id: "a1_arithmetic",
            question: "What is 12 squared plus 5?".into(),
            attachments: vec![],
            expected: "149",
            responses: vec![
                reply("Direct arithmetic.", "print(12 ** 2 + 5)"),
                reply("Submit.", "submit_final_answer(12 ** 2 + 5)"),
            ],
        },
        ScriptedTask {
            id: "a2_line_count",
            question: "How many lines does the attached file have?".into(),
            attachments: vec![numbers.clone()],
            expected: "5",
            responses: vec![
                reply(
                    "Read it with the inspection tool.",
                    &format!("text = inspect_file_as_text({numbers_s:?})\nprint(len(text.splitlines()))"),
                ),
                reply("Submit.", "submit_final_answer(len(text.splitlines()))"),
            ],
        },
        novel(
            "a3_digit_sum",
            "What is the sum of the decimal digits of 2 to the 15th power?",
            "26",
            "def digit_sum(n):\n    \"\"\"Sum the decimal digits of a non-negative integer.\"\"\"\n    total = 0\n    while n > 0:\n        total += n % 10\n        n //= 10\n    return total",
            "digit_sum(2 ** 15)",
        ),
        novel(
            "a4_vowels",
            "How many vowels are in 'Programming languages evolve'?",
            "10",
            "def count_vowels(text):\n    \"\"\"Count the vowels in a string.\"\"\"\n    return len([c for c in text.lower() if c in \"aeiou\"])",
            "count_vowels(\"Programming languages evolve\")",
        ),
        novel(
            "a5_fibonacci",
            "What is the 20th Fibonacci number?",
            "6765",
            "def fibonacci(n):\n    \"\"\"Return the n-th Fibonacci number, with fibonacci(1) == 1.\"\"\"\n    a, b = 0, 1\n    for _ in range(n):\n        a, b = b, a + b\n    return a",
            "fibonacci(20)",
        ),
        novel(
            "a6_palindromes",
            "How many of level, rotor, agent, civic, model are palindromes?",
            "3",
            "def is_palindrome(word):\n    \"\"\"Tell whether a word reads the same backwards.\"\"\"\n    return word == word[::-1]",
            "len([w for w in [\"level\", \"rotor\", \"agent\", \"civic\", \"model\"] if is_palindrome(w)])",
        ),
    ]
}

pub const ABLATION_NON_NOVEL: &[&str] = &["a1_arithmetic", "a2_line_count"];

/// Writes `tasks.jsonl` and `transcript.jsonl` under `dir`.
pub fn write_fixture(dir: &Path, tasks: &[ScriptedTask]) -> Fixture {
    let mut dataset = String::new();
    let mut transcript = String::new();
    for t in tasks {
        let line = json!({
            "task_id": t.id,
            "question": t.question,
            "attachments": t.attachments,
            "expected_answer": t.expected,
        });
        dataset.push_str(&line.to_string());
        dataset.push('\n');
        for (i, r) in t.responses.iter().enumerate() {
            let e = TranscriptEntry {
                task_id: t.id.to_string(),
                step: i as u32 + 1,
                response: r.clone(),
            };
            transcript.push_str(&serde_json::to_string(&e).unwrap());
            transcript.push('\n');
        }
    }
    let ds = dir.join("tasks.jsonl");
    let tr = dir.join("transcript.jsonl");
    fs::write(&ds, dataset).unwrap();
    fs::write(&tr, transcript).unwrap();
    Fixture {
        dir: dir.to_path_buf(),
        dataset: ds,
        transcript: tr,
    }
}

/// Every file under `dir` with its bytes, in path order.
pub fn snapshot_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = fs::read(&p).unwrap();
                out.push((p, bytes));
            }
        }
    }
    out.sort();
    out
}

fn blank_timestamps(line: &str) -> String {
    const KEY: &str = "\"created_at\":\"";
    let mut out = String::new();
    let mut rest = line;
    while let Some(i) = rest.find(KEY) {
        out.push_str(&rest[..i + KEY.len()]);
        rest = &rest[i + KEY.len()..];
        let end = rest.find('"').expect("closed string");
        out.push('*');
        rest = &rest[end..];
    }
    out.push_str(rest);
    out
}

/// Trajectory logs of a run directory, byte for byte except that creation
/// timestamps are blanked.
pub fn normalized_logs(run_dir: &Path) -> Vec<(String, String)> {
    snapshot_tree(&run_dir.join("trajectories"))
        .into_iter()
        .map(|(path, bytes)| {
            let text = String::from_utf8(bytes).unwrap();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (
                name,
                text.split('\n')
                    .map(blank_timestamps)
                    .collect::<Vec<_>>()
                    .join("\n"),
            )
        })
        .collect()
}
