//! The `rtgen` binary end to end, with budgets small enough to run in
//! seconds.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rtgen_core::session::{LogRecord, SessionLog};

const SMALL: &[&str] = &["--budget", "40", "--population", "20", "--quiet"];
const INTERACTIVE: &[&str] = &[
    "--revise-frequency",
    "10",
    "--revise-after-percentage-coverage",
    "0",
    "--max-times",
    "4",
];

fn rtgen(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtgen"))
        .args(args)
        .env("RTGEN_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn only_dir(root: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn non_interactive_run_writes_the_layout() {
    let root = tempfile::tempdir().unwrap();
    let o = rtgen(&[&["run", "--max-times", "0", "--seed", "7"], SMALL].concat(), root.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = only_dir(root.path());
    assert_eq!(dir.file_name().unwrap(), "arrayintlist-seed7");
    for f in [
        "config.toml",
        "session.jsonl",
        "events.jsonl",
        "coverage_archive.json",
        "preference_archive.json",
        "readability_archive.json",
        "suite.txt",
        "suite.json",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let suite = fs::read_to_string(dir.join("suite.txt")).unwrap();
    assert!(suite.starts_with("// Test suite for ArrayIntList"));
    let log = SessionLog::load(&dir.join("session.jsonl")).unwrap();
    assert_eq!(log.interactions().count(), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 interactions in 0 moments"));
}

#[test]
fn replay_reproduces_the_suite() {
    let root = tempfile::tempdir().unwrap();
    let o = rtgen(&[&["run", "--seed", "7", "--run-id", "first"], SMALL, INTERACTIVE].concat(), root.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let first = root.path().join("first");
    let log = SessionLog::load(&first.join("session.jsonl")).unwrap();
    assert!(log.interactions().count() > 0, "the run should have interacted");
    assert!(first.join("interactions/0001/request.json").is_file());
    assert!(first.join("preference/moment_01.json").is_file());

    let log_path = first.join("session.jsonl");
    let log_arg = log_path.to_str().unwrap();
    let o = rtgen(&["replay", "--log", log_arg, "--seed", "7", "--run-id", "again", "--quiet"], root.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = fs::read(first.join("suite.txt")).unwrap();
    let b = fs::read(root.path().join("again/suite.txt")).unwrap();
    assert_eq!(a, b);

    // The rendered suite file reproduces the text form.
    let suite_json = first.join("suite.json");
    let o = rtgen(&["render-suite", suite_json.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(o.stdout, a);

    // A different seed cannot replay this log.
    let o = rtgen(&["replay", "--log", log_arg, "--seed", "8"], root.path());
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("recorded with seed 7"));

    // Scores missing from the log abort the replay and keep a partial log.
    let truncated = SessionLog {
        records: log
            .records
            .iter()
            .filter(|r| !matches!(r, LogRecord::Interaction(_)))
            .cloned()
            .collect(),
    };
    let cut = root.path().join("cut.jsonl");
    truncated.save(&cut).unwrap();
    let o = rtgen(&["replay", "--log", cut.to_str().unwrap(), "--run-id", "cut", "--quiet"], root.path());
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    let partial = SessionLog::load(&root.path().join("cut/session.jsonl")).unwrap();
    assert!(matches!(partial.records.last(), Some(LogRecord::RunAborted { .. })));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("run.toml");
    fs::write(&cfg, "seed = 3\n[search]\nbudget = 10\npopulation = 10\n[interaction]\nMax_times = 0\n").unwrap();
    let out = root.path().join("out");
    let o = rtgen(
        &["run", "--config", cfg.to_str().unwrap(), "--budget", "12", "--quiet", "--output-root", out.to_str().unwrap()],
        root.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = only_dir(&out);
    let echo = fs::read_to_string(dir.join("config.toml")).unwrap();
    assert!(echo.contains("budget = 12"), "{echo}");
    assert!(echo.contains("population = 10"));
    assert!(echo.contains("Max_times = 0"));
    assert!(echo.contains("seed = 3"));
    let log = SessionLog::load(&dir.join("session.jsonl")).unwrap();
    let header = log.header().unwrap();
    assert_eq!((header.search.max_generations, header.seed), (12, 3));

    // The echo is itself a valid config file.
    let out2 = root.path().join("out2");
    let echo_path = dir.join("config.toml");
    let o = rtgen(
        &["run", "--config", echo_path.to_str().unwrap(), "--quiet", "--output-root", out2.to_str().unwrap()],
        root.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again = only_dir(&out2);
    assert_eq!(
        fs::read(dir.join("suite.txt")).unwrap(),
        fs::read(again.join("suite.txt")).unwrap()
    );
}

#[test]
fn errors_have_distinct_exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let o = rtgen(&["run", "--budget", "5"], root.path());
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("--seed"));

    let o = rtgen(&["run", "--seed", "1", "--readability-threshold", "20"], root.path());
    assert_eq!(code(&o), 3);

    let bad_cfg = root.path().join("bad.toml");
    fs::write(&bad_cfg, "[interaction]\nmax_times = 1\n").unwrap();
    let o = rtgen(&["run", "--config", bad_cfg.to_str().unwrap(), "--seed", "1"], root.path());
    assert_eq!(code(&o), 3);

    let bad_subject = root.path().join("bad.sub");
    fs::write(&bad_subject, "class Broken {\n  fn f( {\n}\n").unwrap();
    let o = rtgen(&["validate-subject", bad_subject.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 4);
    let o = rtgen(&["run", "--seed", "1", "--subject", "/nonexistent.sub"], root.path());
    assert_eq!(code(&o), 4);

    let o = rtgen(&["run", "--seed", "1", "--no-such-flag"], root.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn validate_subject_summarizes_targets() {
    let root = tempfile::tempdir().unwrap();
    let o = rtgen(&["validate-subject", "--targets"], root.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("ArrayIntList: "));
    assert!(text.lines().any(|l| l.starts_with("L104 ")));
}

#[test]
fn exp1_writes_records_and_report() {
    let root = tempfile::tempdir().unwrap();
    let o = rtgen(&["exp1", "--seeds", "2", "--budget", "15", "--population", "20", "--quiet"], root.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = only_dir(root.path());
    let records = fs::read_to_string(dir.join("records.jsonl")).unwrap();
    assert!(records.lines().count() > 10);
    let report = fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("g0"));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().next(), report.lines().next());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["seeds"], 2);
}

#[test]
fn console_mode_reads_scores_from_stdin() {
    use std::io::Write;
    use std::process::Stdio;

    let root = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_rtgen"))
        .args([&["run", "--seed", "2", "--mode", "interactive-console"], SMALL, INTERACTIVE].concat())
        .env("RTGEN_OUTPUT_ROOT", root.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    // A typo first; the prompt must ask again rather than fail.
    let mut input = String::from("seven\n42\n");
    input.push_str(&"7\n".repeat(200));
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("== Interaction 1"));
    let dir = only_dir(root.path());
    let log = SessionLog::load(&dir.join("session.jsonl")).unwrap();
    let scores: Vec<u32> = log.interactions().flat_map(|i| i.scores.iter().map(|s| s.score)).collect();
    assert!(!scores.is_empty());
    assert!(scores.iter().all(|s| *s == 7));
}

#[test]
fn closed_console_aborts_with_partial_log() {
    let root = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rtgen"))
        .args([&["run", "--seed", "2", "--mode", "interactive-console"], SMALL, INTERACTIVE].concat())
        .env("RTGEN_OUTPUT_ROOT", root.path())
        .stdin(std::process::Stdio::null())
        .output()
        .unwrap();
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    let dir = only_dir(root.path());
    let log = SessionLog::load(&dir.join("session.jsonl")).unwrap();
    assert!(matches!(log.records.last(), Some(LogRecord::RunAborted { .. })));
    assert!(!dir.join("suite.txt").exists());
}

#[test]
fn server_mode_serves_until_the_run_ends() {
    use std::io::{BufRead, BufReader};
    use std::process::Stdio;

    let root = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_rtgen"))
        .args(
            [
                &["run", "--seed", "3", "--mode", "interactive-server", "--bind", "127.0.0.1:0", "--exit-when-done"],
                SMALL,
                INTERACTIVE,
            ]
            .concat(),
        )
        .env("RTGEN_OUTPUT_ROOT", root.path())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let base = lines
        .by_ref()
        .map_while(Result::ok)
        .find_map(|l| l.strip_prefix("session server listening on ").map(str::to_string))
        .expect("server announces its address");

    let runtime = tokio::runtime::Runtime::new().unwrap();
    let answered = runtime.block_on(async {
        let http = reqwest::Client::new();
        let mut answered = 0;
        loop {
            let pending: serde_json::Value = match http.get(format!("{base}/api/pending")).send().await {
                Ok(r) => r.json().await.unwrap(),
                // The process exits as soon as the run ends.
                Err(_) => break,
            };
            if let Some(req) = pending["interaction"].as_object() {
                let scores: serde_json::Map<String, serde_json::Value> = req["unseen"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|c| (c["id"].as_str().unwrap().to_string(), serde_json::json!(9)))
                    .collect();
                let id = req["interaction_id"].as_u64().unwrap();
                let r = http
                    .post(format!("{base}/api/interactions/{id}/scores"))
                    .json(&serde_json::json!({ "scores": scores }))
                    .send()
                    .await
                    .unwrap();
                assert!(r.status().is_success());
                answered += 1;
            } else if pending["status"] == "finished" {
                break;
            }
            tokio::time::sleep(std::time::Duration::from_millis(10)).await;
        }
        answered
    });
    let status = child.wait().unwrap();
    assert!(status.success());
    assert!(answered > 0);
    let dir = only_dir(root.path());
    let log = SessionLog::load(&dir.join("session.jsonl")).unwrap();
    assert_eq!(log.interactions().count(), answered);
    assert!(dir.join("suite.txt").is_file());
}
