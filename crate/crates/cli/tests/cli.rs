use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use precompose_core::ontology::{parse_ontology, Format, Ontology};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_precompose"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut input = child.stdin.take().unwrap();
    if let Some(bytes) = stdin {
        input.write_all(bytes).unwrap();
    }
    drop(input);
    child.wait_with_output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn owl(path: &Path) -> Ontology {
    parse_ontology(&std::fs::read(path).unwrap(), Format::from_path(path)).unwrap()
}

#[test]
fn plan_exit_codes() {
    let catalog = fixture("elearning_catalog.json");
    let out = run(&["plan", "--catalog", p(&catalog), "--request", p(&fixture("requests/learning_resource_library.json"))], None);
    assert_eq!(out.status.code(), Some(0));
    let plan: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(plan["steps"].as_array().unwrap().len(), 5);

    let out = run(&["plan", "--catalog", p(&catalog), "--request", p(&fixture("requests/unsatisfiable.json"))], None);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());

    // The library needs five steps, so depth 4 cannot reach it.
    let out = run(
        &["plan", "--catalog", p(&catalog), "--request", p(&fixture("requests/learning_resource_library.json")), "--depth", "4"],
        None,
    );
    assert_eq!(out.status.code(), Some(3));

    let out = run(&["plan", "--catalog", "/nonexistent.json", "--request", p(&fixture("requests/unsatisfiable.json"))], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[CATALOG]"));
}

#[test]
fn scripted_merge_reproduces_the_library_ontology() {
    let dir = tempfile::tempdir().unwrap();
    let session = dir.path().join("session.json");
    let out = run(
        &["merge", "open", "--left", p(&fixture("ws_ebooks.owl")), "--right", p(&fixture("ws_slides.owl")), "--session", p(&session)],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&["merge", "suggestions", "--session", p(&session)], None);
    let queue: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(queue.as_array().unwrap().len(), 12);

    let merged = dir.path().join("merged.json");
    let out = run(&["merge", "finalize", "--session", p(&session), "--out", p(&merged)], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PENDING_REMAIN"));

    let decisions = std::fs::read(fixture("lrl_decisions.json")).unwrap();
    let out = run(&["merge", "decide", "--session", p(&session)], Some(&decisions));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["merge", "finalize", "--session", p(&session), "--out", p(&merged)], None);
    assert!(out.status.success());

    let pivoted = dir.path().join("pivoted.owl");
    let out = run(
        &["merge", "pivot", "--input", p(&merged), "--catalog", p(&fixture("elearning_catalog.json")), "--out", p(&pivoted)],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(owl(&pivoted), owl(&fixture("merged_lrl.owl")));

    let explicit = dir.path().join("explicit.json");
    let out = run(
        &[
            "merge", "pivot", "--input", p(&merged), "--property", "#hasSubject", "--link", "#EBOOKS=hasEbook",
            "--link", "#SLIDES=hasSlides", "--first-number", "301", "--out", p(&explicit),
        ],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(owl(&explicit), owl(&fixture("merged_lrl.owl")));
}

#[test]
fn failed_decision_batch_leaves_the_session_file_alone() {
    let dir = tempfile::tempdir().unwrap();
    let session = dir.path().join("s.json");
    run(&["merge", "open", "--left", p(&fixture("ws_ebooks.owl")), "--right", p(&fixture("ws_slides.owl")), "--session", p(&session)], None);
    let before = std::fs::read(&session).unwrap();
    let lines = b"{\"suggestion_id\": 1, \"verdict\": \"ACCEPT\"}\n{\"suggestion_id\": 77, \"verdict\": \"ACCEPT\"}\n";
    let out = run(&["merge", "decide", "--session", p(&session)], Some(lines));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("UNKNOWN_SUGGESTION"));
    assert_eq!(std::fs::read(&session).unwrap(), before);

    // One decision per line is accepted too.
    let out = run(&["merge", "decide", "--session", p(&session)], Some(&lines[..lines.iter().position(|&b| b == b'\n').unwrap() + 1]));
    assert!(out.status.success());
    let status: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(status["decisions"], 1);
}

#[test]
fn simulator_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, j) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("r.json"));
    assert!(run(&["sim", "--out", p(&a)], None).status.success());
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"seed": 42}"#).unwrap();
    assert!(run(&["sim", "--config", p(&config), "--out", p(&b), "--format", "csv"], None).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read_to_string(&a).unwrap().lines().count(), 13);

    assert!(run(&["sim", "--out", p(&j), "--format", "json"], None).status.success());
    let report: precompose_core::sim::SimReport = serde_json::from_slice(&std::fs::read(&j).unwrap()).unwrap();
    assert_eq!(report.months.len(), 12);

    std::fs::write(&config, r#"{"discovery_probability": 2}"#).unwrap();
    let out = run(&["sim", "--config", p(&config), "--out", p(&a)], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("INVALID_CONFIG"));
}
