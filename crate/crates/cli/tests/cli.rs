#[allow(dead_code)]
#[path = "../../core/tests/oracles/mock_http.rs"]
mod mock_http;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use droidsift_testkit::fixtures::{self, Fixture};
use mock_http::MockServer;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;
use tempfile::TempDir;

fn droidsift() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_droidsift"));
    c.env_remove("SCAN_API_KEY").env_remove("SCAN_ENDPOINT");
    c
}

fn fixture(name: &str) -> Fixture {
    fixtures::all().into_iter().find(|f| f.name == name).unwrap()
}

fn written(dir: &TempDir, name: &str) -> PathBuf {
    fixtures::write_all(dir.path(), &[fixture(name)]).unwrap().remove(0)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn exit_code_tracks_highest_severity() {
    let dir = tempfile::tempdir().unwrap();
    for (name, expected) in [("clean", 0), ("sqli", 1), ("report3", 2)] {
        let apk = written(&dir, name);
        let o = droidsift().arg("scan").arg(&apk).output().unwrap();
        assert_eq!(code(&o), expected, "{name}: {}", stderr(&o));
        assert!(stdout_json(&o)["findings"].is_array());
    }
}

#[test]
fn corrupt_dex_reports_the_failing_entry() {
    let dir = tempfile::tempdir().unwrap();
    let apk = written(&dir, "corrupt-dex");
    let o = droidsift().arg("scan").arg(&apk).output().unwrap();
    assert_eq!(code(&o), 3);
    let v = stdout_json(&o);
    assert_eq!(v["error"]["stage"], "dex");
    assert_eq!(v["error"]["entry"], "classes.dex");
    assert!(v["error"]["offset"].is_u64(), "{v}");
    assert!(!v["error"]["message"].as_str().unwrap().is_empty());
    assert!(stderr(&o).contains("corrupt-dex"));
}

#[test]
fn missing_apk_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = droidsift().arg("scan").arg(dir.path().join("absent.apk")).output().unwrap();
    assert_eq!(code(&o), 3);
    assert_eq!(stdout_json(&o)["error"]["stage"], "io");
}

#[test]
fn text_format_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let apk = written(&dir, "report3");
    let o = droidsift().arg("scan").arg(&apk).args(["--format", "text"]).output().unwrap();
    assert_eq!(code(&o), 2);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("com.fx.report3"), "{text}");
    assert!(serde_json::from_str::<Value>(&text).is_err());

    let out = dir.path().join("report.json");
    let o = droidsift().arg("scan").arg(&apk).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(o.stdout.is_empty());
    let v: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert!(!v["findings"].as_array().unwrap().is_empty());
}

#[test]
fn configuration_and_usage_errors_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let apk = written(&dir, "clean");
    let bad = dir.path().join("rules.toml");
    std::fs::write(&bad, "this is [not toml").unwrap();
    let o = droidsift().arg("scan").arg(&apk).arg("--rules").arg(&bad).output().unwrap();
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("rules.toml"), "{}", stderr(&o));

    let o = droidsift().args(["scan", "--no-such-flag"]).output().unwrap();
    assert_eq!(code(&o), 4);
    let o = droidsift().arg("--help").output().unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn empty_corpus_directory_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = droidsift()
        .arg("corpus")
        .arg(dir.path())
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("no APKs found"), "{}", stderr(&o));
}

#[test]
fn corpus_exit_code_is_the_worst_successful_scan() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    let paths = fixtures::write_all(&input, &[fixture("sqli"), fixture("corrupt-dex")]).unwrap();
    let out = dir.path().join("out");
    let o = droidsift().arg("corpus").arg(&input).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("1 scanned, 1 failed"));
    assert!(out.join("corpus.json").is_file());

    let o = droidsift().arg("corpus").arg(&paths[1]).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 3);
}

fn embeddings_file(dir: &Path) -> PathBuf {
    let mut rng = StdRng::seed_from_u64(11);
    let mut words: Vec<String> = ["name", "phone", "email", "surname", "mobile", "telephone", "address"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    words.extend((0..40).map(|i| format!("filler{i}")));
    let mut text = format!("{} 8\n", words.len());
    for w in &words {
        text += w;
        for _ in 0..8 {
            write!(text, " {:.5}", rng.random_range(-1.0f32..1.0)).unwrap();
        }
        text.push('\n');
    }
    let path = dir.join("vectors.txt");
    std::fs::write(&path, text).unwrap();
    path
}

fn build_keywords(dir: &Path, k: usize) -> Output {
    let seeds = dir.join("seeds.txt");
    std::fs::write(&seeds, "name\nphone\n").unwrap();
    droidsift()
        .args(["keywords", "build", "--embeddings"])
        .arg(embeddings_file(dir))
        .arg("--seeds")
        .arg(&seeds)
        .args(["-k", &k.to_string()])
        .output()
        .unwrap()
}

#[test]
fn keywords_build_with_k_zero_keeps_only_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = build_keywords(dir.path(), 0);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = stdout_json(&o);
    assert_eq!(v["keywords"], serde_json::json!(["name", "phone"]));
}

#[test]
fn keywords_build_expands_each_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = build_keywords(dir.path(), 5);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = stdout_json(&o);
    let expansions = v["expansions"].as_array().unwrap();
    assert_eq!(expansions.len(), 2);
    for e in expansions {
        let n = e["synonyms"].as_array().unwrap().len();
        assert!((1..=5).contains(&n), "{e}");
    }
    assert!(stderr(&o).contains("phone"));

    let out = dir.path().join("kw.json");
    let o = droidsift()
        .args(["keywords", "build", "--embeddings"])
        .arg(dir.path().join("vectors.txt"))
        .arg("--seeds")
        .arg(dir.path().join("seeds.txt"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let db: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(db, v);
    assert!(String::from_utf8_lossy(&o.stdout).contains("name"));

    let apk = written(&dir, "clean");
    let o = droidsift().arg("scan").arg(&apk).arg("--keywords").arg(&out).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn keywords_build_names_a_missing_embeddings_file() {
    let dir = tempfile::tempdir().unwrap();
    let seeds = dir.path().join("seeds.txt");
    std::fs::write(&seeds, "name\n").unwrap();
    let o = droidsift()
        .args(["keywords", "build", "--embeddings"])
        .arg(dir.path().join("missing.vec"))
        .arg("--seeds")
        .arg(&seeds)
        .output()
        .unwrap();
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("missing.vec"), "{}", stderr(&o));
}

#[test]
fn malware_lookup_against_a_service() {
    let server = MockServer::start(|req| match (req.header("x-apikey"), req.method.as_str()) {
        (Some("k1"), "GET") if req.path.starts_with("/files/") => {
            (200, r#"{"engines_total":70,"engines_flagged":3,"labels":["PUA"]}"#.into())
        }
        _ => (401, String::new()),
    });
    let dir = tempfile::tempdir().unwrap();
    let apk = written(&dir, "clean");
    let o = droidsift()
        .arg("scan")
        .arg(&apk)
        .args(["--malware", "on", "--endpoint", &server.url])
        .env("SCAN_API_KEY", "k1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = stdout_json(&o);
    assert_eq!(v["malware"]["engines_flagged"], 3);
    assert_eq!(v["malware"]["engines_total"], 70);
    assert_eq!(server.connections(), 1);

    let o = droidsift()
        .arg("scan")
        .arg(&apk)
        .args(["--malware", "on", "--endpoint", &server.url])
        .output()
        .unwrap();
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("SCAN_API_KEY"));
    assert_eq!(server.connections(), 1);
}
