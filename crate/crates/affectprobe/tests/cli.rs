//! CLI integration tests: exercise the installed binary end to end and pin
//! the exit-code contract (0 success, 1 domain error, 2 usage error).

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use affectprobe::gateway::mock::{MockRule, MockScript};
use affectprobe::manifest::LabelTaxonomy;

use common::{make_dataset, write_manifest};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_affectprobe"))
}

fn run_ok(out: &Output) -> &Output {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn mafw_dataset(dir: &Path, per_class: usize) -> std::path::PathBuf {
    let taxonomy = LabelTaxonomy::mafw();
    let videos = make_dataset(&dir.join("data"), &taxonomy, per_class, 1.0, 3);
    let manifest = dir.join("manifest.jsonl");
    write_manifest(&manifest, &videos);
    manifest
}

#[test]
fn split_produces_balanced_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = mafw_dataset(dir.path(), 50);

    let out_a = dir.path().join("split_a");
    let out = bin()
        .args(["split", "--manifest"])
        .arg(&manifest)
        .args(["--taxonomy", "mafw", "--per-class", "45", "--seed", "7", "--out"])
        .arg(&out_a)
        .output()
        .unwrap();
    run_ok(&out);

    let test_text = fs::read_to_string(out_a.join("test.jsonl")).unwrap();
    assert_eq!(test_text.lines().count(), 495);
    let train_text = fs::read_to_string(out_a.join("train.jsonl")).unwrap();
    assert_eq!(train_text.lines().count(), 550 - 495);

    // same seed -> identical files
    let out_b = dir.path().join("split_b");
    let out = bin()
        .args(["split", "--manifest"])
        .arg(&manifest)
        .args(["--taxonomy", "mafw", "--per-class", "45", "--seed", "7", "--out"])
        .arg(&out_b)
        .output()
        .unwrap();
    run_ok(&out);
    assert_eq!(test_text, fs::read_to_string(out_b.join("test.jsonl")).unwrap());
}

#[test]
fn split_overdraw_exits_1_and_names_class() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = mafw_dataset(dir.path(), 3);
    let out = bin()
        .args(["split", "--manifest"])
        .arg(&manifest)
        .args(["--taxonomy", "mafw", "--per-class", "10", "--out"])
        .arg(dir.path().join("split"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("anger"), "stderr: {stderr}");
}

#[test]
fn unknown_flag_exits_2() {
    let out = bin().args(["split", "--bogus-flag", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_exits_2() {
    let out = bin()
        .args(["run", "--config", "/nonexistent/config.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_available_for_every_subcommand() {
    for sub in ["split", "run", "metrics", "correlate", "report", "mock-serve"] {
        let out = bin().args([sub, "--help"]).output().unwrap();
        assert!(out.status.success(), "--help failed for {sub}");
    }
}

#[test]
fn run_metrics_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let taxonomy = LabelTaxonomy::new("t3", ["anger", "happiness", "neutral"]).unwrap();
    let tax_path = dir.path().join("t3.json");
    fs::write(&tax_path, serde_json::to_string(&taxonomy).unwrap()).unwrap();
    let videos = make_dataset(&dir.path().join("data"), &taxonomy, 2, 1.0, 3);
    let manifest = dir.path().join("manifest.jsonl");
    write_manifest(&manifest, &videos);

    let script_path = dir.path().join("rules.json");
    MockScript::new(vec![MockRule {
        condition: None,
        respond: "happiness".into(),
    }])
    .save(&script_path)
    .unwrap();

    let config_path = dir.path().join("config.toml");
    fs::write(
        &config_path,
        format!(
            r#"
manifest = "{}"
taxonomy = "{}"
mode = "baseline"
target_fps = 1.0
output_dir = "{}"

[backend]
kind = "mock"
model_id = "mock-model"
script = "{}"

[encode]
reencode = false
jpeg_quality = 90
max_dim = 448
"#,
            manifest.display(),
            tax_path.display(),
            dir.path().join("runs").display(),
            script_path.display()
        ),
    )
    .unwrap();

    // run with --json summary
    let out = bin()
        .args(["run", "--config"])
        .arg(&config_path)
        .arg("--json")
        .output()
        .unwrap();
    run_ok(&out);
    let summary: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("run --json emits JSON");
    let run_dir = std::path::PathBuf::from(summary["run_dir"].as_str().unwrap());
    assert!(run_dir.join("results.jsonl").is_file());
    assert!(summary["conditions"][0]["macro_f1"].is_number());

    // warm rerun advertises zero network calls
    let out = bin()
        .args(["run", "--config"])
        .arg(&config_path)
        .output()
        .unwrap();
    run_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("0 network calls"), "stdout: {text}");

    // metrics from the results file
    let metrics_dir = dir.path().join("metrics");
    let out = bin()
        .args(["metrics", "--results"])
        .arg(run_dir.join("results.jsonl"))
        .args(["--taxonomy"])
        .arg(&tax_path)
        .args(["--out"])
        .arg(&metrics_dir)
        .output()
        .unwrap();
    run_ok(&out);
    assert!(metrics_dir.join("metrics_fps1.csv").is_file());
    assert!(metrics_dir.join("confusion_fps1.csv").is_file());

    // report re-emission from the record
    let report_dir = dir.path().join("report");
    let out = bin()
        .args(["report", "--record"])
        .arg(run_dir.join("record.json"))
        .args(["--out"])
        .arg(&report_dir)
        .output()
        .unwrap();
    run_ok(&out);
    assert!(report_dir.join("metrics_fps1.csv").is_file());
    assert_eq!(
        fs::read(report_dir.join("metrics_fps1.csv")).unwrap(),
        fs::read(run_dir.join("metrics_fps1.csv")).unwrap()
    );
}

#[test]
fn correlate_builds_table_from_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();

    let freq = dir.path().join("english.csv");
    fs::write(
        &freq,
        "label,frequency\nanger,3.1\nhappiness,9.0\nneutral,5.5\nsadness,4.0\n",
    )
    .unwrap();

    // two identical metrics exports under different names
    let report = serde_json::json!({
        "per_class": [
            {"label": "anger", "precision": 0.5, "recall": 0.5, "f1": 0.30, "support": 10},
            {"label": "happiness", "precision": 0.5, "recall": 0.5, "f1": 0.70, "support": 10},
            {"label": "neutral", "precision": 0.5, "recall": 0.5, "f1": 0.55, "support": 10},
            {"label": "sadness", "precision": 0.5, "recall": 0.5, "f1": 0.41, "support": 10}
        ],
        "macro_precision": 0.5, "macro_recall": 0.5, "macro_f1": 0.49,
        "uar": 0.5, "war": 0.5, "total_support": 40
    });
    let f1_a = dir.path().join("model_a.json");
    let f1_b = dir.path().join("model_b.json");
    fs::write(&f1_a, report.to_string()).unwrap();
    fs::write(&f1_b, report.to_string()).unwrap();

    let table = dir.path().join("table.csv");
    let out = bin()
        .args(["correlate", "--freq-csv"])
        .arg(&freq)
        .args(["--f1-json"])
        .arg(&f1_a)
        .args(["--f1-json"])
        .arg(&f1_b)
        .args(["--out"])
        .arg(&table)
        .output()
        .unwrap();
    run_ok(&out);

    let text = fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4); // header + 3 series rows
    assert!(lines[0].starts_with("series,english,model_a,model_b"));
    // diagonal rendered with --- p-values
    assert!(lines[1].contains("1.0000 (---)"));
    // identical series: off-diagonal r=1, p=0
    let row_a = lines[2];
    assert!(row_a.contains("1.0000 (0.0000)"), "row: {row_a}");
}

#[test]
fn correlate_needs_two_series() {
    let dir = tempfile::tempdir().unwrap();
    let freq = dir.path().join("f.csv");
    fs::write(&freq, "anger,1.0\nfear,2.0\nneutral,3.0\n").unwrap();
    let out = bin()
        .args(["correlate", "--freq-csv"])
        .arg(&freq)
        .args(["--out"])
        .arg(dir.path().join("t.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mock_serve_round_trip_over_localhost() {
    let dir = tempfile::tempdir().unwrap();
    let script_path = dir.path().join("rules.json");
    MockScript::new(vec![MockRule {
        condition: None,
        respond: "surprise".into(),
    }])
    .save(&script_path)
    .unwrap();

    let mut child = bin()
        .args(["mock-serve", "--script"])
        .arg(&script_path)
        .args(["--addr", "127.0.0.1:0"])
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();

    // read the bound address line
    use std::io::{BufRead, BufReader};
    let stdout = child.stdout.take().unwrap();
    let mut line = String::new();
    BufReader::new(stdout).read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .unwrap_or_else(|| panic!("unexpected banner: {line}"))
        .to_string();

    let body = serde_json::json!({
        "model": "mock-model",
        "messages": [{"role": "user", "content": [{"type": "text", "text": "hi"}]}],
        "temperature": 0.0,
        "max_tokens": 64
    });
    let response = ureq_post(&format!("http://{addr}/chat/completions"), &body);
    child.kill().unwrap();
    let _ = child.wait();

    let parsed: serde_json::Value = serde_json::from_str(&response).unwrap();
    assert_eq!(parsed["choices"][0]["message"]["content"], "surprise");
}

/// Minimal blocking HTTP POST over std TcpStream (avoids an async runtime
/// in this test binary).
fn ureq_post(url: &str, body: &serde_json::Value) -> String {
    use std::io::{Read, Write};
    use std::net::TcpStream;
    let rest = url.strip_prefix("http://").unwrap();
    let (addr, path) = rest.split_once('/').unwrap();
    let payload = body.to_string();
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(
        stream,
        "POST /{path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let (_headers, body) = raw.split_once("\r\n\r\n").expect("http response body");
    // tolerate chunked transfer encoding: strip chunk size lines
    if raw.to_ascii_lowercase().contains("transfer-encoding: chunked") {
        body.lines()
            .filter(|l| !l.trim().is_empty() && !l.trim().chars().all(|c| c.is_ascii_hexdigit()))
            .collect()
    } else {
        body.to_string()
    }
}
