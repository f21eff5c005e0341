use std::fs;
use std::path::Path;
use std::process::Command;

const SCENARIO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/mubende_dry.toml");

fn agrisense(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_agrisense"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = agrisense(&["run", SCENARIO, "--out", path_str(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.contains("Water Usage"));

    for name in [
        "weather.csv",
        "trace_sensor_driven.csv",
        "trace_calendar_baseline.csv",
        "irrigation_sensor_driven.csv",
        "channel_sensor_driven.csv",
        "dispatch.csv",
        "transport.csv",
        "totals.csv",
        "limits.csv",
        "report.txt",
        "report.csv",
        "radar.csv",
        "manifest.jsonl",
    ] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let manifest = fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    for line in manifest.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(agrisense(&["run", SCENARIO, "--out", path_str(&a)]).status.success());
    assert!(agrisense(&["run", SCENARIO, "--out", path_str(&b), "--seed", "7"]).status.success());
    let weather = |d: &Path| fs::read(d.join("weather.csv")).unwrap();
    assert_ne!(weather(&a), weather(&b));
}

#[test]
fn report_rerender_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(agrisense(&["run", SCENARIO, "--out", path_str(&out)]).status.success());
    let files = ["report.txt", "report.csv", "radar.csv"];
    let before: Vec<Vec<u8>> = files.iter().map(|f| fs::read(out.join(f)).unwrap()).collect();
    for f in files {
        fs::remove_file(out.join(f)).unwrap();
    }
    let res = agrisense(&["report", path_str(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let after: Vec<Vec<u8>> = files.iter().map(|f| fs::read(out.join(f)).unwrap()).collect();
    assert_eq!(before, after);
    assert_eq!(res.stdout, before[0]);
}

#[test]
fn bench_transport_prints_both_protocols() {
    let res = agrisense(&["bench-transport", SCENARIO]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let protocols: Vec<String> = rows.records().map(|r| r.unwrap()[0].to_owned()).collect();
    assert_eq!(protocols.len(), 2);
}

#[test]
fn bad_scenario_reports_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\n").unwrap();
    let res = agrisense(&["run", path_str(&bad), "--out", path_str(&dir.path().join("o"))]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error: "));

    let res = agrisense(&["report", path_str(dir.path())]);
    assert!(!res.status.success());
}
