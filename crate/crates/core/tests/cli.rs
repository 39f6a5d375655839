// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fragsynth")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn motivational_report() {
    let path = fixture("motivational.dfg");
    let o = run(&[path.to_str().unwrap(), "--latency", "3", "--emit", "report"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["design"], "motivational");
    assert_eq!(v["lambda"], 3);
    assert_eq!(v["n_bits"], 6);
    assert_eq!(v["critical_path"]["time"], 18);
    assert_eq!(v["critical_path"]["ops"], serde_json::json!(["C", "E", "G"]));
    let lanes = v["costs"]["lanes"].as_array().unwrap();
    assert_eq!(lanes.iter().map(|l| l["width"].as_u64().unwrap()).collect::<Vec<_>>(), [6, 6, 6]);
    assert_eq!(v["costs"]["registers"]["max"], 5);
    assert_eq!(v["costs"]["registers"]["per_boundary"], serde_json::json!([5, 5]));
    assert_eq!(v["fragments"].as_array().unwrap().len(), 9);
    assert_eq!(v["schedule"].as_array().unwrap().len(), 9);
    assert_eq!(v["equiv"]["result"], "skipped");
}

#[test]
fn fig3_schedule_table() {
    let path = fixture("fig3.dfg");
    let o = run(&[path.to_str().unwrap(), "--latency", "3", "--emit", "schedule"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("cycle")).collect();
    assert_eq!(rows.len(), 3);
    for (row, frag) in rows.iter().zip(["F[2:0]", "F[5:3]", "F[7:6]"]) {
        assert!(row.contains(frag), "{row}");
    }
}

#[test]
fn zero_latency_is_a_usage_error() {
    let path = fixture("motivational.dfg");
    assert_eq!(run(&[path.to_str().unwrap(), "--latency", "0"]).status.code(), Some(2));
    assert_eq!(run(&[path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn failure_classes_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.dfg");
    std::fs::write(&bad, "design bad;\ninput a: u4;\nb: add u4 = a + c;\noutput b;\n").unwrap();
    let o = run(&[bad.to_str().unwrap(), "--latency", "2"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.dfg:"));

    let path = fixture("motivational.dfg");
    let o = run(&[path.to_str().unwrap(), "--latency", "3", "--nbits", "4"]);
    assert_eq!(o.status.code(), Some(4));
    let o = run(&[path.to_str().unwrap(), "--latency", "3", "--bucket-fill"]);
    assert_eq!(o.status.code(), Some(4));

    let missing = dir.path().join("missing.dfg");
    assert_eq!(run(&[missing.to_str().unwrap(), "--latency", "3"]).status.code(), Some(1));
}

#[test]
fn check_equiv_passes_on_every_fixture() {
    for name in ["motivational", "fig3", "saturation", "diffeq", "elliptic"] {
        let path = fixture(&format!("{name}.dfg"));
        let o = run(&[path.to_str().unwrap(), "--latency", "4", "--check-equiv", "--emit", "report"]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["equiv"]["result"], "pass", "{name}");
    }
}

#[test]
fn outputs_are_deterministic_and_written_to_out_dir() {
    let path = fixture("diffeq.dfg");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let mut args = vec![path.to_str().unwrap(), "--latency", "6", "--check-equiv", "--seed", "7"];
        for e in ["transformed", "schedule", "report", "dot", "arrivals"] {
            args.extend(["--emit", e]);
        }
        args.extend(["--out", d.path().to_str().unwrap()]);
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0));
        assert!(o.stdout.is_empty());
    }
    let mut names: Vec<String> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["diffeq.arrivals.json", "diffeq.dot", "diffeq.report.json", "diffeq.schedule.txt", "diffeq.transformed.dfg"]
    );
    for n in &names {
        let a = std::fs::read(dirs[0].path().join(n)).unwrap();
        let b = std::fs::read(dirs[1].path().join(n)).unwrap();
        assert_eq!(a, b, "{n} differs between runs");
    }
    let transformed = std::fs::read_to_string(dirs[0].path().join("diffeq.transformed.dfg")).unwrap();
    fragsynth::dsl::parse(&transformed).expect("transformed design re-parses");
}
