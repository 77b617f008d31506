use std::path::PathBuf;
use std::process::{Command, Output};

use pilotwave::dsl::serialize_experiment;
use pilotwave::experiments::build_single_mzi;
use pilotwave_cli::render::{canonical_json, to_json};
use pilotwave_cli::report::RunReport;

fn pwl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pwl"))
        .args(args)
        .env_remove("PWL_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {name}"));
    assert_eq!(actual, expected, "output differs from {name}");
}

#[test]
fn crossed_mzi_exact_table() {
    let o = pwl(&["run", "crossed_mzi", "--exact", "--format", "table"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let tail = text.split("final distribution").nth(1).unwrap();
    assert!(tail.starts_with("  survival 0.5\n"));
    assert!(tail.contains("(+,-)  0.5\n") && tail.contains("(-,+)  0.5\n"));
    assert!(!tail.contains("(+,+)"));
    golden("run_crossed_mzi.txt", &text);
}

#[test]
fn missing_target_is_an_input_error() {
    let o = pwl(&["run", "missing.pwx"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no such scenario or file"));
    assert!(o.stdout.is_empty());
}

#[test]
fn audit_exit_codes() {
    assert_eq!(pwl(&["audit", "three_boxes", "--sample", "3000"]).status.code(), Some(3));
    let o = pwl(&["audit", "single_mzi", "--sample", "3000"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("(D) locality and momentum conservation: not-applicable"));
    let o = pwl(&["audit", "single_mzi", "--mask", "straight", "--sample", "3000"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("certificate: step 1->2"));
    // without the locality mask nothing constrains the transfers
    let o = pwl(&["audit", "three_boxes", "--mask", "none", "--sample", "3000"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn audit_json_golden() {
    let o = pwl(&["audit", "three_boxes", "--sample", "2000", "--seed", "1", "--format", "json"]);
    assert_eq!(o.status.code(), Some(3));
    let text = stdout(&o);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["conclusion"], "incompatible");
    assert_eq!(v["certificate"]["certificate"]["targets"], serde_json::json!(["(a,R)", "(b,R)"]));
    golden("audit_three_boxes.json", &text);
}

#[test]
fn twostate_outputs() {
    let o = pwl(&["twostate", "three_boxes", "--abl", "A"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("in A: 1.0\n"));
    let o = pwl(&["twostate", "three_boxes", "--weak", "PiC"]);
    assert!(stdout(&o).trim_end().ends_with("-1.0"));
    let o = pwl(&["twostate", "single_mzi", "--post", "minus", "--combined-guidance"]);
    let text = stdout(&o);
    let t1 = text.split("stage 1\n").nth(1).unwrap();
    assert!(t1.starts_with("  L  1.0\nstage 2"), "{text}");
    golden("twostate_single_mzi_minus.txt", &text);
    let o = pwl(&["twostate", "crossed_mzi", "--post", "(+,-)"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("filter"));
}

#[test]
fn json_round_trips_through_the_schema() {
    let o = pwl(&["run", "three_boxes", "--sample", "5000", "--seed", "7", "--format", "json"]);
    let text = stdout(&o);
    let report: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.header.schema, 1);
    assert_eq!(to_json(&report), text);
    assert_eq!(canonical_json(&text).unwrap(), text);
    assert!((report.survival - 1.0 / 9.0).abs() < 1e-12);
}

#[test]
fn json_is_identical_across_workers_and_seed_sources() {
    let a = pwl(&["run", "crossed_mzi", "--sample", "20000", "--seed", "5", "--workers", "1", "--format", "json"]);
    let b = pwl(&["run", "crossed_mzi", "--sample", "20000", "--seed", "5", "--workers", "4", "--format", "json"]);
    assert_eq!(a.stdout, b.stdout);
    let c = Command::new(env!("CARGO_BIN_EXE_pwl"))
        .args(["run", "crossed_mzi", "--sample", "20000", "--format", "json"])
        .env("PWL_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(a.stdout, c.stdout);
    let d = pwl(&["run", "crossed_mzi", "--sample", "20000", "--seed", "6", "--format", "json"]);
    assert_ne!(a.stdout, d.stdout);
}

#[test]
fn csv_lists_labels_in_order() {
    let o = pwl(&["run", "crossed_mzi", "--format", "csv", "--stage", "2"]);
    let text = stdout(&o);
    let labels: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit_once(',').unwrap().0).collect();
    assert_eq!(text.lines().next(), Some("label,probability"));
    assert_eq!(labels, ["\"(B,b)\"", "\"(L,l)\"", "\"(L,r)\"", "\"(R,l)\"", "\"(R,r)\"", "\"(T,t)\""]);
    let o = pwl(&["run", "single_mzi", "--format", "csv"]);
    assert_eq!(stdout(&o), "label,probability\n+,1.0000000000000000e0\n-,0.0000000000000000e0\n");
}

#[test]
fn files_fmt_and_policies() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mzi.pwx");
    let canonical = serialize_experiment(&build_single_mzi().unwrap());
    std::fs::write(&path, canonical.replace("\n", "\n\n# spaced out\n")).unwrap();
    let p = path.to_str().unwrap();

    let o = pwl(&["fmt", p]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), canonical);
    assert_eq!(pwl(&["fmt", p, "--check"]).status.code(), Some(1));
    let out = dir.path().join("canonical.pwx");
    pwl(&["fmt", p, "--out", out.to_str().unwrap()]);
    assert_eq!(pwl(&["fmt", out.to_str().unwrap(), "--check"]).status.code(), Some(0));

    let from_file = pwl(&["run", p, "--policy", "table", "--format", "json"]);
    assert_eq!(from_file.status.code(), Some(0));
    let builtin = pwl(&["run", "single_mzi", "--policy", "table", "--format", "json"]);
    assert_eq!(from_file.stdout, builtin.stdout);

    let broken = dir.path().join("broken.pwx");
    std::fs::write(&broken, "experiment x\nstage 0 basis { + }\nstage 1 basis { L, R }\nstep 0->1 { + -> 0.6: L, 0.6: R }\ninit { 1: + }\n").unwrap();
    let o = pwl(&["run", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("broken.pwx:4:1: step not an isometry (column norm 0.72)"), "{}", stderr(&o));

    let o = pwl(&["run", "crossed_mzi_localized_blocker", "--policy", "table"]);
    assert_eq!(o.status.code(), Some(2));
    let o = pwl(&["run", "single_mzi", "--format", "xml"]);
    assert_eq!(o.status.code(), Some(2));
}
