use std::path::Path;
use std::process::{Command, Output};

fn surf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surf")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(dir: &Path) {
    let o = surf(&[
        "gen",
        "--classes",
        "6",
        "--dim",
        "24",
        "--per-class",
        "12",
        "--test-per-class",
        "6",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn flops_prints_counts() {
    let o = surf(&["flops", "--surrogate", "surf", "--k", "1", "--c", "100"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "200");
    let o = surf(&[
        "flops",
        "--surrogate",
        "cshap-eval",
        "--k",
        "1",
        "--d",
        "2048",
        "--params",
    ]);
    assert_eq!(stdout(&o).trim(), "1027048");
}

#[test]
fn exit_codes() {
    assert_eq!(surf(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        surf(&["flops", "--surrogate", "bogus", "--k", "1", "--c", "3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        surf(&["check", "--manifest", "/nonexistent/m.json"]).status.code(),
        Some(2)
    );

    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    let test = dir.path().join("test.json");
    let o = surf(&["check", "--manifest", test.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    // too many concepts for 12 rows per class
    let train = dir.path().join("train.json");
    let o = surf(&[
        "eval",
        "--train",
        train.to_str().unwrap(),
        "--test",
        test.to_str().unwrap(),
        "--methods",
        "kmeans",
        "--k",
        "40",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("member"));
}

#[test]
fn fit_then_eval_through_a_bundle() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    let train = dir.path().join("train.json");
    let test = dir.path().join("test.json");
    let bundle = dir.path().join("b");
    let o = surf(&[
        "fit",
        "--manifest",
        train.to_str().unwrap(),
        "--method",
        "cdisco",
        "--k",
        "3",
        "--out",
        bundle.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = dir.path().join("r.json");
    let o = surf(&[
        "eval",
        "--train",
        train.to_str().unwrap(),
        "--test",
        test.to_str().unwrap(),
        "--bundle",
        bundle.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        surf_bench::report_io::validate_report_value(r).unwrap();
        assert!(r["timestamp"].is_string());
    }
    assert!(dir.path().join("r.csv").is_file());
}

#[test]
fn sanity_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path());
    let test = dir.path().join("test.json");
    let out = dir.path().join("s.json");
    let o = surf(&[
        "sanity",
        "--manifest",
        test.to_str().unwrap(),
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("surf ordering:           pass"), "{text}");
    assert_eq!(std::fs::read_to_string(dir.path().join("s.txt")).unwrap(), text);
    assert!(dir.path().join("s.csv").is_file());
}
