use std::fs;
use std::process::{Command, Output};

fn quadlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadlab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn sampling_is_deterministic_across_threads() {
    let args = ["sample", "rho", "--x", "0", "--count", "40", "--seed", "9", "--max-edges", "100000"];
    let a = quadlab(&args);
    let b = quadlab(&[&args[..], &["--threads", "1"]].concat());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).lines().count(), 40);
    let c = quadlab(&["sample", "rho", "--x", "0", "--count", "40", "--seed", "10", "--max-edges", "100000"]);
    assert_ne!(stdout(&a), stdout(&c));
}

#[test]
fn exit_codes() {
    assert_eq!(quadlab(&["bogus"]).status.code(), Some(2));
    assert_eq!(quadlab(&["sample", "nope"]).status.code(), Some(2));
    assert_eq!(quadlab(&["verify", "cvs", "--format", "xml"]).status.code(), Some(2));
    assert_eq!(quadlab(&["export", "--input", "/nonexistent/trees.txt"]).status.code(), Some(3));
    // every draw exceeds a one-edge budget
    let o = quadlab(&["sample", "theta_n", "--n", "3", "--count", "5", "--max-edges", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
    let o = quadlab(&["verify", "cvs", "--samples", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn malformed_input_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    fs::write(&path, "tree 0 0 ()\ntree 0 1 (x)\n").unwrap();
    let o = quadlab(&["export", "--input", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn process_csv_has_one_row_per_contour_step() {
    let dir = tempfile::tempdir().unwrap();
    let trees = dir.path().join("trees.txt");
    let o = quadlab(&["sample", "rho", "--x", "0", "--count", "5", "--seed", "4", "--out", trees.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&trees).unwrap();
    for (i, line) in text.lines().enumerate() {
        let edges: usize = line.split_whitespace().nth(2).unwrap().parse().unwrap();
        let o = quadlab(&["export", "--input", trees.to_str().unwrap(), "--format", "csv_processes", "--index", &i.to_string()]);
        assert_eq!(o.status.code(), Some(0));
        let csv = stdout(&o);
        let mut rows = csv.lines();
        assert_eq!(rows.next(), Some("contour,label"));
        assert_eq!(rows.count(), 2 * edges + 1);
    }
    let o = quadlab(&["export", "--input", trees.to_str().unwrap(), "--format", "csv_processes", "--index", "99"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn map_export_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let trees = dir.path().join("trees.txt");
    let maps = dir.path().join("maps.txt");
    let again = dir.path().join("again.txt");
    let p = |x: &std::path::PathBuf| x.to_str().unwrap().to_string();
    assert!(quadlab(&["sample", "rho", "--x", "0", "--count", "8", "--seed", "5", "--out", &p(&trees)]).status.success());
    assert!(quadlab(&["export", "--input", &p(&trees), "--format", "edge_list", "--out", &p(&maps)]).status.success());
    assert!(quadlab(&["export", "--input", &p(&maps), "--format", "edge_list", "--out", &p(&again)]).status.success());
    let first = fs::read_to_string(&maps).unwrap();
    assert!(first.starts_with("quad "));
    assert_eq!(first, fs::read_to_string(&again).unwrap());
    let direct = quadlab(&["sample", "rho", "--x", "0", "--count", "8", "--seed", "5", "--format", "edge_list"]);
    assert_eq!(stdout(&direct), first);
}

#[test]
fn json_reports_round_trip_through_export() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let o = quadlab(&["verify", "cvs", "--samples", "3", "--format", "json", "--out", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&report).unwrap();
    let o = quadlab(&["export", "--input", report.to_str().unwrap(), "--format", "json_report"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), text);
    fs::write(&report, text.replace("\"seed\"", "\"sead\"")).unwrap();
    assert_eq!(quadlab(&["export", "--input", report.to_str().unwrap(), "--format", "json_report"]).status.code(), Some(3));
}
