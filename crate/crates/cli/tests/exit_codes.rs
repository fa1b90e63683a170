use std::fs;
use std::process::{Command, Output};

fn rrmar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rrmar")).args(args).output().unwrap()
}

fn write_panel(path: &std::path::Path, value: impl Fn(usize, usize, usize) -> f64) {
    let mut s = String::from("time,row,col,value\n");
    for t in 0..40 {
        for (i, row) in ["A", "B"].iter().enumerate() {
            for (j, col) in ["X", "Y"].iter().enumerate() {
                s.push_str(&format!("{t},{row},{col},{}\n", value(t, i, j)));
            }
        }
    }
    fs::write(path, s).unwrap();
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(rrmar(&["--help"]).status.code(), Some(0));
    assert_eq!(rrmar(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(rrmar(&["fit", "--bogus"]).status.code(), Some(1));
    assert_eq!(rrmar(&["fit", "--data", "/nonexistent/panel.csv", "--ranks", "1,1"]).status.code(), Some(1));
    let out = rrmar(&["mc", "--design", "no_such_design"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_cell_is_reported_by_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("panel.csv");
    write_panel(&path, |t, i, j| (t * 4 + i * 2 + j) as f64);
    let text = fs::read_to_string(&path).unwrap().replace("7,B,Y,31\n", "");
    fs::write(&path, text).unwrap();
    let out = rrmar(&["fit", "--data", path.to_str().unwrap(), "--ranks", "1,1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing cell (time 7, row B, col Y)"), "{err}");
}

#[test]
fn degenerate_data_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.csv");
    write_panel(&path, |_, _, _| 1.0);
    let out = rrmar(&["fit", "--data", path.to_str().unwrap(), "--ranks", "1,1", "--starts", "4", "--keep", "2"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
