use std::process::{Command, Output};

fn tofprep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tofprep")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str, text: &str) -> String {
    let dir = std::env::temp_dir().join(format!("tofprep-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn rates_table_rows() {
    let o = tofprep(&["rates", "--levels", "5", "--format", "csv"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[1], "0,6.5,9.1,20,18,13,10");
    assert_eq!(lines[6], "5,5.8,5.8,7.1,7.2,7.3,6.8");
    let o = tofprep(&["rates", "--levels", "0"]);
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn rates_params_file() {
    let good = scratch("p.txt", "p_g = 1.3e-5\np_s = 1.3e-5\n");
    assert!(tofprep(&["rates", "--params", &good, "--levels", "1"]).status.success());
    let bad = scratch("q.txt", "p_x = 1\n");
    let o = tofprep(&["rates", "--params", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));
}

#[test]
fn threshold_value() {
    let o = tofprep(&["threshold"]);
    assert!(stdout(&o).starts_with("p_th = 1/75873 = 1.3180e-5"));
}

#[test]
fn simulate_hadamard_and_decomposition() {
    let h = scratch("h.txt", "circuit h\ncode trivial\nreg q 1 block zero\n0 H q.0\n");
    let o = tofprep(&["simulate", &h]);
    assert_eq!(stdout(&o), "0 0.707106781187 0\n1 0.707106781187 0\n");
    let d = tofprep(&["dump-circuit", "--construction", "decomposition"]);
    let f = scratch("d.txt", &stdout(&d));
    let o = tofprep(&["simulate", &f, "--input", "110"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("111 "));
}

#[test]
fn simulate_with_injected_error() {
    let c = scratch("x.txt", "circuit x\ncode trivial\nreg q 2 block zero\n0 H q.0\n1 CX q.0,q.1\n");
    let o = tofprep(&["simulate", &c, "--inject", "X[q.1]@1:after"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "01 0.707106781187 0\n10 0.707106781187 0\n");
    let o = tofprep(&["simulate", &c, "--inject", "X[q.5]@1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn parse_errors_have_line_numbers() {
    let c = scratch("bad.txt", "circuit x\nreg q 1 block zero\n0 FOO q.0\n");
    let o = tofprep(&["simulate", &c]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(tofprep(&["analyze", "--order", "2", "--sample-budget", "5"]).status.code(), Some(2));
    assert_eq!(tofprep(&["analyze", "--order", "3"]).status.code(), Some(2));
    assert_eq!(tofprep(&["analyze", "--rounds", "2"]).status.code(), Some(2));
    assert_eq!(tofprep(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn empty_sample_passes_with_warning() {
    let o = tofprep(&["analyze", "--construction", "modified", "--order", "2", "--sample-budget", "0", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn shor_analysis_fails_and_is_deterministic() {
    let a = tofprep(&["analyze", "--construction", "shor", "--rounds", "3", "--format", "json", "--workers", "1"]);
    assert_eq!(a.status.code(), Some(1));
    let b = tofprep(&["analyze", "--construction", "shor", "--rounds", "3", "--format", "json", "--workers", "3"]);
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["schema"], "tofprep.analysis/1");
    assert_eq!(v["config"]["construction"], "shor");
    let offending = v["offending"].as_array().unwrap();
    for i in 0..7 {
        let name = format!("X[T3.{i}]");
        assert!(offending.iter().any(|o| o["faults"][0]["error"] == name.as_str()
            && (o["logical_probability"].as_f64().unwrap() - 1.0).abs() < 1e-9));
    }
}

#[test]
fn modified_analysis_certifies() {
    let o = tofprep(&["analyze", "--construction", "modified", "--rounds", "3", "--order", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("no logical-error scenario"));
}
