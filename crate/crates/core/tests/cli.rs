use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use markov_sse::cli::to_json;
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_markov-sse")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const TWO_TRIANGLES: &str =
    "# two triangles joined by a weak edge\nundirected\n0 1\n1 2\n0 2\n3 4\n4 5\n3 5\n2 3 0.001\n";
const K4: &str = "undirected\n0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n";

#[test]
fn analyze_reports_spectrum() {
    let dir = TempDir::new().unwrap();
    let k4 = write(dir.path(), "k4.txt", K4);
    let v = json_of(&run(&["analyze", k4.to_str().unwrap()]));
    let spec: Vec<f64> = v["spectrum"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(spec.len(), 4);
    assert!(spec[0].abs() < 1e-12);
    for l in &spec[1..] {
        assert!((l - 4.0 / 3.0).abs() < 1e-12);
    }
    assert_eq!(v["input"]["reversibilized"], false);

    let tt = write(dir.path(), "tt.txt", TWO_TRIANGLES);
    let v = json_of(&run(&["analyze", tt.to_str().unwrap(), "--eta", "0.01,0.5"]));
    assert!(v["payload"]["lambda_2"].as_f64().unwrap() < 1e-3);
    assert_eq!(v["payload"]["nullity"][0]["nullity"], 2);
}

#[test]
fn directed_input_is_reversibilized() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "c3.json", r#"{"n": 3, "directed": true, "edges": [[0,1,1.0],[1,2,1.0],[2,0,1.0]]}"#);
    let v = json_of(&run(&["analyze", p.to_str().unwrap()]));
    assert_eq!(v["input"]["reversibilized"], true);
    assert_eq!(v["input"]["directed"], true);
}

#[test]
fn sse_rounds_to_the_near_component() {
    let dir = TempDir::new().unwrap();
    let tt = write(dir.path(), "tt.txt", TWO_TRIANGLES);
    let v = json_of(&run(&["sse", tt.to_str().unwrap(), "--eps", "0.001", "--round"]));
    let set: Vec<u64> = v["payload"]["cut"]["set"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    assert_eq!(set.len(), 3);
    assert!(v["payload"]["cut"]["conductance"].as_f64().unwrap() < 1e-3);
    assert_eq!(v["payload"]["outcome"]["branch"], "low_nullity");
}

#[test]
fn escape_single_set_and_exhaustive() {
    let dir = TempDir::new().unwrap();
    let tt = write(dir.path(), "tt.txt", TWO_TRIANGLES);
    let path = tt.to_str().unwrap();
    let v = json_of(&run(&["escape", path, "--set", "0,1,2", "--t", "1,5", "--walks", "20000", "--seed", "3"]));
    let reports = v["payload"]["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    for r in reports {
        let exact = r["exact"].as_f64().unwrap();
        assert!(exact >= r["bound"].as_f64().unwrap() - 1e-9);
        let est = r["mc_estimate"].as_f64().unwrap();
        let se = r["mc_stderr"].as_f64().unwrap();
        assert!((est - exact).abs() <= 4.0 * se.max(1e-4));
    }
    let v = json_of(&run(&["escape", path, "--exhaustive", "--t", "0.1,1,10"]));
    assert_eq!(v["payload"]["checks"], 63 * 3);
    assert_eq!(v["payload"]["holds"], true);
}

#[test]
fn profile_with_oracles() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("undirected\n");
    for b in 0..4 {
        let base = 3 * b;
        text.push_str(&format!("{} {}\n{} {}\n{} {}\n", base, base + 1, base + 1, base + 2, base, base + 2));
        text.push_str(&format!("{} {} 1e-7\n", base, (base + 4) % 12));
    }
    let p = write(dir.path(), "blobs.txt", &text);
    let v = json_of(&run(&["profile", p.to_str().unwrap(), "--k", "4", "--A", "3", "--oracle"]));
    assert_eq!(v["payload"]["check"]["holds"], true);
    let exact = v["payload"]["oracles"]["conductance_at_measure_bound"]["value"].as_f64().unwrap();
    assert!(exact <= v["payload"]["check"]["conductance_bound"].as_f64().unwrap());
}

#[test]
fn output_is_deterministic_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let tt = write(dir.path(), "tt.txt", TWO_TRIANGLES);
    let path = tt.to_str().unwrap();
    for args in [
        vec!["analyze", path],
        vec!["sse", path, "--round"],
        vec!["escape", path, "--set", "0,1", "--walks", "5000", "--seed", "9"],
    ] {
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a.stdout, b.stdout);
        let mut threaded = vec!["--threads", "1"];
        threaded.extend(&args);
        assert_eq!(run(&threaded).stdout, a.stdout);
        let text = String::from_utf8(a.stdout).unwrap();
        let v: Value = serde_json::from_str(text.trim_end()).unwrap();
        assert_eq!(to_json(&v).unwrap(), text.trim_end());
    }
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.txt", "undirected\n0 1\n1 two\n");
    let out = run(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let split = write(dir.path(), "split.txt", "undirected\n0 1\n2 3\n");
    assert_eq!(run(&["analyze", split.to_str().unwrap()]).status.code(), Some(2));

    let k4 = write(dir.path(), "k4.txt", K4);
    let k4 = k4.to_str().unwrap();
    assert_eq!(run(&["sse", k4, "--alpha", "0.5"]).status.code(), Some(2));
    assert_eq!(run(&["escape", k4, "--set", "0,9"]).status.code(), Some(2));
    assert_eq!(run(&["profile", k4, "--k", "3"]).status.code(), Some(2));
    assert_eq!(run(&["analyze"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "/nonexistent/graph.txt"]).status.code(), Some(2));

    let big: String = std::iter::once("undirected\n".to_string())
        .chain((0..12).map(|i| format!("{} {}\n", i, (i + 1) % 12)))
        .collect();
    let big = write(dir.path(), "c12.txt", &big);
    assert_eq!(run(&["escape", big.to_str().unwrap(), "--exhaustive"]).status.code(), Some(2));
}
