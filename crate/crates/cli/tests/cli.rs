//! End-to-end runs of the `lumberjack` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

use lumberjack::normal::golden_eq;
use lumberjack::parse;

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn lumberjack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lumberjack")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lumberjack-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn optimize_writes_the_golden() {
    let out = scratch("map_map_out.lh", "");
    let o = lumberjack(&["optimize", corpus("map_map.lh").to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let got = parse(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let want = parse(&std::fs::read_to_string(corpus("map_map.expect.lh")).unwrap()).unwrap();
    assert!(golden_eq(&got, &want));
}

#[test]
fn unfusable_program_comes_back_unchanged() {
    let path = corpus("pair_up_mk.lh");
    let o = lumberjack(&["optimize", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let got = parse(&stdout(&o)).unwrap();
    let input = parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(lumberjack::program_alpha_eq(&got, &input));
}

#[test]
fn check_prints_equal() {
    let o = lumberjack(&["check", corpus("enumerate_sum.lh").to_str().unwrap(), "--input", "main 10"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "main 10: Equal");
}

#[test]
fn check_json_reports_counters() {
    let o = lumberjack(&["check", corpus("enumerate_sum.lh").to_str().unwrap(), "--input", "main 10", "--json"]);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["report"]["verdict"]["verdict"], "Equal");
    assert!(v["report"]["original"]["steps"].as_u64().unwrap() > 0);
}

#[test]
fn metrics_schema() {
    let o = lumberjack(&["metrics", corpus("map_map.lh").to_str().unwrap(), "--input", "main [1, 2, 3]"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["program"], "map_map");
    for side in ["original", "optimized"] {
        for k in ["steps", "ctor_allocs", "closure_allocs"] {
            assert!(v[side][k].is_u64(), "{side}.{k}");
        }
    }
    assert_eq!(v["original"]["ctor_allocs"], 8);
    assert_eq!(v["optimized"]["ctor_allocs"], 4);
    assert!(v["ast_nodes"]["before"].is_u64() && v["ast_nodes"]["after"].is_u64());
    assert!(v["fused_sites"].as_u64().unwrap() > 0);
}

#[test]
fn metrics_skip_unfinished_runs() {
    let o = lumberjack(&["metrics", corpus("enumerate_sum.lh").to_str().unwrap(), "--input", "main 1000", "--step-limit", "10"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim().is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"stage\":\"metrics\""));
}

#[test]
fn parse_error_exits_1_with_json_diagnostic() {
    let path = scratch("bad.lh", "let main = (");
    let o = lumberjack(&["optimize", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(v["stage"], "parse");
    assert_eq!(v["level"], "error");
}

#[test]
fn unbound_variable_exits_1() {
    let path = scratch("unbound.lh", "let main = y");
    assert_eq!(lumberjack(&["optimize", path.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn limits_must_be_positive() {
    let path = corpus("enumerate_sum.lh");
    for flags in [["--step-limit", "0"], ["--max-dup", "0"]] {
        let o = lumberjack(&["check", path.to_str().unwrap(), flags[0], flags[1]]);
        assert_ne!(o.status.code(), Some(0), "{flags:?}");
    }
}

#[test]
fn corpus_mode_passes_with_a_sweep() {
    let o = lumberjack(&["corpus", "--seed", "0", "--sweep", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 20);
    assert!(!text.contains("FAIL"));
}

#[test]
fn dumps_are_json_lines() {
    for flag in ["--dump-constraints", "--dump-bounds", "--dump-strategies", "--dump-report"] {
        let o = lumberjack(&["optimize", corpus("toy_option.lh").to_str().unwrap(), flag]);
        assert_eq!(o.status.code(), Some(0), "{flag}");
        let text = stdout(&o);
        assert!(!text.trim().is_empty(), "{flag}");
        for line in text.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap_or_else(|e| panic!("{flag}: {e}: {line}"));
        }
    }
}

#[test]
fn generated_program_by_seed() {
    let a = lumberjack(&["optimize", "--seed", "5"]);
    let b = lumberjack(&["optimize", "--seed", "5"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn ablations_stay_sound() {
    for flags in [&["--no-dup"][..], &["--no-float"], &["--no-inline"], &["--max-dup", "1"]] {
        let path = corpus("map_map.lh");
        let mut args = vec!["check", path.to_str().unwrap()];
        args.extend_from_slice(flags);
        let o = lumberjack(&args);
        assert_eq!(o.status.code(), Some(0), "{flags:?}");
        assert!(stdout(&o).lines().all(|l| l.ends_with("Equal")), "{flags:?}");
    }
}
