use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_conseq")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn report(args: &[&str]) -> (i32, Value) {
    let (code, text) = run(args);
    let v: Value = serde_json::from_str(&text).unwrap_or_else(|e| panic!("{e}: {text}"));
    assert_eq!(v["schema"], "conseq-report/1");
    assert!(v["elapsed_ms"].is_u64());
    (code, v)
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn derive_examples() {
    let singular = data("singular.logic");
    let (code, v) = report(&[
        "derive",
        path(&singular),
        "--premises",
        "m11,m12,m21,m22",
        "--goal",
        "star",
    ]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["verdict"]["answer"], "yes");
    assert_eq!(v["result"]["verdict"]["witness"]["derivation"]["formula"], "star");

    let running = data("running.logic");
    let (_, v) = report(&["derive", path(&running), "--premises", "x", "--goal", "x"]);
    assert_eq!(v["result"]["verdict"]["answer"], "yes");

    let (code, v) = report(&["derive", path(&data("no-rules.logic")), "--goal", "a"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["verdict"]["refutation"]["kind"], "exhaustive");
}

#[test]
fn bound_exhaustion_and_input_errors() {
    let succ = data("successor.logic");
    let args = ["derive", path(&succ), "--premises", "a", "--goal", "f(f(f(a)))"];
    let (code, v) = report(&args);
    assert_eq!(code, 0);
    assert_eq!(v["status"], "unknown");
    assert_eq!(v["result"]["verdict"]["bound"]["bound"], "depth");
    let (code, _) = report(&[&args[..], &["--strict"]].concat());
    assert_eq!(code, 3);

    let (code, v) = report(&["derive", path(&data("running.logic")), "--goal", "nope"]);
    assert_eq!(code, 2);
    assert_eq!(v["status"], "error");
    let (code, _) = report(&["derive", "/nonexistent.logic", "--goal", "a"]);
    assert_eq!(code, 2);
    let (code, _) = report(&[
        "derive",
        path(&data("running.logic")),
        "--goal",
        "a",
        "--bounds",
        "depth",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn extend_examples() {
    let running = data("running.logic");
    let (_, v) = report(&[
        "extend",
        path(&running),
        "--to-vars",
        "x,y",
        "--method",
        "minus",
        "--premises",
        "y",
        "--goal",
        "a",
    ]);
    assert_eq!(v["result"]["verdict"]["answer"], "yes");
    let (_, v) = report(&[
        "extend",
        path(&running),
        "--method",
        "ls",
        "--premises",
        "x",
        "--goal",
        "a",
    ]);
    assert_eq!(v["result"]["verdict"]["witness"]["kind"], "permutation");
    let (_, v) = report(&[
        "extend",
        path(&running),
        "--method",
        "ss",
        "--premises",
        "y",
        "--goal",
        "a",
    ]);
    assert_eq!(v["result"]["verdict"]["witness"]["substitution"]["x"], "y");
    let (_, v) = report(&[
        "extend",
        path(&running),
        "--method",
        "plus",
        "--premises",
        "y",
        "--goal",
        "a",
    ]);
    assert_eq!(v["result"]["arity"], "2");
    assert_eq!(v["result"]["verdict"]["answer"], "yes");

    let succ = data("successor.logic");
    let (code, v) = report(&[
        "extend",
        path(&succ),
        "--method",
        "plus",
        "--premises",
        "f(y)",
        "--goal",
        "y",
        "--strict",
    ]);
    assert_eq!(code, 3);
    assert_eq!(v["result"]["verdict"]["answer"], "unknown");
    assert!(v["result"]["verdict"]["reason"]
        .as_str()
        .unwrap()
        .contains("substitution space"));

    let (code, _) = report(&[
        "extend",
        path(&running),
        "--to-vars",
        "y,x",
        "--method",
        "ss",
        "--goal",
        "a",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn compare_finds_the_cut_gap() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("loop.logic");
    std::fs::write(&file, "sig a:0 b:0\nvars x\nrule x => a\nrule a => x\n").unwrap();
    let (code, v) = report(&["compare", file.to_str().unwrap(), "--left", "ss", "--right", "minus"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["relation"], "left-below");
    assert!(v["result"]["right_not_in_left"]["goal"].is_string());
}

#[test]
fn check_suites() {
    let (code, v) = report(&["check", path(&data("running.logic")), "--suite", "all"]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["result"]["checks"].as_array().unwrap().len(), 12);
    let (code, _) = report(&["check", path(&data("no-rules.logic")), "--suite", "chain"]);
    assert_eq!(code, 0);
    let (code, v) = report(&[
        "check",
        path(&data("running.logic")),
        "--suite",
        "filters",
        "--perturb-theories",
    ]);
    assert_eq!(code, 1);
    assert_eq!(v["result"]["checks"][0]["witness"]["is_theory"], false);
    let (code, _) = report(&["check", path(&data("successor.logic"))]);
    assert_eq!(code, 2);
}

#[test]
fn filters_command() {
    let logic = data("two-constants.logic");
    let structures = data("two-constants.structures");
    let (code, v) = report(&["filters", path(&logic), "--structures", path(&structures)]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["structures"][0]["filters"].as_array().unwrap().len(), 3);
    assert!(v["result"]["homomorphisms"][0]["witness"].is_null());
    let (code, v) = report(&[
        "filters",
        path(&logic),
        "--structures",
        path(&structures),
        "--structure",
        "two",
        "--set",
        "0",
        "--generate",
        "0",
    ]);
    assert_eq!(code, 1);
    assert_eq!(v["result"]["set"]["witness"]["conclusion"], "1");
    assert_eq!(v["result"]["generated"]["filter"], serde_json::json!(["0", "1"]));
    let (code, _) = report(&["filters", path(&logic), "--structures", path(&structures), "--set", "0"]);
    assert_eq!(code, 2);
}

#[test]
fn filters_of_an_extension_are_compared() {
    let logic = data("two-constants.logic");
    let structures = data("two-constants.structures");
    for method in ["minus", "plus"] {
        let (code, v) = report(&[
            "filters",
            path(&logic),
            "--structures",
            path(&structures),
            "--extension",
            method,
            "--to-vars",
            "x,y",
        ]);
        assert_eq!(code, 0);
        let ext = &v["result"]["extension_filters"];
        assert_eq!(ext["vars"], serde_json::json!(["x", "y"]));
        for s in ext["structures"].as_array().unwrap() {
            assert_eq!(s["base_filters"], s["extension_filters"]);
            assert!(s["witness"].is_null());
        }
    }
    let (code, _) = run(&[
        "filters",
        path(&logic),
        "--structures",
        path(&structures),
        "--to-vars",
        "x,y",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn lattice_json_round_trip_and_dot() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run(&["natext-lattice", path(&data("running.logic"))]);
    assert_eq!(code, 0);
    let saved = dir.path().join("lattice.json");
    std::fs::write(&saved, &text).unwrap();
    let (code, v) = report(&["natext-lattice", "--verify", saved.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["verified"], true);

    let mut tampered: Value = serde_json::from_str(&text).unwrap();
    tampered["result"]["lattice"]["leq"][0][0] = Value::Bool(false);
    std::fs::write(&saved, tampered.to_string()).unwrap();
    let (code, v) = report(&["natext-lattice", "--verify", saved.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(v["result"]["mismatch"].is_string());

    let (code, dot) = run(&["natext-lattice", path(&data("running.logic")), "--emit", "dot"]);
    assert_eq!(code, 0);
    assert!(dot.starts_with("digraph") && dot.contains("⊢⁻ = ⊢⁺"));
}

#[test]
fn search_writes_a_replayable_witness() {
    let dir = tempfile::tempdir().unwrap();
    for property in ["ss-cut-failure", "ls-structurality-failure"] {
        let out = dir.path().join(format!("{property}.w"));
        let (code, v) = report(&["search", "--property", property, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0);
        assert_eq!(v["result"]["found"], true);
        assert_eq!(
            std::fs::read_to_string(&out).unwrap(),
            v["result"]["witness"].as_str().unwrap()
        );
        let (code, v) = report(&["replay", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{v}");
    }
}

#[test]
fn search_is_deterministic_and_budget_zero_is_inconclusive() {
    let strip = |mut v: Value| {
        v["elapsed_ms"] = Value::Null;
        v.to_string()
    };
    let args = ["search", "--property", "ss-cut-failure", "--seed", "5"];
    assert_eq!(strip(report(&args).1), strip(report(&args).1));
    let (code, v) = report(&["search", "--property", "ss-cut-failure", "--budget", "0"]);
    assert_eq!(code, 0);
    assert_eq!(v["status"], "unknown");
    let (code, _) = report(&["search", "--property", "ss-cut-failure", "--budget", "0", "--strict"]);
    assert_eq!(code, 3);
}

#[test]
fn replay_rejects_a_false_witness() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("bad.w");
    std::fs::write(
        &w,
        "sig a:0\nvars x\nrule x => a\ntovars x y\nclaim ss-cut-failure\npremises y\nlemmas a\ngoal x\n",
    )
    .unwrap();
    let (code, _) = report(&["replay", w.to_str().unwrap()]);
    assert_eq!(code, 1);
    std::fs::write(&w, "claim what\n").unwrap();
    let (code, _) = report(&["replay", w.to_str().unwrap()]);
    assert_eq!(code, 2);
}
