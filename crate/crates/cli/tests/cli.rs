use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data(rel: &str) -> String {
    root().join(rel).display().to_string()
}

fn fsmcov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsmcov"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

const DUT: &str = "crates/core/tests/data/xyfsm_fsm.v";
const TB: &str = "crates/core/tests/data/xyfsm_tb.v";
const FSM16: &str = "corpus/rtl/fsm16.v";

#[test]
fn cover_prints_the_golden_report() {
    let o = fsmcov(&["cover", "--dut", &data(DUT), "--tb", &data(TB)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let golden = std::fs::read_to_string(root().join("crates/core/tests/golden/xyfsm_report.txt")).unwrap();
    assert_eq!(stdout(&o), golden);
}

#[test]
fn oracle_loop_on_fsm16_reaches_full_coverage() {
    let o = fsmcov(&["loop", "--backend", "oracle", "--dut", &data(FSM16)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("FSM Coverage for Module : fsm16"));
    let line = out.lines().find(|l| l.starts_with("Transitions ")).unwrap();
    assert!(line.ends_with("100.00"), "{line}");
    assert!(stderr(&o).contains("iteration 1"));
}

#[test]
fn unknown_flag_is_a_usage_error_with_help() {
    let o = fsmcov(&["cover", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("--bogus"));
    assert!(err.contains("Testbench file; repeat"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_subcommand_arguments_exit_two() {
    assert_eq!(fsmcov(&["parse"]).status.code(), Some(2));
    assert_eq!(fsmcov(&[]).status.code(), Some(2));
}

#[test]
fn unreadable_design_is_a_domain_error() {
    let o = fsmcov(&["extract", "--dut", "/nonexistent/x.v"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("E-IO"));
}

#[test]
fn compile_errors_fail_parse_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let tb = std::fs::read_to_string(root().join(TB))
        .unwrap()
        .replace(".y(y)", ".inp(y)");
    let bad = dir.path().join("tb.v");
    std::fs::write(&bad, tb).unwrap();
    let o = fsmcov(&["parse", "--dut", &data(DUT), "--tb", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ERROR"));
}

#[test]
fn every_subcommand_speaks_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = |p: &Path| p.display().to_string();
    let dut = data(DUT);
    let tb = data(TB);
    let f16 = data(FSM16);
    let spec = data("corpus/spec/fsm16.txt");
    let gen = s(&d.join("gen"));
    let res = s(&d.join("res"));
    let runs: Vec<Vec<&str>> = vec![
        vec!["parse", "--dut", &dut, "--tb", &tb],
        vec!["extract", "--dut", &dut],
        vec!["simulate", "--dut", &dut, "--tb", &tb],
        vec!["cover", "--dut", &dut, "--tb", &tb],
        vec!["loop", "--dut", &f16],
        vec!["inject", "--dut", &f16, "--retarget", "B,C,B"],
        vec![
            "detect",
            "--dut",
            &f16,
            "--spec",
            &spec,
            "--retarget",
            "B,C,B",
            "--scenario",
            "iopairs",
        ],
        vec!["gen-corpus", "--count", "3", "--seed", "2", "--out", &gen],
        vec!["bench", "--corpus", &gen, "--results", &res, "--run-id", "j"],
    ];
    for args in runs {
        let mut full = vec!["--json"];
        full.extend(args.iter());
        let o = fsmcov(&full);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        json(&o);
    }
    let rep = s(&d.join("res/j"));
    let o = fsmcov(&["report", "--json", "--run", &rep]);
    assert_eq!(json(&o)["records"].as_array().unwrap().len(), 3);
}

#[test]
fn detection_on_fsm16_orders_the_scenarios() {
    let o = fsmcov(&[
        "--json",
        "detect",
        "--dut",
        &data(FSM16),
        "--spec",
        &data("corpus/spec/fsm16.txt"),
        "--retarget",
        "B,C,B",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&o);
    let outcomes = v["outcomes"].as_array().unwrap();
    assert_eq!(outcomes.len(), 3);
    assert!(outcomes.iter().all(|o| o["detected"] == true));
    let cycle = |i: usize| outcomes[i]["cycle"].as_u64().unwrap();
    assert!(cycle(1) >= cycle(0));
}

#[test]
fn flags_override_the_config_file_and_land_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"workers": 1, "mutation_seed": 5, "loop_cfg": {"chunk_size": 3, "max_iterations": 4}}"#,
    )
    .unwrap();
    let res = dir.path().join("res");
    let o = fsmcov(&[
        "--config",
        cfg.to_str().unwrap(),
        "bench",
        "--corpus",
        &data("corpus"),
        "--only",
        "fsm16",
        "--only",
        "parity",
        "--chunk-size",
        "7",
        "--results",
        res.to_str().unwrap(),
        "--run-id",
        "c",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = stdout(&o);
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.contains("Easy,fsm16,1,2,6,100.00,1,✓"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(res.join("c/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["loop_cfg"]["chunk_size"], 7);
    assert_eq!(manifest["config"]["loop_cfg"]["max_iterations"], 4);
    assert_eq!(manifest["config"]["mutation_seed"], 5);
    assert_eq!(manifest["corpus"]["ids"], serde_json::json!(["fsm16", "parity"]));
    assert_eq!(std::fs::read_to_string(res.join("c/summary.csv")).unwrap(), summary);

    let again = fsmcov(&["report", "--run", res.join("c").to_str().unwrap()]);
    assert_eq!(stdout(&again), summary);
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let o = fsmcov(&["--config", cfg.to_str().unwrap(), "extract", "--dut", &data(DUT)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn generated_corpus_is_seeded_and_imports_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = fsmcov(&[
            "gen-corpus",
            "--count",
            "5",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |p: &Path| std::fs::read_to_string(p.join("manifest.json")).unwrap();
    assert_eq!(read(&a), read(&b));

    let pairs = dir.path().join("pairs");
    std::fs::create_dir(&pairs).unwrap();
    std::fs::copy(root().join(FSM16), pairs.join("mine.v")).unwrap();
    std::fs::write(pairs.join("mine.txt"), "Six states, one input w.").unwrap();
    let c = dir.path().join("c");
    let o = fsmcov(&[
        "--json",
        "gen-corpus",
        "--count",
        "0",
        "--import",
        pairs.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&o)["entries"][0]["id"], "mine");
    assert!(c.join("rtl/mine.v").is_file());
}

#[test]
fn recorded_loop_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("live");
    let live = fsmcov(&[
        "loop",
        "--dut",
        &data(FSM16),
        "--oracle-batch",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(live.status.success(), "{}", stderr(&live));
    assert!(out.join("iter01/testbench.v").is_file());
    assert!(out.join("manifest.json").is_file());
    let tape = out.join("transcript.jsonl");
    let replay = fsmcov(&["loop", "--dut", &data(FSM16), "--transcript", tape.to_str().unwrap()]);
    assert!(replay.status.success(), "{}", stderr(&replay));
    assert_eq!(stdout(&replay), stdout(&live));
    assert!(stderr(&replay).contains("iteration 3"));
}

#[test]
fn inject_emits_parseable_rtl() {
    let dir = tempfile::tempdir().unwrap();
    let o = fsmcov(&["inject", "--dut", &data(FSM16), "--retarget", "B,C,B", "--emit", "rtl"]);
    assert!(o.status.success());
    let mutant = dir.path().join("mutant.v");
    std::fs::write(&mutant, &o.stdout).unwrap();
    let e = fsmcov(&["--json", "extract", "--dut", mutant.to_str().unwrap()]);
    assert!(e.status.success(), "{}", stderr(&e));
    assert_eq!(json(&e)["transitions"].as_array().unwrap().len(), 12);

    let missing = fsmcov(&["inject", "--dut", &data(FSM16), "--retarget", "B,Z,B"]);
    assert_eq!(missing.status.code(), Some(1));
}
