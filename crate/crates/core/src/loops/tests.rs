use super::*;
use crate::coverage::Percent;
use crate::fsm::tests::{model, FSM16, XYFSM};
use crate::hdl::{SourceKind, SourceUnit};
use crate::llm::{build_backend, Backend, BackendConfig, LlmError, PromptTranscript, ReplayBackend, Role};
use crate::mutation::{inject, Mutation};
use crate::oracle::OracleBackend;

const SPEC16: &str = "Six-state Moore machine. Outputs y1 y0: A=00 B=01 C=01 D=10 E=10 F=11.";

fn unit(text: &str) -> SourceUnit {
    SourceUnit::new("dut.v", text, SourceKind::Rtl).unwrap()
}

fn oracle(batch: Option<usize>) -> OracleBackend {
    OracleBackend::new(&BackendConfig {
        oracle_batch: batch,
        ..BackendConfig::default()
    })
}

struct Garbage;

impl Backend for Garbage {
    fn id(&self) -> String {
        "garbage".into()
    }
    fn complete(&mut self, _: &PromptTranscript) -> Result<String, LlmError> {
        Ok("```verilog\nmodule tb(;\n```\n".into())
    }
}

#[test]
fn xyfsm_oracle_reaches_full_coverage_quickly() {
    let mut b = oracle(None);
    let run = run_testbench_loop(&unit(XYFSM), &mut b, &LoopConfig::default(), None).unwrap();
    assert_eq!(run.stop, StopReason::Threshold);
    assert!(run.iterations() <= 2);
    assert_eq!(run.final_report().transition_percent, Percent(10_000));
    assert!(run.logs[0].compile.clean);
}

#[test]
fn fsm16_tape_replays_in_three_turns() {
    let mut rec = oracle(Some(5));
    let cfg = LoopConfig::default();
    let live = run_testbench_loop(&unit(FSM16), &mut rec, &cfg, None).unwrap();
    assert_eq!(live.iterations(), 3);
    assert!(!live.logs[1].feedback.is_empty());

    let mut replay = ReplayBackend::from_transcript(&live.tape);
    let again = run_testbench_loop(&unit(FSM16), &mut replay, &cfg, None).unwrap();
    assert_eq!(again.iterations(), 3);
    assert_eq!(again.stop, StopReason::Threshold);
    assert_eq!(again.final_report(), live.final_report());
    assert_eq!(replay.remaining(), 0);
    let hashes = |r: &LoopRun| r.logs.iter().map(|l| l.testbench_sha256.clone()).collect::<Vec<_>>();
    assert_eq!(hashes(&again), hashes(&live));
}

#[test]
fn summarized_history_covers_the_same() {
    let cfg = LoopConfig {
        history: HistoryMode::Summarized,
        ..LoopConfig::default()
    };
    let mut b = oracle(Some(5));
    let run = run_testbench_loop(&unit(FSM16), &mut b, &cfg, None).unwrap();
    assert_eq!(run.iterations(), 3);
    assert_eq!(run.final_report().transition_percent, Percent(10_000));
    assert!(run.tape.check().is_ok());
}

#[test]
fn compile_failures_are_retried_then_abort() {
    let cfg = LoopConfig {
        abort_on_compile_failure: true,
        ..LoopConfig::default()
    };
    let err = run_testbench_loop(&unit(XYFSM), &mut Garbage, &cfg, None).unwrap_err();
    assert!(matches!(err, LoopError::CompileFailure(4)), "{err}");
}

#[test]
fn compile_failures_without_abort_stall() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_testbench_loop(&unit(XYFSM), &mut Garbage, &LoopConfig::default(), Some(dir.path())).unwrap();
    assert_eq!(run.stop, StopReason::Stall);
    assert_eq!(run.iterations(), 2);
    assert_eq!(run.logs[0].compile.attempts, 4);
    assert!(run.logs.iter().all(|l| l.report.is_none()));
    let tape = PromptTranscript::load(&dir.path().join("transcript.jsonl")).unwrap();
    let answers = tape.entries.iter().filter(|e| e.role == Role::Assistant).count();
    assert_eq!(answers, 8);
    assert!(tape.entries[2].content.starts_with(crate::llm::COMPILE_FEEDBACK_HEAD));
}

#[test]
fn iteration_artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = oracle(Some(5));
    let run = run_testbench_loop(&unit(FSM16), &mut b, &LoopConfig::default(), Some(dir.path())).unwrap();
    for i in 1..=run.iterations() {
        let d = dir.path().join(format!("iter{i:02}"));
        for f in ["testbench.v", "coverage.txt", "coverage.json", "transcript.jsonl"] {
            assert!(d.join(f).is_file(), "{}", d.join(f).display());
        }
    }
    let log: IterationLog =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("iter03/coverage.json")).unwrap()).unwrap();
    assert_eq!(log, run.logs[2]);
}

fn guided(golden: &crate::FsmModel) -> Vec<crate::hdl::StimulusProgram> {
    let mut b = OracleBackend::new(&BackendConfig::default()).with_golden(golden.clone());
    run_testbench_loop(&unit(FSM16), &mut b, &LoopConfig::default(), None)
        .unwrap()
        .programs
}

fn detect(golden: &crate::FsmModel, mutant: &crate::FsmModel, cfg: &LoopConfig) -> DetectionOutcome {
    let mut b = OracleBackend::new(&BackendConfig::default()).with_golden(golden.clone());
    run_bug_detection(golden, mutant, Some(SPEC16), &guided(golden), &mut b, cfg).unwrap()
}

fn scenario(s: Scenario) -> LoopConfig {
    LoopConfig {
        scenario: s,
        ..LoopConfig::default()
    }
}

#[test]
fn golden_against_itself_is_clean() {
    let g = model(FSM16);
    for s in Scenario::ALL {
        let o = detect(&g, &g, &scenario(s));
        assert!(!o.detected, "{s:?}");
        assert!(o.raw_verdicts.iter().all(|v| v.reported_cycle.is_none()));
    }
}

#[test]
fn fsm16_bug_is_found_earlier_with_state_registers() {
    let g = model(FSM16);
    let mu = Mutation::retarget(&g, "B", "C", "B").unwrap();
    let bug = inject(&g, &mu).unwrap();
    let s = detect(&g, &bug, &scenario(Scenario::StateRegs));
    let io = detect(&g, &bug, &scenario(Scenario::IoPairs));
    let fz = detect(&g, &bug, &scenario(Scenario::Fuzzing));
    assert!(s.detected && io.detected && fz.detected);
    assert!(s.patterns_to_detection.unwrap() <= io.patterns_to_detection.unwrap());
    assert!(io.raw_verdicts.iter().any(|v| v.bit.is_some()));
    assert_eq!(s.raw_verdicts.iter().filter(|v| v.confirmed).count(), 1);
}

#[test]
fn chunk_size_does_not_move_the_detection() {
    let g = model(FSM16);
    let bug = inject(&g, &Mutation::retarget(&g, "B", "C", "B").unwrap()).unwrap();
    for s in [Scenario::StateRegs, Scenario::IoPairs] {
        let cycles: Vec<_> = [1, 3, 10, 17]
            .iter()
            .map(|&k| {
                detect(
                    &g,
                    &bug,
                    &LoopConfig {
                        chunk_size: k,
                        ..scenario(s)
                    },
                )
                .cycle
            })
            .collect();
        assert!(
            cycles.iter().all(|c| *c == cycles[0] && c.is_some()),
            "{s:?} {cycles:?}"
        );
    }
}

#[test]
fn fuzzing_is_seeded() {
    let g = model(FSM16);
    let bug = inject(&g, &Mutation::retarget(&g, "B", "C", "B").unwrap()).unwrap();
    let cfg = LoopConfig {
        rng_seed: 7,
        ..scenario(Scenario::Fuzzing)
    };
    assert_eq!(
        scenario_trace(&g, &bug, &[], &cfg).unwrap(),
        scenario_trace(&g, &bug, &[], &cfg).unwrap()
    );
    assert_eq!(detect(&g, &bug, &cfg), detect(&g, &bug, &cfg));
    let other = LoopConfig {
        rng_seed: 8,
        ..cfg.clone()
    };
    assert_ne!(
        scenario_trace(&g, &bug, &[], &cfg).unwrap(),
        scenario_trace(&g, &bug, &[], &other).unwrap()
    );
}

#[test]
fn spec_is_required_for_a_model_backend() {
    let g = model(FSM16);
    let err = run_bug_detection(&g, &g, Some("  "), &[], &mut Garbage, &LoopConfig::default()).unwrap_err();
    assert!(matches!(err, LoopError::SpecMissing));
}

#[test]
fn experiment_writes_results_tree() {
    let dir = tempfile::tempdir().unwrap();
    let sink = ResultsSink::new(dir.path(), "run1").unwrap();
    let g = model(FSM16);
    let items = vec![
        BenchItem {
            id: "fsm16".into(),
            dut: unit(FSM16),
            spec: SPEC16.into(),
            mutation: Mutation::retarget(&g, "B", "C", "B"),
        },
        BenchItem {
            id: "xyfsm".into(),
            dut: unit(XYFSM),
            spec: "Xyfsm machine.".into(),
            mutation: None,
        },
    ];
    let opts = ExperimentOptions::default();
    let out = run_bench(&items, &opts, 2, Some(&sink)).unwrap();
    let records: Vec<_> = out.into_iter().map(|(_, r)| r.unwrap()).collect();
    assert_eq!(records[0].fsm_id, "fsm16");
    assert_eq!(records[0].level, Level::Easy);
    assert_eq!(records[0].detection.len(), 3);
    sink.write_summary(&records).unwrap();
    let root = dir.path().join("run1");
    for p in [
        "fsm16/iter01/testbench.v",
        "fsm16/detection/IOPairs.json",
        "fsm16/mutant.json",
        "fsm16/record.json",
    ] {
        assert!(root.join(p).is_file(), "{p}");
    }
    let summary = std::fs::read_to_string(root.join("summary.csv")).unwrap();
    let header = summary.lines().next().unwrap();
    assert!(header.starts_with("Level,FSM,i/p,o/p,states,oracle:0 %Cov,oracle:0 Iters,oracle:0 StateRegs"));
    assert!(summary.contains("Easy,fsm16,1,2,6,100.00,1,✓"));
    let plot = std::fs::read_to_string(root.join("plotdata.csv")).unwrap();
    assert!(plot.starts_with(PLOT_HEADER));
    assert_eq!(plot.lines().count(), 1 + 2 * 3);
}

#[test]
fn levels_follow_state_counts() {
    assert_eq!(level_for(7), Level::Easy);
    assert_eq!(level_for(8), Level::Medium);
    assert_eq!(level_for(14), Level::Medium);
    assert_eq!(level_for(15), Level::Hard);
}

#[test]
fn undetected_scenarios_leave_plot_cells_empty() {
    let rec = ExperimentRecord {
        fsm_id: "m".into(),
        inputs: 1,
        outputs: 1,
        states: 3,
        level: Level::Easy,
        backend: "b".into(),
        coverage: Percent(5000),
        state_coverage: Percent(10_000),
        iterations: 4,
        stop: StopReason::Stall,
        mutation: None,
        detection: vec![ScenarioResult {
            scenario: Scenario::IoPairs,
            detected: false,
            patterns: None,
            prompts: 9,
        }],
    };
    let (summary, plot) = summarize(&[rec]);
    assert_eq!(
        summary,
        "Level,FSM,i/p,o/p,states,b %Cov,b Iters,b IOPairs\nEasy,m,1,1,3,50.00,4,✗\n"
    );
    assert_eq!(plot, format!("{PLOT_HEADER}\n1,m,b/IOPairs,\n"));
}

#[test]
fn backend_built_from_config_answers_detection() {
    let g = model(FSM16);
    let mut b = build_backend(&BackendConfig::default(), Some(&g)).unwrap();
    let o = run_bug_detection(&g, &g, None, &[], b.as_mut(), &scenario(Scenario::IoPairs)).unwrap();
    assert!(!o.detected);
    assert!(o.prompts > 0);
}
