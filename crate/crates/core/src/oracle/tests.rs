use std::collections::BTreeSet;

use super::*;
use crate::coverage::accumulate;
use crate::fsm::tests::{model, DETECT1011, FSM16, XYFSM};
use crate::hdl::{parse_module, parse_testbench, tokenize, SourceKind, SourceUnit};
use crate::llm::Backend;
use crate::llm::{
    build_chunk_prompt, build_coverage_feedback_prompt, build_system_prompt, BackendConfig, ChatMessage, Role,
};
use crate::sim::{compile_check, format_cycles, simulate, simulate_vectors, DEFAULT_MAX_CYCLES};

fn run(m: &FsmModel, tb: &str) -> Trace {
    let p = parse_testbench(&tokenize(tb).unwrap()).unwrap();
    simulate(m, &p, DEFAULT_MAX_CYCLES).unwrap()
}

fn all(m: &FsmModel) -> BTreeSet<TransitionId> {
    m.transitions.iter().map(|t| t.id).collect()
}

/// FSM16 with B -(w=0)-> C sent back to B instead.
fn fsm16_bug(m: &FsmModel) -> FsmModel {
    let mut bug = m.clone();
    let b = m.state_by_label("B").unwrap();
    let c = m.state_by_label("C").unwrap();
    let id = m.find_transition(b, c).unwrap();
    bug.transitions[id.0].to = b;
    bug
}

#[test]
fn xyfsm_plan_covers_missing_pair() {
    let m = model(XYFSM);
    let targets: BTreeSet<_> = ["B", "C"]
        .iter()
        .map(|s| m.find_transition(m.state_by_label(s).unwrap(), 0).unwrap())
        .collect();
    let plan = plan_coverage(&m, &targets, DEFAULT_SEGMENT_BUDGET).unwrap();
    assert!(plan.segments.len() <= 2);
    let r = accumulate(&m, &[run(&m, &emit_testbench(&m, &plan))]).unwrap();
    assert!(targets.is_subset(&r.covered_ids()));
}

#[test]
fn empty_plan_is_reset_only() {
    let m = model(XYFSM);
    let plan = plan_coverage(&m, &BTreeSet::new(), DEFAULT_SEGMENT_BUDGET).unwrap();
    assert!(plan.is_empty());
    let tb = emit_testbench(&m, &plan);
    assert!(tb.contains("$finish;"));
    let t = run(&m, &tb);
    assert_eq!(t.active_cycles(), 0);
}

#[test]
fn fsm16_full_plan_round_trips_and_covers() {
    let m = model(FSM16);
    let plan = plan_coverage(&m, &all(&m), DEFAULT_SEGMENT_BUDGET).unwrap();
    let tb = emit_testbench(&m, &plan);
    let dut = parse_module(&tokenize(FSM16).unwrap()).unwrap();
    let unit = SourceUnit::new("tb.v", tb.as_str(), SourceKind::Testbench).unwrap();
    let diags = compile_check(&unit, &dut);
    assert!(diags.is_clean(), "{}", diags.feedback_text());
    let p = parse_testbench(&tokenize(&tb).unwrap()).unwrap();
    assert_eq!(p.applied_vectors(), plan.vectors().collect::<Vec<_>>());
    let r = accumulate(&m, &[simulate(&m, &p, DEFAULT_MAX_CYCLES).unwrap()]).unwrap();
    assert_eq!(r.transition_percent.to_string(), "100.00");
    assert_eq!(r.states_covered, 6);
}

#[test]
fn small_budget_splits_into_reset_segments() {
    let m = model(FSM16);
    let plan = plan_coverage(&m, &all(&m), 3).unwrap();
    assert!(plan.segments.len() > 1);
    assert!(plan.segments.iter().all(|s| s.reset));
    let r = accumulate(&m, &[run(&m, &emit_testbench(&m, &plan))]).unwrap();
    assert!(r.is_complete());
}

#[test]
fn eight_ones_render_as_sequence_call() {
    let m = model(FSM16);
    let plan = CoveragePlan {
        segments: vec![Segment {
            reset: true,
            vectors: vec![Bits::new(1, 1); 8],
        }],
        targeted: BTreeSet::new(),
    };
    let tb = emit_testbench(&m, &plan);
    assert!(tb.contains("apply_input_sequence(8'b11111111);"));
    let p = parse_testbench(&tokenize(&tb).unwrap()).unwrap();
    assert_eq!(p.applied_vectors(), vec![Bits::new(1, 1); 8]);
}

#[test]
fn active_low_mealy_detector_is_covered() {
    let m = model(DETECT1011);
    let plan = plan_coverage(&m, &all(&m), DEFAULT_SEGMENT_BUDGET).unwrap();
    let tb = emit_testbench(&m, &plan);
    assert!(tb.contains("rst_n = 0;"));
    let r = accumulate(&m, &[run(&m, &tb)]).unwrap();
    assert!(r.is_complete());
}

#[test]
fn unreachable_target_is_named() {
    let m = model(
        "module o(input clk, input rst, input a, output q);\nlocalparam S0 = 2'd0, S1 = 2'd1, S2 = 2'd2;\nreg [1:0] st;\n\
         always @(posedge clk) if (rst) st <= S0; else case (st) S0: st <= a ? S1 : S0; S1: st <= S0; S2: st <= S0; endcase\n\
         assign q = (st == S1);\nendmodule",
    );
    let orphan = m.find_transition(m.state_by_label("S2").unwrap(), 0).unwrap();
    let err = plan_coverage(&m, &BTreeSet::from([orphan]), 64).unwrap_err();
    assert_eq!(err, OracleError::UnreachableTarget("S2->S0".into()));
}

#[test]
fn golden_traces_pass_every_check() {
    let m = model(FSM16);
    let plan = plan_coverage(&m, &all(&m), DEFAULT_SEGMENT_BUDGET).unwrap();
    let t = run(&m, &emit_testbench(&m, &plan));
    for mode in [Observation::StateRegs, Observation::IoPairs] {
        assert!(!check_trace(&m, &t, mode).found);
        assert!(!check_chunked(&m, &t, mode, 3).found);
    }
    for bit in m.output_bit_names() {
        assert!(!check_bitwise(&m, &t, &bit).unwrap().found);
    }
    assert_eq!(
        check_bitwise(&m, &t, "nope"),
        Err(OracleError::UnknownOutputBit("nope".into()))
    );
}

#[test]
fn retargeted_fsm16_detected_earlier_with_state() {
    let m = model(FSM16);
    let bug = fsm16_bug(&m);
    let plan = plan_coverage(&m, &all(&m), DEFAULT_SEGMENT_BUDGET).unwrap();
    let guided = run(&bug, &emit_testbench(&m, &plan));
    let s = check_trace(&m, &guided, Observation::StateRegs);
    assert!(s.found);
    // the wrong successor shares its output with the right one and the
    // planned walk rejoins the golden path, so outputs alone stay silent
    assert!(!check_trace(&m, &guided, Observation::IoPairs).found);
    let t = concat_traces(vec![guided, simulate_plan(&bug, &observation_plan(&m))]).unwrap();
    assert_eq!(check_trace(&m, &t, Observation::StateRegs), s);
    let io = check_trace(&m, &t, Observation::IoPairs);
    assert!(io.found);
    assert!(io.cycle > s.cycle, "{s:?} {io:?}");
    assert_eq!((s.expected.as_str(), s.observed.as_str()), ("C", "B"));
    for size in [1, 3, 10, 17] {
        assert_eq!(check_chunked(&m, &t, Observation::StateRegs, size), s);
        assert_eq!(check_chunked(&m, &t, Observation::IoPairs, size), io);
    }
    let first_bit = m
        .output_bit_names()
        .iter()
        .filter_map(|b| check_bitwise(&m, &t, b).unwrap().cycle)
        .min();
    assert_eq!(first_bit, io.cycle);
    assert!(patterns_to_detection(&t, s.cycle.unwrap()) >= 1);
}

fn system(rtl: &str) -> ChatMessage {
    build_system_prompt(&SourceUnit::new("dut.v", rtl, SourceKind::Rtl).unwrap())
}

#[test]
fn backend_answers_coverage_feedback() {
    let m = model(XYFSM);
    let mut t = crate::llm::PromptTranscript::new("oracle:0");
    t.push(system(XYFSM));
    t.push(ChatMessage::new(
        Role::Assistant,
        "```verilog\nmodule tb(); endmodule\n```",
    ));
    let lines = vec![
        "Transition from B to A".to_string(),
        "Transition from C to A".to_string(),
    ];
    t.push(build_coverage_feedback_prompt(&lines).unwrap());
    let mut b = OracleBackend::new(&BackendConfig::default());
    let answer = crate::llm::complete(&mut b, &t).unwrap();
    let r = accumulate(&m, &[run(&m, &crate::llm::extract_code(&answer))]).unwrap();
    let ids = r.covered_ids();
    for l in ["B", "C"] {
        assert!(ids.contains(&m.find_transition(m.state_by_label(l).unwrap(), 0).unwrap()));
    }
}

#[test]
fn backend_without_golden_refuses_detection() {
    let mut t = crate::llm::PromptTranscript::new("oracle:0");
    t.push(system(FSM16));
    t.push(build_chunk_prompt(0, 10, "cycle 1: input=1 state=A output=00\n", true));
    let mut b = OracleBackend::new(&BackendConfig::default());
    assert!(matches!(
        b.complete(&t),
        Err(crate::llm::LlmError::OracleUnsupportedPrompt(_))
    ));
}

#[test]
fn backend_chunk_answers_match_direct_check() {
    let m = model(FSM16);
    let bug = fsm16_bug(&m);
    let v = |x: u64| Bits::new(x, 1);
    let t = simulate_vectors(&bug, &[v(1), v(1), v(0), v(1), v(0), v(0), v(1), v(1), v(0), v(0)]);
    let direct = check_trace(&m, &t, Observation::StateRegs);
    let mut tr = crate::llm::PromptTranscript::new("oracle:0");
    tr.push(system(FSM16));
    let mut b = OracleBackend::new(&BackendConfig::default()).with_golden(m.clone());
    let mut reported = None;
    for (i, chunk) in t.records.chunks(3).enumerate() {
        tr.push(build_chunk_prompt(i, 3, &format_cycles(&t, chunk, true), i > 0));
        let answer = b.complete(&tr).unwrap();
        tr.push(ChatMessage::new(Role::Assistant, answer.clone()));
        if let ReportedVerdict::Mismatch { cycle } = parse_verdict(&answer) {
            reported = cycle;
            break;
        }
    }
    assert_eq!(reported, direct.cycle);
}

#[test]
fn separating_sequences_split_outputs() {
    let m = model(FSM16);
    let b = m.state_by_label("B").unwrap();
    let c = m.state_by_label("C").unwrap();
    let seq = separating_sequence(&m, b, c, 12).unwrap();
    assert_eq!(seq, vec![Bits::new(0, 1); 2]);
    assert_eq!(separating_sequence(&m, b, b, 12), None);
    let golden = simulate_plan(&m, &observation_plan(&m));
    assert!(!check_trace(&m, &golden, Observation::IoPairs).found);
    assert!(golden.records.windows(2).all(|w| w[1].cycle == w[0].cycle + 1));
}

#[test]
fn verdict_parsing() {
    assert_eq!(
        parse_verdict("MISMATCH cycle=7 expected=C observed=B\nwhy"),
        ReportedVerdict::Mismatch { cycle: Some(7) }
    );
    assert_eq!(parse_verdict("NO MISMATCH\nfine"), ReportedVerdict::NoMismatch);
    assert_eq!(
        parse_verdict("The transition at cycle 12 is inconsistent with the specification."),
        ReportedVerdict::Mismatch { cycle: Some(12) }
    );
    assert_eq!(parse_verdict("I am not sure."), ReportedVerdict::Unclear);
}
