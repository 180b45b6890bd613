use super::*;
use crate::fsm::tests::{model, FSM16, XYFSM};
use crate::hdl::{parse_testbench, tokenize};
use crate::sim::{simulate, simulate_vectors, DEFAULT_MAX_CYCLES};
use crate::Bits;

pub(crate) const XYFSM_TB: &str = include_str!("../../tests/data/xyfsm_tb.v");
const XYFSM_GOLDEN: &str = include_str!("../../tests/golden/xyfsm_report.txt");

pub(crate) fn xyfsm_report() -> CoverageReport {
    let m = model(XYFSM);
    let p = parse_testbench(&tokenize(XYFSM_TB).unwrap()).unwrap();
    let t = simulate(&m, &p, DEFAULT_MAX_CYCLES).unwrap();
    accumulate(&m, &[t]).unwrap()
}

#[test]
fn percent_rounding() {
    assert_eq!(Percent::of(6, 8).to_string(), "75.00");
    assert_eq!(Percent::of(4, 4).to_string(), "100.00");
    assert_eq!(Percent::of(0, 0).to_string(), "0.00");
    assert_eq!(Percent::of(1, 3).to_string(), "33.33");
    assert_eq!(Percent::of(2, 3).to_string(), "66.67");
    // 1/8 = 12.5 exactly; 1/16 = 6.25; 1/800 = 0.125 rounds up
    assert_eq!(Percent::of(1, 800).to_string(), "0.13");
    assert_eq!(Percent::parse("75.00"), Some(Percent(7500)));
}

#[test]
fn xyfsm_counts_and_feedback() {
    let r = xyfsm_report();
    assert_eq!((r.states_total, r.states_covered), (4, 4));
    assert_eq!((r.transitions_total, r.transitions_covered), (8, 6));
    assert_eq!(r.transition_percent.to_string(), "75.00");
    assert_eq!(
        uncovered_transitions(&r),
        ["Transition from B to A", "Transition from C to A"]
    );
}

#[test]
fn xyfsm_report_matches_golden() {
    let text = render_report(&xyfsm_report());
    if std::env::var_os("FSMCOV_BLESS").is_some() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/xyfsm_report.txt");
        std::fs::write(path, &text).unwrap();
        return;
    }
    assert_eq!(text, XYFSM_GOLDEN);
    assert!(text.starts_with("FSM Coverage for Module : fsm\n"));
}

#[test]
fn scraper_recovers_counts() {
    let r = xyfsm_report();
    let s = scrape_report(&render_report(&r)).unwrap();
    assert_eq!(s.transitions, (8, 6, Percent(7500)));
    assert_eq!(s.states, (4, 4, Percent(10000)));
    assert_eq!(s.per_transition.len(), 8);
    assert_eq!(s.per_transition[2], ("B->A".to_string(), 17, false));
    assert_eq!(s.fsm_register_name, "current_state");
}

#[test]
fn empty_trace_list() {
    let m = model(XYFSM);
    let r = accumulate(&m, &[]).unwrap();
    assert_eq!(r.transitions_covered, 0);
    assert_eq!(r.state_percent.to_string(), "0.00");
    assert_eq!(r.transition_percent.to_string(), "0.00");
}

#[test]
fn merge_completes_xyfsm() {
    let m = model(XYFSM);
    let a = xyfsm_report();
    // B -(x=0,y=0)-> A and C -(y=0)-> A
    let v = |x: u64| Bits::new(x, 2);
    let t = simulate_vectors(&m, &[v(0b10), v(0b00), v(0b10), v(0b10), v(0b00), v(0b00)]);
    let b = accumulate(&m, &[t]).unwrap();
    let ids = b.covered_ids();
    assert!(ids.contains(&m.find_transition(1, 0).unwrap()));
    assert!(ids.contains(&m.find_transition(2, 0).unwrap()));
    let merged = merge(&a, &b).unwrap();
    assert_eq!(merged.transition_percent.to_string(), "100.00");
    assert_eq!(merge(&a, &a).unwrap(), a);
    assert_eq!(merge(&a, &b).unwrap(), merge(&b, &a).unwrap());
    let empty = accumulate(&m, &[]).unwrap();
    assert_eq!(merge(&a, &empty).unwrap(), a);
}

#[test]
fn mismatched_models_are_rejected() {
    let xyfsm = model(XYFSM);
    let fsm16 = model(FSM16);
    let t = simulate_vectors(&fsm16, &[Bits::new(1, 1)]);
    assert!(matches!(
        accumulate(&xyfsm, &[t]),
        Err(CoverageError::TraceModelMismatch { .. })
    ));
    let a = accumulate(&xyfsm, &[]).unwrap();
    let b = accumulate(&fsm16, &[]).unwrap();
    assert_eq!(merge(&a, &b), Err(CoverageError::ModelMismatch));
}

#[test]
fn single_state_report_row() {
    let m = model(
        "module one(input clk, input rst, input a, output q);\nlocalparam S0 = 1'b0;\nreg st;\n\
         always @(posedge clk) if (rst) st <= S0; else st <= S0;\nassign q = (st == S0);\nendmodule",
    );
    let t = simulate_vectors(&m, &[Bits::new(0, 1), Bits::new(1, 1)]);
    let r = accumulate(&m, &[t]).unwrap();
    let text = render_report(&r);
    let row = text.lines().nth(3).unwrap();
    assert_eq!(
        row.split_whitespace().collect::<Vec<_>>(),
        ["States", "1", "1", "100.00"]
    );
}
