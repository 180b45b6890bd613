use super::*;
use crate::fsm::tests::{model, DETECT1011, XYFSM};
use crate::hdl::{parse_module, parse_testbench, tokenize, SourceKind, SourceUnit};

const XYFSM_TB: &str = include_str!("../../tests/data/xyfsm_tb.v");
const DETECT_TB: &str = include_str!("../../tests/data/detector_tb.v");

fn program(text: &str) -> StimulusProgram {
    parse_testbench(&tokenize(text).unwrap()).unwrap()
}

#[test]
fn xyfsm_stimulus_walks_expected_states() {
    let m = model(XYFSM);
    let t = simulate(&m, &program(XYFSM_TB), DEFAULT_MAX_CYCLES).unwrap();
    assert!(t.finished);
    assert_eq!(t.records.len(), 9);
    assert!(t.records[0].reset_active);
    assert_eq!(trace_to_state_sequence(&t).join(" "), "A A A B D A B C D");
    assert_eq!(t.records[4].outputs, Bits::new(1, 1));
}

#[test]
fn detector_fires_on_fourth_bit() {
    let m = model(DETECT1011);
    let t = simulate(&m, &program(DETECT_TB), DEFAULT_MAX_CYCLES).unwrap();
    let pairs: Vec<(u64, u64)> = trace_to_io_pairs(&t)
        .iter()
        .map(|(i, o)| (i.value(), o.value()))
        .collect();
    assert_eq!(pairs, [(1, 0), (0, 0), (1, 0), (1, 1)]);
    assert_eq!(pairs.len(), t.records.len() - 1);
}

#[test]
fn reset_held_throughout() {
    let m = model(XYFSM);
    let mut p = program(XYFSM_TB);
    for w in p.writes.iter_mut().filter(|w| w.signal == "reset") {
        w.value = 1;
    }
    let t = simulate(&m, &p, DEFAULT_MAX_CYCLES).unwrap();
    assert!(t.records.iter().all(|r| r.reset_active && r.state == m.reset_state));
    assert!(trace_to_io_pairs(&t).is_empty());
}

#[test]
fn cycle_budget_marks_unfinished() {
    let m = model(XYFSM);
    let t = simulate(&m, &program(XYFSM_TB), 3).unwrap();
    assert_eq!(t.records.len(), 3);
    assert!(!t.finished);
    assert_eq!(simulate(&m, &program(XYFSM_TB), 0), Err(SimError::ZeroBudget));
}

#[test]
fn csv_export_uses_labels() {
    let m = model(XYFSM);
    let t = simulate(&m, &program(XYFSM_TB), DEFAULT_MAX_CYCLES).unwrap();
    let csv = t.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("cycle,reset,x,y,state,z"));
    assert_eq!(lines.next(), Some("0,1,0,0,A,0"));
    assert_eq!(lines.nth(3), Some("4,0,0,0,D,1"));
    let json = t.to_json();
    assert_eq!(json["records"][2]["inputs"]["x"], "1");
    assert_eq!(json["records"][4]["state"], "D");
}

#[test]
fn compile_check_reports() {
    let dut = parse_module(&tokenize(XYFSM).unwrap()).unwrap();
    let tb = |t: &str| SourceUnit::new("tb.v", t, SourceKind::Testbench).unwrap();
    assert!(compile_check(&tb(XYFSM_TB), &dut).is_clean());

    let bad_port = XYFSM_TB.replace(".y(y)", ".inp(y)");
    let d = compile_check(&tb(&bad_port), &dut);
    assert!(d
        .errors
        .iter()
        .any(|e| e.code == "TB-BIND" && e.message.contains("`inp`")));

    let unbalanced = XYFSM_TB.replacen("    end\n  endtask", "  endtask", 1);
    let d = compile_check(&tb(&unbalanced), &dut);
    assert_eq!(d.errors.len(), 1);
    assert_eq!(d.errors[0].code, "E-PARSE");
    assert!(d.feedback_text().starts_with("ERROR tb.v:"));
}
