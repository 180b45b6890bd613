use serde_json::Value;

use super::*;
use crate::fsm::tests::{model, DETECT1011, FSM16, XYFSM};
use crate::sim::simulate_vectors;

/// Paths of leaves that differ between two JSON documents.
fn diff_paths(a: &Value, b: &Value, path: String, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let keys: BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for k in keys {
                diff_paths(
                    x.get(k).unwrap_or(&Value::Null),
                    y.get(k).unwrap_or(&Value::Null),
                    format!("{path}.{k}"),
                    out,
                );
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                diff_paths(p, q, format!("{path}[{i}]"), out);
            }
        }
        _ if a != b => out.push(path),
        _ => {}
    }
}

fn json_diff(a: &FsmModel, b: &FsmModel) -> Vec<String> {
    let mut out = Vec::new();
    let pa: Value = serde_json::from_str(&a.to_json()).unwrap();
    let pb: Value = serde_json::from_str(&b.to_json()).unwrap();
    diff_paths(&pa, &pb, String::new(), &mut out);
    out
}

fn fsm16_retarget(m: &FsmModel) -> Mutation {
    let b = m.state_by_label("B").unwrap();
    let c = m.state_by_label("C").unwrap();
    Mutation {
        kind: MutationKind::RetargetTransition,
        site: m.find_transition(b, c).unwrap().0,
        payload: b as u64,
        seed: 0,
    }
}

/// First non-reset record index where the traces differ under `obs`.
fn first_divergence(a: &FsmModel, b: &FsmModel, w: &[Bits], obs: Observation) -> Option<usize> {
    let ta = simulate_vectors(a, w);
    let tb = simulate_vectors(b, w);
    (1..ta.records.len()).find(|i| {
        let (x, y) = (&ta.records[*i], &tb.records[*i]);
        x.outputs != y.outputs || (obs == Observation::StateRegs && a.label(x.state) != b.label(y.state))
    })
}

#[test]
fn fsm16_retarget_changes_one_edge() {
    let m = model(FSM16);
    let bug = inject(&m, &fsm16_retarget(&m)).unwrap();
    let edges = |x: &FsmModel| -> BTreeSet<(String, String)> {
        x.transitions
            .iter()
            .map(|t| (x.label(t.from).to_string(), x.label(t.to).to_string()))
            .collect()
    };
    let (g, b) = (edges(&m), edges(&bug));
    assert_eq!(g.difference(&b).count(), 1);
    assert_eq!(b.difference(&g).count(), 1);
    assert!(b.contains(&("B".to_string(), "B".to_string())));
    assert_eq!(json_diff(&m, &bug).len(), 1);
}

#[test]
fn fsm16_witness_needs_more_cycles_on_outputs() {
    let m = model(FSM16);
    let bug = inject(&m, &fsm16_retarget(&m)).unwrap();
    let h = default_horizon(&m);
    let ws = distinguishing_witness(&m, &bug, h, Observation::StateRegs)
        .unwrap()
        .unwrap();
    let wo = distinguishing_witness(&m, &bug, h, Observation::IoPairs)
        .unwrap()
        .unwrap();
    assert!(wo.len() > ws.len());
    for (w, obs) in [(&ws, Observation::StateRegs), (&wo, Observation::IoPairs)] {
        assert_eq!(first_divergence(&m, &bug, w, obs), Some(w.len()));
    }
}

#[test]
fn revert_is_indistinguishable() {
    let m = model(FSM16);
    let mu = fsm16_retarget(&m);
    let bug = inject(&m, &mu).unwrap();
    let back = Mutation {
        payload: m.transitions[mu.site].to as u64,
        ..mu
    };
    let reverted = inject(&bug, &back).unwrap();
    assert_eq!(reverted, m);
    assert_eq!(
        distinguishing_witness(&m, &reverted, 24, Observation::StateRegs).unwrap(),
        None
    );
    assert_eq!(
        inject(
            &m,
            &Mutation {
                payload: m.transitions[mu.site].to as u64,
                ..mu
            }
        ),
        Err(MutationError::IdentityMutation)
    );
}

#[test]
fn witness_is_minimal_by_exhaustive_search() {
    for src in [XYFSM, FSM16, DETECT1011] {
        let m = model(src);
        let iw = m.input_width();
        for mu in candidate_mutations(&m, &MutationKind::ALL).into_iter().step_by(3) {
            let Ok(bug) = inject(&m, &mu) else { continue };
            for obs in [Observation::StateRegs, Observation::IoPairs] {
                let Some(w) = distinguishing_witness(&m, &bug, 6, obs).unwrap() else {
                    continue;
                };
                assert_eq!(first_divergence(&m, &bug, &w, obs), Some(w.len()));
                // no shorter sequence diverges
                for len in 1..w.len() {
                    let total = 1u64 << (iw as usize * len);
                    for code in 0..total {
                        let seq: Vec<Bits> = (0..len)
                            .map(|i| Bits::new(code >> (iw as usize * i) & ((1 << iw) - 1), iw))
                            .collect();
                        assert_eq!(first_divergence(&m, &bug, &seq, obs), None, "{mu:?} {obs:?}");
                    }
                }
            }
        }
    }
}

#[test]
fn swap_outputs_touches_one_state() {
    let m = model(FSM16);
    let d = m.state_by_label("D").unwrap();
    let mu = Mutation {
        kind: MutationKind::SwapOutputs,
        site: d,
        payload: m.moore_outputs[d].value() ^ 1,
        seed: 0,
    };
    let bug = inject(&m, &mu).unwrap();
    let changed: Vec<usize> = (0..m.states.len())
        .filter(|s| m.moore_outputs[*s] != bug.moore_outputs[*s])
        .collect();
    assert_eq!(changed, [d]);
    assert_eq!(json_diff(&m, &bug).len(), 1);
}

#[test]
fn guard_flip_keeps_partition() {
    let m = model(XYFSM);
    let mut flipped = 0;
    for mu in candidate_mutations(&m, &[MutationKind::FlipGuardLiteral]) {
        match inject(&m, &mu) {
            Ok(bug) => {
                bug.validate().unwrap();
                assert_ne!(bug.transitions, m.transitions);
                flipped += 1;
            }
            Err(e) => assert_eq!(e, MutationError::IdentityMutation),
        }
    }
    assert!(flipped > 0);
}

#[test]
fn wrong_reset_shows_in_first_cycle() {
    let m = model(FSM16);
    let mu = Mutation {
        kind: MutationKind::WrongResetState,
        site: 0,
        payload: 3,
        seed: 0,
    };
    let bug = inject(&m, &mu).unwrap();
    let w = distinguishing_witness(&m, &bug, 24, Observation::StateRegs)
        .unwrap()
        .unwrap();
    assert_eq!(w.len(), 1);
}

#[test]
fn sampling_is_seeded_and_distinguishable() {
    let m = model(FSM16);
    assert_eq!(
        sample_mutation(&m, 42, &MutationKind::ALL).unwrap(),
        sample_mutation(&m, 42, &MutationKind::ALL).unwrap()
    );
    for seed in 0..1000 {
        let mu = sample_mutation(&m, seed, &MutationKind::ALL).unwrap();
        let rec = MutantRecord::build("fsm16", &m, mu).unwrap();
        assert!(rec.distinguishable && !rec.witness.is_empty());
    }
}

#[test]
fn silent_machine_has_no_usable_mutant() {
    let mut m = model(XYFSM);
    m.outputs.clear();
    m.moore_outputs = vec![Bits::zero(0); m.states.len()];
    assert_eq!(
        sample_mutation(&m, 1, &MutationKind::ALL),
        Err(MutationError::NoDistinguishableMutant(MAX_RESAMPLES))
    );
}

#[test]
fn interface_mismatch_is_reported() {
    let a = model(XYFSM);
    let b = model(FSM16);
    assert_eq!(
        distinguishing_witness(&a, &b, 4, Observation::IoPairs),
        Err(MutationError::InterfaceMismatch)
    );
}

#[test]
fn record_json_lists_witness_bits() {
    let m = model(FSM16);
    let rec = MutantRecord::build("fsm16", &m, fsm16_retarget(&m)).unwrap();
    let v: Value = serde_json::from_str(&rec.to_json()).unwrap();
    assert_eq!(v["mutation"]["kind"], "RetargetTransition");
    assert_eq!(v["witness"].as_array().unwrap().len(), rec.witness.len());
}
