use super::*;
use crate::fsm::{model_to_module, reachable_states, reachable_transitions};

fn shipped() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

#[test]
fn standard_split_is_exact() {
    let c = generate_corpus(100, 11, &CorpusProfile::standard()).unwrap();
    assert_eq!(c.manifest.level_counts(), [45, 29, 26]);
    assert_eq!(c.items.len(), 100);
}

#[test]
fn minimal_profile_gives_two_state_machine() {
    let c = generate_corpus(1, 3, &CorpusProfile::minimal()).unwrap();
    let e = &c.manifest.entries[0];
    assert_eq!((e.inputs, e.outputs, e.states), (1, 1, 2));
}

#[test]
fn generation_is_seeded() {
    let p = CorpusProfile::standard();
    let a = generate_corpus(30, 5, &p).unwrap();
    let b = generate_corpus(30, 5, &p).unwrap();
    assert_eq!(a.manifest.to_json(), b.manifest.to_json());
    assert!(a.items.iter().zip(&b.items).all(|(x, y)| x.rtl_text == y.rtl_text));
    let c = generate_corpus(30, 6, &p).unwrap();
    assert_ne!(a.manifest.to_json(), c.manifest.to_json());
}

#[test]
fn generated_machines_are_valid_and_reachable() {
    let c = generate_corpus(60, 9, &CorpusProfile::standard()).unwrap();
    for item in &c.items {
        let m = &item.model;
        assert_eq!(m.validate(), Ok(()), "{}", item.entry.id);
        assert_eq!(reachable_states(m).len(), m.states.len(), "{}", item.entry.id);
        assert_eq!(reachable_transitions(m).len(), m.transitions.len(), "{}", item.entry.id);
        let again = extract_fsm(&model_to_module(m).unwrap()).unwrap();
        assert_eq!(&again, m, "{}", item.entry.id);
    }
}

#[test]
fn written_corpus_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let c = generate_corpus(8, 1, &CorpusProfile::standard()).unwrap();
    c.write(dir.path()).unwrap();
    let back = load_corpus(dir.path()).unwrap();
    assert_eq!(back.manifest, c.manifest);
    assert_eq!(back.items.len(), 8);
}

#[test]
fn missing_file_and_drift_are_both_reported() {
    let dir = tempfile::tempdir().unwrap();
    let c = generate_corpus(3, 2, &CorpusProfile::standard()).unwrap();
    c.write(dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("rtl/gen001.v")).unwrap();
    let mut manifest = c.manifest.clone();
    manifest.entries[1].states += 1;
    std::fs::write(dir.path().join("manifest.json"), manifest.to_json()).unwrap();
    let err = load_corpus(dir.path()).unwrap_err();
    assert_eq!(err.problems.len(), 2, "{err}");
    assert!(err.problems[0].contains("gen001.v"));
    assert!(err.problems[1].starts_with("gen002:") && err.problems[1].contains("states"));
}

#[test]
fn shipped_corpus_loads_clean() {
    let c = load_corpus(&shipped()).unwrap();
    assert!(c.items.len() >= 10);
    let fsm16 = c.get("fsm16").unwrap();
    assert_eq!(fsm16.model.states.len(), 6);
    assert_eq!(fsm16.model.transitions.len(), 12);
    let mu = fsm16.entry.mutation.unwrap();
    assert_eq!(Some(mu), Mutation::retarget(&fsm16.model, "B", "C", "B"));
    assert!(c.get("xyfsm").is_some());
    assert!(c.manifest.notes.iter().any(|n| n.contains("FSM16")));
}

#[test]
fn spec_mentions_every_state() {
    let c = generate_corpus(2, 4, &CorpusProfile::standard()).unwrap();
    for item in &c.items {
        for s in &item.model.states {
            assert!(
                item.spec_text.contains(&format!("In state {}", s.label))
                    || item.spec_text.contains(&format!("From {} ", s.label))
            );
        }
    }
}

#[test]
fn imported_pairs_need_a_description() {
    let dir = tempfile::tempdir().unwrap();
    let src = shipped();
    for id in ["fsm16", "parity"] {
        std::fs::copy(src.join(format!("rtl/{id}.v")), dir.path().join(format!("{id}.v"))).unwrap();
    }
    std::fs::copy(src.join("spec/fsm16.txt"), dir.path().join("fsm16.txt")).unwrap();
    let err = import_pairs(dir.path()).unwrap_err();
    assert_eq!(err.problems.len(), 1);
    assert!(err.problems[0].starts_with("parity:"));

    std::fs::write(dir.path().join("parity.txt"), "Odd parity of din.").unwrap();
    let items = import_pairs(dir.path()).unwrap();
    let ids: Vec<_> = items.iter().map(|i| i.entry.id.as_str()).collect();
    assert_eq!(ids, ["fsm16", "parity"]);
    assert_eq!(items[0].model.states.len(), 6);
}
