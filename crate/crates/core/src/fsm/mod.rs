//! Explicit finite-state machine models: extraction from RTL, graph queries,
//! and serialisation.

mod export;
mod extract;
mod guard;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::hdl::ResetPolarity;

pub use export::{model_to_module, render_rtl, ModelDocError};
pub use extract::{extract_fsm, ExtractError};
pub use guard::{minterms, Cube, Guard};

pub type StateId = usize;

/// Index of a transition in [`FsmModel::transitions`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransitionId(pub usize);

impl fmt::Display for TransitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signal {
    pub name: String,
    pub width: u32,
}

impl Signal {
    pub fn new(name: impl Into<String>, width: u32) -> Self {
        Signal {
            name: name.into(),
            width,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDef {
    pub id: StateId,
    pub label: String,
    pub encoding: Bits,
    /// Source line credited to the state in coverage reports.
    pub line: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub id: TransitionId,
    pub from: StateId,
    pub to: StateId,
    pub guard: Guard,
    /// Output vector produced while taking this transition (Mealy only).
    pub output: Option<Bits>,
    pub line: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Style {
    Moore,
    Mealy,
}

/// A machine with named, fixed-width inputs and outputs. The concatenated
/// input vector puts the first input in the most significant bits; outputs
/// are concatenated the same way.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FsmModel {
    pub name: String,
    pub clock: String,
    pub reset: String,
    pub reset_polarity: ResetPolarity,
    pub reset_async: bool,
    pub state_register: String,
    /// Every DUT port in declaration order, for positional bindings.
    pub port_order: Vec<String>,
    pub inputs: Vec<Signal>,
    pub outputs: Vec<Signal>,
    pub states: Vec<StateDef>,
    pub reset_state: StateId,
    pub transitions: Vec<Transition>,
    pub style: Style,
    /// Per-state output vectors (Moore only; empty for Mealy).
    pub moore_outputs: Vec<Bits>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("state ids are not 0..n in order")]
    StateIds,
    #[error("state encodings are not unique and of equal width")]
    Encodings,
    #[error("reset state {0} does not exist")]
    ResetState(StateId),
    #[error("transition {0} references a missing state")]
    Dangling(TransitionId),
    #[error("transition ids are not 0..n in order")]
    TransitionIds,
    #[error("transitions from state `{state}` are not exhaustive for input {input}")]
    NotExhaustive { state: String, input: String },
    #[error("transitions from state `{state}` overlap on input {input}")]
    Overlap { state: String, input: String },
    #[error("output vector widths do not match the declared outputs")]
    OutputWidth,
    #[error("input vector wider than 64 bits")]
    InputWidth,
}

impl FsmModel {
    pub fn input_width(&self) -> u32 {
        self.inputs.iter().map(|s| s.width).sum()
    }

    pub fn output_width(&self) -> u32 {
        self.outputs.iter().map(|s| s.width).sum()
    }

    pub fn state_by_label(&self, label: &str) -> Option<StateId> {
        self.states.iter().position(|s| s.label == label)
    }

    pub fn label(&self, state: StateId) -> &str {
        &self.states[state].label
    }

    /// "A->B" style name of a transition.
    pub fn transition_name(&self, id: TransitionId) -> String {
        let t = &self.transitions[id.0];
        format!("{}->{}", self.label(t.from), self.label(t.to))
    }

    pub fn transitions_from(&self, state: StateId) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(move |t| t.from == state)
    }

    pub fn find_transition(&self, from: StateId, to: StateId) -> Option<TransitionId> {
        self.transitions
            .iter()
            .find(|t| t.from == from && t.to == to)
            .map(|t| t.id)
    }

    /// The transition taken from `state` on `input`.
    pub fn fire(&self, state: StateId, input: Bits) -> Option<&Transition> {
        let mut default = None;
        for t in self.transitions_from(state) {
            match &t.guard {
                Guard::Default => default = Some(t),
                g if g.matches(input.value()) => return Some(t),
                _ => {}
            }
        }
        default
    }

    /// Observable output in `state` under `input`.
    pub fn output(&self, state: StateId, input: Bits) -> Bits {
        match self.style {
            Style::Moore => self.moore_outputs[state],
            Style::Mealy => self
                .fire(state, input)
                .and_then(|t| t.output)
                .unwrap_or(Bits::zero(self.output_width())),
        }
    }

    /// Splits a concatenated output vector into per-signal values.
    pub fn split_outputs(&self, v: Bits) -> Vec<(String, Bits)> {
        split(&self.outputs, v)
    }

    pub fn split_inputs(&self, v: Bits) -> Vec<(String, Bits)> {
        split(&self.inputs, v)
    }

    /// One name per output bit, most significant first: a 1-bit output keeps
    /// its name, wider outputs expand to `name[i]`.
    pub fn output_bit_names(&self) -> Vec<String> {
        self.outputs
            .iter()
            .flat_map(|s| {
                (0..s.width).rev().map(move |i| {
                    if s.width == 1 {
                        s.name.clone()
                    } else {
                        format!("{}[{i}]", s.name)
                    }
                })
            })
            .collect()
    }

    /// Position of a named output bit within the concatenated output vector.
    pub fn output_bit_index(&self, bit: &str) -> Option<u32> {
        let names = self.output_bit_names();
        let pos = names.iter().position(|n| n == bit)?;
        Some(names.len() as u32 - 1 - pos as u32)
    }

    /// Checks the structural invariants, including that every state's guards
    /// partition the input space (by enumeration up to 16 input bits, by a
    /// fixed random sample beyond).
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.states.iter().enumerate().any(|(i, s)| s.id != i) {
            return Err(ModelError::StateIds);
        }
        let w = self.states.first().map(|s| s.encoding.width()).unwrap_or(0);
        let mut encs = BTreeSet::new();
        for s in &self.states {
            if s.encoding.width() != w || !encs.insert(s.encoding.value()) {
                return Err(ModelError::Encodings);
            }
        }
        if self.reset_state >= self.states.len() {
            return Err(ModelError::ResetState(self.reset_state));
        }
        if self.input_width() > 64 {
            return Err(ModelError::InputWidth);
        }
        for (i, t) in self.transitions.iter().enumerate() {
            if t.id.0 != i {
                return Err(ModelError::TransitionIds);
            }
            if t.from >= self.states.len() || t.to >= self.states.len() {
                return Err(ModelError::Dangling(t.id));
            }
        }
        let ow = self.output_width();
        match self.style {
            Style::Moore => {
                if self.moore_outputs.len() != self.states.len() || self.moore_outputs.iter().any(|o| o.width() != ow) {
                    return Err(ModelError::OutputWidth);
                }
            }
            Style::Mealy => {
                if self.transitions.iter().any(|t| t.output.map(|o| o.width()) != Some(ow)) {
                    return Err(ModelError::OutputWidth);
                }
            }
        }
        let iw = self.input_width();
        for s in 0..self.states.len() {
            for v in input_space(iw) {
                let mut hits = 0;
                let mut has_default = false;
                for t in self.transitions_from(s) {
                    match &t.guard {
                        Guard::Default => has_default = true,
                        g => hits += g.matches(v) as usize,
                    }
                }
                let text = Bits::new(v, iw).to_binary();
                if hits > 1 {
                    return Err(ModelError::Overlap {
                        state: self.label(s).to_string(),
                        input: text,
                    });
                }
                if hits == 0 && !has_default {
                    return Err(ModelError::NotExhaustive {
                        state: self.label(s).to_string(),
                        input: text,
                    });
                }
            }
        }
        Ok(())
    }

    /// Smallest input vector firing `id`.
    pub fn witness_input(&self, id: TransitionId) -> Option<Bits> {
        let t = &self.transitions[id.0];
        let iw = self.input_width();
        let v = match &t.guard {
            Guard::AnyOf(cubes) => cubes.iter().map(|c| c.value).min()?,
            Guard::Default => input_space(iw).find(|v| {
                self.fire(t.from, Bits::new(*v, iw))
                    .map(|f| f.id == id)
                    .unwrap_or(false)
            })?,
        };
        Some(Bits::new(v, iw))
    }
}

fn split(signals: &[Signal], v: Bits) -> Vec<(String, Bits)> {
    let mut offset: u32 = signals.iter().map(|s| s.width).sum();
    signals
        .iter()
        .map(|s| {
            offset -= s.width;
            (s.name.clone(), v.slice(offset, s.width))
        })
        .collect()
}

/// All input values for widths up to 16 bits; a fixed pseudo-random sample
/// (always including 0 and all-ones) for wider inputs.
pub fn input_space(width: u32) -> Box<dyn Iterator<Item = u64>> {
    if width <= 16 {
        Box::new(0..(1u64 << width))
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let m = crate::bits::mask(width);
        let mut sample = vec![0, m];
        sample.extend((0..4096).map(|_| rng.gen::<u64>() & m));
        Box::new(sample.into_iter())
    }
}

/// Transitions in report order: source id, then target id, then guard text.
pub fn enumerate_transitions(m: &FsmModel) -> Vec<TransitionId> {
    let mut ids: Vec<&Transition> = m.transitions.iter().collect();
    ids.sort_by(|a, b| {
        (a.from, a.to)
            .cmp(&(b.from, b.to))
            .then_with(|| a.guard.text(&m.inputs).cmp(&b.guard.text(&m.inputs)))
    });
    ids.into_iter().map(|t| t.id).collect()
}

/// States reachable from the reset state.
pub fn reachable_states(m: &FsmModel) -> BTreeSet<StateId> {
    let mut seen = BTreeSet::from([m.reset_state]);
    let mut queue = VecDeque::from([m.reset_state]);
    while let Some(s) = queue.pop_front() {
        for t in m.transitions_from(s) {
            if seen.insert(t.to) {
                queue.push_back(t.to);
            }
        }
    }
    seen
}

/// Transitions whose source state is reachable from reset.
pub fn reachable_transitions(m: &FsmModel) -> BTreeSet<TransitionId> {
    let states = reachable_states(m);
    m.transitions
        .iter()
        .filter(|t| states.contains(&t.from))
        .map(|t| t.id)
        .collect()
}

/// Breadth-first predecessor map from `from`: for each reached state, the
/// transition used to enter it first.
fn bfs_tree(m: &FsmModel, from: StateId) -> Vec<Option<TransitionId>> {
    let n = m.states.len();
    let mut via: Vec<Option<TransitionId>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(s) = queue.pop_front() {
        for t in m.transitions_from(s) {
            if !seen[t.to] {
                seen[t.to] = true;
                via[t.to] = Some(t.id);
                queue.push_back(t.to);
            }
        }
    }
    via[from] = None;
    via
}

/// Shortest transition walk from `from` to `to` (empty when equal).
pub fn shortest_state_path(m: &FsmModel, from: StateId, to: StateId) -> Option<Vec<TransitionId>> {
    if from == to {
        return Some(Vec::new());
    }
    let via = bfs_tree(m, from);
    let mut path = Vec::new();
    let mut cur = to;
    while cur != from {
        let t = via[cur]?;
        path.push(t);
        cur = m.transitions[t.0].from;
    }
    path.reverse();
    Some(path)
}

/// Shortest input sequence that drives the machine from `from` to the source
/// of `target` and then fires it. `None` when the source is unreachable.
pub fn shortest_input_path(m: &FsmModel, from: StateId, target: TransitionId) -> Option<Vec<Bits>> {
    let t = m.transitions.get(target.0)?;
    let walk = shortest_state_path(m, from, t.from)?;
    walk.iter()
        .chain(std::iter::once(&target))
        .map(|id| m.witness_input(*id))
        .collect()
}
