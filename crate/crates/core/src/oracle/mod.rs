//! Deterministic stand-in for the language model. Testbench requests are
//! answered by graph search over the extracted machine; mismatch questions
//! are answered by replaying a golden model.

mod backend;

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::fsm::{reachable_transitions, shortest_input_path, FsmModel, StateId, TransitionId};
use crate::sim::{Trace, TraceRecord};

pub use backend::{parse_verdict, OracleBackend, ReportedVerdict};

pub const DEFAULT_SEGMENT_BUDGET: usize = 64;

/// Half a clock period in the emitted testbenches.
const HALF_PERIOD: u64 = 5;
/// Bits per `apply_input_sequence` call for single-input machines.
const SEQUENCE_BITS: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// The segment starts from the reset state.
    pub reset: bool,
    pub vectors: Vec<Bits>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoveragePlan {
    pub segments: Vec<Segment>,
    pub targeted: BTreeSet<TransitionId>,
}

impl CoveragePlan {
    pub fn is_empty(&self) -> bool {
        self.segments.iter().all(|s| s.vectors.is_empty())
    }

    pub fn vector_count(&self) -> usize {
        self.segments.iter().map(|s| s.vectors.len()).sum()
    }

    pub fn vectors(&self) -> impl Iterator<Item = Bits> + '_ {
        self.segments.iter().flat_map(|s| s.vectors.iter().copied())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("transition {0} is not reachable from reset")]
    UnreachableTarget(String),
    #[error("output bit `{0}` does not exist")]
    UnknownOutputBit(String),
}

/// BFS distance from `from` to every state.
fn distances(m: &FsmModel, from: StateId) -> Vec<Option<usize>> {
    let mut dist = vec![None; m.states.len()];
    dist[from] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(s) = queue.pop_front() {
        let d = dist[s].unwrap_or(0);
        for t in m.transitions_from(s) {
            if dist[t.to].is_none() {
                dist[t.to] = Some(d + 1);
                queue.push_back(t.to);
            }
        }
    }
    dist
}

/// Greedy covering walk. From the current state the nearest remaining target
/// is fired next (lowest id on ties); a new reset segment starts when nothing
/// remaining is reachable or the walk would exceed `segment_budget` vectors.
pub fn plan_coverage(
    m: &FsmModel,
    uncovered: &BTreeSet<TransitionId>,
    segment_budget: usize,
) -> Result<CoveragePlan, OracleError> {
    let reachable = reachable_transitions(m);
    if let Some(bad) = uncovered.iter().find(|id| !reachable.contains(id)) {
        return Err(OracleError::UnreachableTarget(m.transition_name(*bad)));
    }
    let mut remaining = uncovered.clone();
    let mut segments = Vec::new();
    let mut current: Option<Segment> = None;
    let mut state = m.reset_state;

    while !remaining.is_empty() {
        let seg = current.get_or_insert_with(|| {
            state = m.reset_state;
            Segment {
                reset: true,
                vectors: Vec::new(),
            }
        });
        let dist = distances(m, state);
        let nearest = remaining
            .iter()
            .filter_map(|id| dist[m.transitions[id.0].from].map(|d| (d, *id)))
            .min();
        let path = nearest.and_then(|(_, id)| shortest_input_path(m, state, id));
        let path = match path {
            Some(p) if seg.vectors.is_empty() || seg.vectors.len() + p.len() <= segment_budget.max(1) => p,
            _ if seg.vectors.is_empty() => {
                let id = *remaining.iter().next().expect("non-empty");
                return Err(OracleError::UnreachableTarget(m.transition_name(id)));
            }
            _ => {
                segments.extend(current.take());
                continue;
            }
        };
        for v in path {
            let t = m.fire(state, v).expect("validated model has no guard holes");
            remaining.remove(&t.id);
            state = t.to;
            seg.vectors.push(v);
        }
    }
    segments.extend(current);
    Ok(CoveragePlan {
        segments,
        targeted: uncovered.clone(),
    })
}

fn width_decl(w: u32) -> String {
    if w == 1 {
        String::new()
    } else {
        format!("[{}:0] ", w - 1)
    }
}

/// Renders a plan as a testbench in the constrained dialect. Every segment
/// ends with one idle cycle so its last transition is observed before the
/// next reset or the finish.
pub fn emit_testbench(m: &FsmModel, plan: &CoveragePlan) -> String {
    let iw = m.input_width();
    let step = 2 * HALF_PERIOD;
    let asserted = m.reset_polarity.asserted_level();
    let released = 1 - asserted;
    let mut s = String::new();

    s.push_str("module tb();\n");
    let _ = writeln!(s, "  reg {};", m.clock);
    let _ = writeln!(s, "  reg {};", m.reset);
    for i in &m.inputs {
        let _ = writeln!(s, "  reg {}{};", width_decl(i.width), i.name);
    }
    for o in &m.outputs {
        let _ = writeln!(s, "  wire {}{};", width_decl(o.width), o.name);
    }
    let binds: Vec<String> = std::iter::once(&m.clock)
        .chain(std::iter::once(&m.reset))
        .chain(m.inputs.iter().map(|i| &i.name))
        .chain(m.outputs.iter().map(|o| &o.name))
        .map(|n| format!(".{n}({n})"))
        .collect();
    let _ = writeln!(s, "\n  {} dut({});\n", m.name, binds.join(", "));
    let _ = writeln!(s, "  always #{HALF_PERIOD} {0} = ~{0};\n", m.clock);

    s.push_str("  initial begin\n");
    let _ = writeln!(s, "    $fsdbDumpfile(\"{}.fsdb\");", m.name);
    s.push_str("    $fsdbDumpvars;\n");
    let _ = writeln!(s, "    {} = 0;", m.clock);
    let _ = writeln!(s, "    {} = {asserted};", m.reset);
    for i in &m.inputs {
        let _ = writeln!(s, "    {} = 0;", i.name);
    }
    let _ = writeln!(s, "    #{step} {} = {released};", m.reset);

    let mut uses_sequence = false;
    let mut first = true;
    for seg in plan.segments.iter().filter(|g| !g.vectors.is_empty()) {
        if seg.reset && !first {
            let _ = writeln!(s, "    {} = {asserted};", m.reset);
            let _ = writeln!(s, "    #{step} {} = {released};", m.reset);
        }
        first = false;
        let mut rest: &[Bits] = &seg.vectors;
        while !rest.is_empty() {
            if iw == 1 && rest.len() >= SEQUENCE_BITS {
                let bits: String = rest[..SEQUENCE_BITS].iter().map(|b| b.to_binary()).collect();
                let _ = writeln!(s, "    apply_input_sequence({SEQUENCE_BITS}'b{bits});");
                uses_sequence = true;
                rest = &rest[SEQUENCE_BITS..];
            } else {
                let _ = writeln!(s, "    apply_input({});", rest[0].to_verilog());
                rest = &rest[1..];
            }
        }
        let _ = writeln!(s, "    #{step};");
    }
    s.push_str("    $finish;\n  end\n");

    if iw > 0 {
        let _ = writeln!(s, "\n  task apply_input(input {}stim);", width_decl(iw));
        s.push_str("    begin\n");
        let mut offset = iw;
        for i in &m.inputs {
            offset -= i.width;
            let slice = match (iw, i.width) {
                (1, _) => "stim".to_string(),
                (_, 1) => format!("stim[{offset}]"),
                (_, w) => format!("stim[{}:{offset}]", offset + w - 1),
            };
            let _ = writeln!(s, "      {} = {slice};", i.name);
        }
        let _ = writeln!(s, "      #{step};");
        s.push_str("    end\n  endtask\n");
    }
    if uses_sequence {
        let _ = writeln!(
            s,
            "\n  task apply_input_sequence(input [{}:0] stim_seq);",
            SEQUENCE_BITS - 1
        );
        s.push_str("    integer k;\n");
        let _ = writeln!(s, "    for (k = {}; k >= 0; k = k - 1)", SEQUENCE_BITS - 1);
        s.push_str("      apply_input(stim_seq[k]);\n  endtask\n");
    }
    s.push_str("endmodule\n");
    s
}

/// Shortest input sequence after which `a` and `b` produce different
/// outputs on `m`, the differing cycle being the last vector.
pub fn separating_sequence(m: &FsmModel, a: StateId, b: StateId, horizon: usize) -> Option<Vec<Bits>> {
    let iw = m.input_width();
    let mut seen = BTreeSet::from([(a, b)]);
    let mut layer = vec![((a, b), Vec::<Bits>::new())];
    for _ in 0..horizon {
        let mut next = Vec::new();
        for ((x, y), path) in &layer {
            for v in crate::fsm::input_space(iw) {
                let v = Bits::new(v, iw);
                let mut p = path.clone();
                p.push(v);
                if m.output(*x, v) != m.output(*y, v) {
                    return Some(p);
                }
                let nx = m.fire(*x, v).map(|t| t.to).unwrap_or(*x);
                let ny = m.fire(*y, v).map(|t| t.to).unwrap_or(*y);
                if nx != ny && seen.insert((nx, ny)) {
                    next.push(((nx, ny), p));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        layer = next;
    }
    None
}

/// Extra stimulus that makes wrong successor states visible on the outputs:
/// for every reachable transition, a reset segment that fires it and then
/// separates its target from each other state.
pub fn observation_plan(m: &FsmModel) -> CoveragePlan {
    let horizon = 2 * m.states.len();
    let mut segments: Vec<Segment> = Vec::new();
    let mut seen = BTreeSet::new();
    let reachable = reachable_transitions(m);
    for id in &reachable {
        let Some(prefix) = shortest_input_path(m, m.reset_state, *id) else {
            continue;
        };
        let to = m.transitions[id.0].to;
        for other in (0..m.states.len()).filter(|s| *s != to) {
            if let Some(tail) = separating_sequence(m, to, other, horizon) {
                let vectors: Vec<Bits> = prefix.iter().chain(&tail).copied().collect();
                if seen.insert(vectors.clone()) {
                    segments.push(Segment { reset: true, vectors });
                }
            }
        }
    }
    CoveragePlan {
        segments,
        targeted: reachable,
    }
}

/// Runs a plan directly at vector level: one reset record before each reset
/// segment, then one record per vector.
pub fn simulate_plan(m: &FsmModel, plan: &CoveragePlan) -> Trace {
    let mut trace = crate::sim::simulate_vectors(m, &[]);
    trace.records.clear();
    let zero = Bits::zero(m.input_width());
    let mut state = m.reset_state;
    let mut cycle = 0;
    for (i, seg) in plan.segments.iter().enumerate() {
        if seg.reset || i == 0 {
            state = m.reset_state;
            trace.records.push(TraceRecord {
                cycle,
                reset_active: true,
                inputs: zero,
                state,
                outputs: m.output(state, zero),
            });
            cycle += 1;
        }
        for v in &seg.vectors {
            trace.records.push(TraceRecord {
                cycle,
                reset_active: false,
                inputs: *v,
                state,
                outputs: m.output(state, *v),
            });
            state = m.fire(state, *v).map(|t| t.to).unwrap_or(state);
            cycle += 1;
        }
    }
    trace
}

/// Joins traces of the same machine end to end, renumbering cycles.
pub fn concat_traces(traces: Vec<Trace>) -> Option<Trace> {
    let mut iter = traces.into_iter();
    let mut out = iter.next()?;
    for t in iter {
        let base = out.records.len() as u64;
        out.finished &= t.finished;
        out.records.extend(t.records.into_iter().map(|r| TraceRecord {
            cycle: base + r.cycle,
            ..r
        }));
    }
    for (i, r) in out.records.iter_mut().enumerate() {
        r.cycle = i as u64;
    }
    Some(out)
}

/// What the checker may look at in each cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observation {
    /// State register value and outputs.
    StateRegs,
    /// Outputs only.
    IoPairs,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MismatchVerdict {
    pub found: bool,
    pub cycle: Option<u64>,
    pub expected: String,
    pub observed: String,
    pub narrative: String,
}

impl MismatchVerdict {
    pub fn pass(cycles: usize) -> Self {
        MismatchVerdict {
            found: false,
            cycle: None,
            expected: String::new(),
            observed: String::new(),
            narrative: format!("All {cycles} cycles agree with the design specification."),
        }
    }

    fn mismatch(cycle: u64, what: &str, expected: String, observed: String) -> Self {
        let narrative = format!(
            "At cycle {cycle} the design specification expects {what} {expected} but the trace shows {observed}."
        );
        MismatchVerdict {
            found: true,
            cycle: Some(cycle),
            expected,
            observed,
            narrative,
        }
    }
}

fn label_of(m: &FsmModel, s: StateId) -> String {
    m.states
        .get(s)
        .map(|d| d.label.clone())
        .unwrap_or_else(|| "<unknown>".into())
}

/// Checks one window of records against `golden`, starting from the carried
/// golden state. Records use the golden state numbering. Cycles sampled in
/// reset only reset the carry. Returns the first divergence and the golden
/// state to carry into the next window.
pub fn check_chunk(
    golden: &FsmModel,
    carried: StateId,
    chunk: &[TraceRecord],
    mode: Observation,
) -> (MismatchVerdict, StateId) {
    let mut state = carried;
    let mut active = 0;
    for r in chunk {
        if r.reset_active {
            state = golden.reset_state;
            continue;
        }
        active += 1;
        if mode == Observation::StateRegs && r.state != state {
            let v = MismatchVerdict::mismatch(r.cycle, "state", label_of(golden, state), label_of(golden, r.state));
            return (v, state);
        }
        let expected = golden.output(state, r.inputs);
        if expected != r.outputs {
            let v = MismatchVerdict::mismatch(r.cycle, "output", expected.to_binary(), r.outputs.to_binary());
            return (v, state);
        }
        state = golden.fire(state, r.inputs).map(|t| t.to).unwrap_or(state);
    }
    (MismatchVerdict::pass(active), state)
}

/// Trace records renumbered into the golden model's state ids by label.
/// Unknown labels map past the golden's last state.
pub fn align_records(golden: &FsmModel, trace: &Trace) -> Vec<TraceRecord> {
    let map: Vec<StateId> = trace
        .state_labels
        .iter()
        .map(|l| golden.state_by_label(l).unwrap_or(golden.states.len()))
        .collect();
    trace
        .records
        .iter()
        .map(|r| TraceRecord {
            state: map.get(r.state).copied().unwrap_or(golden.states.len()),
            ..r.clone()
        })
        .collect()
}

pub fn check_trace(golden: &FsmModel, trace: &Trace, mode: Observation) -> MismatchVerdict {
    check_chunk(golden, golden.reset_state, &align_records(golden, trace), mode).0
}

/// Folds [`check_chunk`] over windows of `chunk_size` records.
pub fn check_chunked(golden: &FsmModel, trace: &Trace, mode: Observation, chunk_size: usize) -> MismatchVerdict {
    let records = align_records(golden, trace);
    let mut carry = golden.reset_state;
    let mut active = 0;
    for chunk in records.chunks(chunk_size.max(1)) {
        let (v, next) = check_chunk(golden, carry, chunk, mode);
        if v.found {
            return v;
        }
        active += chunk.iter().filter(|r| !r.reset_active).count();
        carry = next;
    }
    MismatchVerdict::pass(active)
}

/// Outputs-only check restricted to one output bit.
pub fn check_bitwise(golden: &FsmModel, trace: &Trace, bit: &str) -> Result<MismatchVerdict, OracleError> {
    let index = golden
        .output_bit_index(bit)
        .ok_or_else(|| OracleError::UnknownOutputBit(bit.to_string()))?;
    let mut state = golden.reset_state;
    let mut active = 0;
    for r in &trace.records {
        if r.reset_active {
            state = golden.reset_state;
            continue;
        }
        active += 1;
        let expected = golden.output(state, r.inputs).bit(index);
        let observed = r.outputs.bit(index);
        if expected != observed {
            return Ok(MismatchVerdict::mismatch(
                r.cycle,
                bit,
                (expected as u8).to_string(),
                (observed as u8).to_string(),
            ));
        }
        state = golden.fire(state, r.inputs).map(|t| t.to).unwrap_or(state);
    }
    Ok(MismatchVerdict::pass(active))
}

/// Input vectors applied outside reset up to and including `cycle`.
pub fn patterns_to_detection(trace: &Trace, cycle: u64) -> usize {
    trace
        .records
        .iter()
        .take_while(|r| r.cycle <= cycle)
        .filter(|r| !r.reset_active)
        .count()
}

#[cfg(test)]
mod tests;
