use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;

use super::{emit_testbench, plan_coverage, MismatchVerdict, DEFAULT_SEGMENT_BUDGET};
use crate::bits::Bits;
use crate::fsm::{extract_fsm, reachable_transitions, FsmModel, StateId, TransitionId};
use crate::hdl::{parse_module, tokenize};
use crate::llm::{
    rtl_from_system_prompt, uncovered_from_feedback, Backend, BackendConfig, LlmError, PromptTranscript, Role,
    BITWISE_PROMPT, COVERAGE_FEEDBACK_HEAD, SPEC_MARKER, TRACE_SPEC_HEAD,
};

const CHUNK_PREFIX: &str = "This is the input-output pair for the ";

/// Answers testbench requests from the RTL in the system message and
/// detection questions from an attached golden model.
pub struct OracleBackend {
    seed: u64,
    batch: Option<usize>,
    segment_budget: usize,
    golden: Option<FsmModel>,
    cache: Timeline,
}

/// Golden states per cycle, folded from every data prompt seen so far. Kept
/// between calls so each answer only scans the newly appended messages.
#[derive(Default)]
struct Timeline {
    system: String,
    scanned: usize,
    inputs: BTreeMap<u64, (bool, Bits)>,
    expected: BTreeMap<u64, StateId>,
    /// Golden state after the last folded cycle.
    next: Option<StateId>,
}

impl Timeline {
    fn update(&mut self, t: &PromptTranscript, golden: &FsmModel) {
        let system = t.entries.first().map(|e| e.content.as_str()).unwrap_or("");
        if self.system != system || self.scanned > t.entries.len() {
            *self = Timeline {
                system: system.to_string(),
                ..Timeline::default()
            };
        }
        let mut fresh = Vec::new();
        for e in &t.entries[self.scanned..] {
            if e.role != Role::User || !is_data_prompt(&e.content) {
                continue;
            }
            for line in crate::llm::data_lines(&e.content) {
                if let Some(d) = parse_data_line(line) {
                    if let std::collections::btree_map::Entry::Vacant(e) = self.inputs.entry(d.cycle) {
                        e.insert((d.reset, d.input));
                        fresh.push(d.cycle);
                    }
                }
            }
        }
        self.scanned = t.entries.len();
        let last = self.expected.keys().next_back().copied();
        let in_order =
            fresh.windows(2).all(|w| w[0] < w[1]) && fresh.first().is_none_or(|c| last.is_none_or(|l| *c > l));
        let (start, cycles) = if in_order {
            (self.next.unwrap_or(golden.reset_state), fresh)
        } else {
            self.expected.clear();
            (golden.reset_state, self.inputs.keys().copied().collect())
        };
        let mut state = start;
        for cycle in cycles {
            let (reset, input) = self.inputs[&cycle];
            if reset {
                state = golden.reset_state;
            }
            self.expected.insert(cycle, state);
            if !reset {
                state = golden.fire(state, input).map(|tr| tr.to).unwrap_or(state);
            }
        }
        self.next = Some(state);
    }
}

impl OracleBackend {
    pub fn new(cfg: &BackendConfig) -> Self {
        OracleBackend {
            seed: cfg.seed,
            batch: cfg.oracle_batch.filter(|b| *b > 0),
            segment_budget: DEFAULT_SEGMENT_BUDGET,
            golden: None,
            cache: Timeline::default(),
        }
    }

    pub fn with_golden(mut self, golden: FsmModel) -> Self {
        self.golden = Some(golden);
        self
    }

    pub fn with_segment_budget(mut self, budget: usize) -> Self {
        self.segment_budget = budget.max(1);
        self
    }

    fn model_from_system(&self, system: &str) -> Result<FsmModel, LlmError> {
        let unsupported = |why: String| LlmError::OracleUnsupportedPrompt(why);
        let rtl = rtl_from_system_prompt(system).ok_or_else(|| unsupported("system message carries no RTL".into()))?;
        let rtl = match rtl.find(&format!("\n{SPEC_MARKER}\n")) {
            Some(i) => &rtl[..i],
            None => rtl,
        };
        let tokens = tokenize(rtl).map_err(|e| unsupported(format!("RTL does not tokenize: {e}")))?;
        let module = parse_module(&tokens).map_err(|e| unsupported(format!("RTL does not parse: {e}")))?;
        extract_fsm(&module).map_err(|e| unsupported(format!("no state machine: {e}")))
    }

    fn testbench(&self, t: &PromptTranscript, m: &FsmModel) -> Result<String, LlmError> {
        let reachable = reachable_transitions(m);
        let feedback = t
            .entries
            .iter()
            .rev()
            .find(|e| e.role == Role::User && e.content.starts_with(COVERAGE_FEEDBACK_HEAD));
        let mut targets: BTreeSet<TransitionId> = match feedback {
            Some(e) => uncovered_from_feedback(&e.content)
                .iter()
                .filter_map(|line| transition_from_line(m, line))
                .collect(),
            None => m.transitions.iter().map(|t| t.id).collect(),
        };
        targets.retain(|id| reachable.contains(id));
        if let Some(k) = self.batch {
            targets = targets.into_iter().take(k).collect();
        }
        let plan = plan_coverage(m, &targets, self.segment_budget)
            .map_err(|e| LlmError::OracleUnsupportedPrompt(e.to_string()))?;
        let tb = emit_testbench(m, &plan);
        Ok(format!(
            "The testbench below drives {} input pattern(s) aimed at {} transition(s).\n```verilog\n{tb}```\n",
            plan.vector_count(),
            plan.targeted.len()
        ))
    }

    fn detection(&mut self, t: &PromptTranscript, last: &str) -> Result<String, LlmError> {
        let golden = self
            .golden
            .as_ref()
            .ok_or_else(|| LlmError::OracleUnsupportedPrompt("mismatch questions need a golden model".into()))?;
        if last.starts_with(TRACE_SPEC_HEAD) {
            return Ok(render(&check_state_sequence(golden, last)));
        }
        self.cache.update(t, golden);
        let expected_state = &self.cache.expected;
        let mut active = 0;
        for line in crate::llm::data_lines(last) {
            let Some(d) = parse_data_line(line) else { continue };
            if d.reset {
                continue;
            }
            active += 1;
            let s = expected_state[&d.cycle];
            if let Some(obs) = &d.state {
                if obs != golden.label(s) {
                    return Ok(render(&MismatchVerdict::mismatch(
                        d.cycle,
                        "state",
                        golden.label(s).into(),
                        obs.clone(),
                    )));
                }
            }
            let out = golden.output(s, d.input);
            for (name, value) in &d.fields {
                let exp = if name == "output" {
                    out.to_binary()
                } else {
                    match golden.output_bit_index(name) {
                        Some(i) => (out.bit(i) as u8).to_string(),
                        None => continue,
                    }
                };
                if *value != exp {
                    let what = if name == "output" { "output" } else { name.as_str() };
                    return Ok(render(&MismatchVerdict::mismatch(d.cycle, what, exp, value.clone())));
                }
            }
        }
        Ok(render(&MismatchVerdict::pass(active)))
    }
}

fn is_data_prompt(content: &str) -> bool {
    content.starts_with(CHUNK_PREFIX) || content.starts_with(BITWISE_PROMPT)
}

/// Transition named by a "Transition from X to Y" line.
fn transition_from_line(m: &FsmModel, line: &str) -> Option<TransitionId> {
    let rest = line.strip_prefix("Transition from ")?;
    let (from, to) = rest.split_once(" to ")?;
    m.find_transition(m.state_by_label(from.trim())?, m.state_by_label(to.trim())?)
}

struct DataLine {
    cycle: u64,
    reset: bool,
    input: Bits,
    state: Option<String>,
    /// Remaining `name=value` pairs: `output` or a single output bit.
    fields: Vec<(String, String)>,
}

fn parse_data_line(line: &str) -> Option<DataLine> {
    let (head, rest) = line.trim().split_once(':')?;
    let cycle = head.strip_prefix("cycle ")?.trim().parse().ok()?;
    let mut d = DataLine {
        cycle,
        reset: false,
        input: Bits::zero(0),
        state: None,
        fields: Vec::new(),
    };
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            None if tok == "reset" => d.reset = true,
            None => {}
            Some(("input", v)) => d.input = Bits::parse_binary(v).unwrap_or(Bits::zero(0)),
            Some(("state", v)) => d.state = Some(v.to_string()),
            Some((k, v)) => d.fields.push((k.to_string(), v.to_string())),
        }
    }
    Some(d)
}

/// Checks that consecutive states of a quoted state sequence are joined by a
/// declared transition (or a return to the reset state).
fn check_state_sequence(golden: &FsmModel, prompt: &str) -> MismatchVerdict {
    let seq: Vec<&str> = prompt
        .split('"')
        .nth(1)
        .map(|s| s.split_whitespace().collect())
        .unwrap_or_default();
    for (i, pair) in seq.windows(2).enumerate() {
        let cycle = i as u64 + 1;
        let Some(from) = golden.state_by_label(pair[0]) else {
            return MismatchVerdict::mismatch(i as u64, "state", "a declared state".into(), pair[0].into());
        };
        let to = golden.state_by_label(pair[1]);
        let ok = to.is_some_and(|to| to == golden.reset_state || golden.find_transition(from, to).is_some());
        if !ok {
            let succ: Vec<&str> = golden.transitions_from(from).map(|t| golden.label(t.to)).collect();
            return MismatchVerdict::mismatch(cycle, "state", succ.join("|"), pair[1].into());
        }
    }
    MismatchVerdict::pass(seq.len())
}

fn render(v: &MismatchVerdict) -> String {
    match v.cycle {
        Some(c) if v.found => format!(
            "MISMATCH cycle={c} expected={} observed={}\n{}\n",
            v.expected, v.observed, v.narrative
        ),
        _ => format!("NO MISMATCH\n{}\n", v.narrative),
    }
}

/// What an answer claims about a trace window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReportedVerdict {
    Mismatch { cycle: Option<u64> },
    NoMismatch,
    Unclear,
}

/// Reads a verdict from free text. The structured `MISMATCH cycle=N` line is
/// preferred; otherwise a "mismatch" or "inconsistent" mention with a nearby
/// cycle number counts.
pub fn parse_verdict(answer: &str) -> ReportedVerdict {
    let lower = answer.to_ascii_lowercase();
    let structured = Regex::new(r"(?m)^\s*mismatch\s+cycle\s*=\s*(\d+)").expect("static regex");
    if let Some(c) = structured.captures(&lower) {
        return ReportedVerdict::Mismatch {
            cycle: c[1].parse().ok(),
        };
    }
    if lower.contains("no mismatch") || lower.contains("no inconsistenc") {
        return ReportedVerdict::NoMismatch;
    }
    if lower.contains("mismatch") || lower.contains("inconsistent") {
        let cycle = Regex::new(r"cycle\s*(\d+)").expect("static regex");
        return ReportedVerdict::Mismatch {
            cycle: cycle.captures(&lower).and_then(|c| c[1].parse().ok()),
        };
    }
    ReportedVerdict::Unclear
}

impl Backend for OracleBackend {
    fn id(&self) -> String {
        format!("oracle:{}", self.seed)
    }

    fn needs_spec(&self) -> bool {
        false
    }

    fn complete(&mut self, t: &PromptTranscript) -> Result<String, LlmError> {
        let system = t
            .entries
            .first()
            .filter(|e| e.role == Role::System)
            .ok_or_else(|| LlmError::Transcript("missing system message".into()))?;
        let last = t.entries.last().expect("non-empty");
        match last.role {
            Role::User if is_data_prompt(&last.content) || last.content.starts_with(TRACE_SPEC_HEAD) => {
                self.detection(t, &last.content)
            }
            Role::Assistant => Err(LlmError::OracleUnsupportedPrompt(
                "the last message is an answer".into(),
            )),
            _ => {
                let m = self.model_from_system(&system.content)?;
                self.testbench(t, &m)
            }
        }
    }
}
