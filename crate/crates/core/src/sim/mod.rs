//! Cycle-level execution of testbench programs against state machine models.

mod compile;

use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::fsm::{FsmModel, StateId};
use crate::hdl::StimulusProgram;

pub use compile::{compile_check, CompileDiagnostics};

pub const DEFAULT_MAX_CYCLES: usize = 10_000;

/// One sample taken at a rising clock edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub cycle: u64,
    pub reset_active: bool,
    /// Concatenated data inputs, first input most significant.
    pub inputs: Bits,
    pub state: StateId,
    pub outputs: Bits,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub dut_name: String,
    pub inputs: Vec<(String, u32)>,
    pub outputs: Vec<(String, u32)>,
    pub state_labels: Vec<String>,
    pub records: Vec<TraceRecord>,
    /// The program ran to its finish directive within the cycle budget.
    pub finished: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("no transition from state `{state}` accepts input {input}")]
    GuardHole { state: String, input: String },
    #[error("max_cycles must be at least 1")]
    ZeroBudget,
}

/// Testbench signals feeding each model input, in model order.
fn input_drivers(m: &FsmModel, program: &StimulusProgram) -> Vec<Option<String>> {
    m.inputs
        .iter()
        .map(|s| program.signal_for_port(&s.name, &m.port_order))
        .collect()
}

/// Runs `program` against `m`.
///
/// Record `k` samples the inputs written strictly before edge `k`. While
/// reset is asserted the record shows the reset state; otherwise it shows the
/// register value, which the fired transition then updates for the next edge.
/// An asynchronous reset asserted at any point between two edges returns the
/// register to the reset state before the later edge samples it.
pub fn simulate(m: &FsmModel, program: &StimulusProgram, max_cycles: usize) -> Result<Trace, SimError> {
    if max_cycles == 0 {
        return Err(SimError::ZeroBudget);
    }
    let drivers = input_drivers(m, program);
    let reset_sig = program
        .signal_for_port(&m.reset, &m.port_order)
        .unwrap_or_else(|| program.reset_signal.clone());
    let asserted = m.reset_polarity.asserted_level();

    let mut values: HashMap<&str, u64> = HashMap::new();
    let mut cursor = 0usize;
    let mut state = m.reset_state;
    let mut records = Vec::new();
    let mut finished = true;
    let iw = m.input_width();

    for (k, t) in program.posedge_times().enumerate() {
        if k >= max_cycles {
            finished = false;
            break;
        }
        let mut pulsed = values.get(reset_sig.as_str()) == Some(&asserted);
        while cursor < program.writes.len() && program.writes[cursor].time < t {
            let w = &program.writes[cursor];
            values.insert(w.signal.as_str(), w.value);
            if w.signal == reset_sig && w.value == asserted {
                pulsed = true;
            }
            cursor += 1;
        }
        let in_reset = values.get(reset_sig.as_str()) == Some(&asserted);
        let parts: Vec<Bits> = m
            .inputs
            .iter()
            .zip(&drivers)
            .map(|(s, d)| {
                let v = d.as_deref().and_then(|d| values.get(d)).copied().unwrap_or(0);
                Bits::new(v, s.width)
            })
            .collect();
        let inputs = if iw == 0 { Bits::zero(0) } else { Bits::concat(parts) };
        if in_reset || (m.reset_async && pulsed) {
            state = m.reset_state;
        }
        let outputs = m.output(state, inputs);
        records.push(TraceRecord {
            cycle: k as u64,
            reset_active: in_reset,
            inputs,
            state,
            outputs,
        });
        if !in_reset {
            state = m
                .fire(state, inputs)
                .ok_or_else(|| SimError::GuardHole {
                    state: m.label(state).to_string(),
                    input: inputs.to_binary(),
                })?
                .to;
        }
    }
    Ok(Trace {
        dut_name: m.name.clone(),
        inputs: m.inputs.iter().map(|s| (s.name.clone(), s.width)).collect(),
        outputs: m.outputs.iter().map(|s| (s.name.clone(), s.width)).collect(),
        state_labels: m.states.iter().map(|s| s.label.clone()).collect(),
        records,
        finished,
    })
}

/// Runs a bare input-vector sequence from reset: one reset cycle followed by
/// one record per vector.
pub fn simulate_vectors(m: &FsmModel, vectors: &[Bits]) -> Trace {
    let mut records = Vec::with_capacity(vectors.len() + 1);
    let zero = Bits::zero(m.input_width());
    records.push(TraceRecord {
        cycle: 0,
        reset_active: true,
        inputs: zero,
        state: m.reset_state,
        outputs: m.output(m.reset_state, zero),
    });
    let mut state = m.reset_state;
    for (k, v) in vectors.iter().enumerate() {
        records.push(TraceRecord {
            cycle: k as u64 + 1,
            reset_active: false,
            inputs: *v,
            state,
            outputs: m.output(state, *v),
        });
        state = m.fire(state, *v).map(|t| t.to).unwrap_or(state);
    }
    Trace {
        dut_name: m.name.clone(),
        inputs: m.inputs.iter().map(|s| (s.name.clone(), s.width)).collect(),
        outputs: m.outputs.iter().map(|s| (s.name.clone(), s.width)).collect(),
        state_labels: m.states.iter().map(|s| s.label.clone()).collect(),
        records,
        finished: true,
    }
}

impl Trace {
    pub fn label(&self, state: StateId) -> &str {
        &self.state_labels[state]
    }

    /// Number of records sampled outside reset.
    pub fn active_cycles(&self) -> usize {
        self.records.iter().filter(|r| !r.reset_active).count()
    }

    /// CSV with header `cycle,reset,<inputs...>,state,<outputs...>`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["cycle".to_string(), "reset".to_string()];
        header.extend(self.inputs.iter().map(|s| s.0.clone()));
        header.push("state".into());
        header.extend(self.outputs.iter().map(|s| s.0.clone()));
        w.write_record(&header).expect("in-memory write");
        for r in &self.records {
            let mut row = vec![r.cycle.to_string(), (r.reset_active as u8).to_string()];
            row.extend(split(&self.inputs, r.inputs).into_iter().map(|b| b.to_binary()));
            row.push(self.label(r.state).to_string());
            row.extend(split(&self.outputs, r.outputs).into_iter().map(|b| b.to_binary()));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// JSON array of records with named input and output values.
    pub fn to_json(&self) -> serde_json::Value {
        let records: Vec<serde_json::Value> = self
            .records
            .iter()
            .map(|r| {
                let named = |sigs: &[(String, u32)], v: Bits| -> serde_json::Map<String, serde_json::Value> {
                    sigs.iter()
                        .zip(split(sigs, v))
                        .map(|((n, _), b)| (n.clone(), serde_json::Value::String(b.to_binary())))
                        .collect()
                };
                serde_json::json!({
                    "cycle": r.cycle,
                    "reset_active": r.reset_active,
                    "inputs": named(&self.inputs, r.inputs),
                    "state": self.label(r.state),
                    "outputs": named(&self.outputs, r.outputs),
                })
            })
            .collect();
        serde_json::json!({
            "dut_name": self.dut_name,
            "finished": self.finished,
            "records": records,
        })
    }
}

fn split(sigs: &[(String, u32)], v: Bits) -> Vec<Bits> {
    let mut offset: u32 = sigs.iter().map(|s| s.1).sum();
    sigs.iter()
        .map(|(_, w)| {
            offset -= w;
            v.slice(offset, *w)
        })
        .collect()
}

/// State labels in cycle order.
pub fn trace_to_state_sequence(t: &Trace) -> Vec<String> {
    t.records.iter().map(|r| t.label(r.state).to_string()).collect()
}

/// (inputs, outputs) per non-reset record.
pub fn trace_to_io_pairs(t: &Trace) -> Vec<(Bits, Bits)> {
    t.records
        .iter()
        .filter(|r| !r.reset_active)
        .map(|r| (r.inputs, r.outputs))
        .collect()
}

/// Human-readable per-cycle lines, `cycle k: input=... state=... output=...`.
/// Cycles sampled in reset carry a `reset` marker after the colon.
pub fn format_cycles(t: &Trace, records: &[TraceRecord], with_state: bool) -> String {
    let mut out = String::new();
    for r in records {
        let _ = write!(out, "cycle {}:{} input={}", r.cycle, reset_marker(r), r.inputs);
        if with_state {
            let _ = write!(out, " state={}", t.label(r.state));
        }
        let _ = writeln!(out, " output={}", r.outputs);
    }
    out
}

/// Like [`format_cycles`] but showing only output bit `bit` (at position
/// `index` of the output vector) under its own name.
pub fn format_bit_cycles(records: &[TraceRecord], bit: &str, index: u32) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "cycle {}:{} input={} {bit}={}",
            r.cycle,
            reset_marker(r),
            r.inputs,
            r.outputs.bit(index) as u8
        );
    }
    out
}

fn reset_marker(r: &TraceRecord) -> &'static str {
    if r.reset_active {
        " reset"
    } else {
        ""
    }
}

#[cfg(test)]
mod tests;
