//! JSON and Graphviz serialisation of models, and rendering a model back to
//! synthesizable RTL.

use std::collections::HashSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FsmModel, Guard, Signal, StateDef, Style, Transition, TransitionId};
use crate::bits::Bits;
use crate::hdl::ast::ModuleDecl;
use crate::hdl::{parse_module, tokenize, FrontendError, ResetPolarity};

pub const MODEL_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelDocError {
    #[error("malformed model document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format {0} (expected {MODEL_FORMAT})")]
    Format(u32),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("bad bit string `{0}`")]
    Bits(String),
    #[error("bad guard `{text}`: {message}")]
    Guard { text: String, message: String },
    #[error("model is invalid: {0}")]
    Invalid(#[from] super::ModelError),
}

#[derive(Serialize, Deserialize)]
struct Doc {
    format: u32,
    name: String,
    clock: String,
    reset: String,
    reset_polarity: ResetPolarity,
    #[serde(default)]
    reset_async: bool,
    state_register: String,
    #[serde(default)]
    port_order: Vec<String>,
    style: Style,
    inputs: Vec<Signal>,
    outputs: Vec<Signal>,
    reset_state: String,
    states: Vec<DocState>,
    transitions: Vec<DocTransition>,
}

#[derive(Serialize, Deserialize)]
struct DocState {
    label: String,
    encoding: String,
    line: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct DocTransition {
    from: String,
    to: String,
    guard: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<String>,
    line: u32,
}

fn bits_text(b: Bits) -> String {
    b.to_binary()
}

fn parse_bits(text: &str, width: u32) -> Result<Bits, ModelDocError> {
    if width == 0 && text.is_empty() {
        return Ok(Bits::zero(0));
    }
    match Bits::parse_binary(text) {
        Some(b) if b.width() == width => Ok(b),
        _ => Err(ModelDocError::Bits(text.to_string())),
    }
}

impl FsmModel {
    /// Versioned JSON document; guards are stored as text.
    pub fn to_json(&self) -> String {
        let doc = Doc {
            format: MODEL_FORMAT,
            name: self.name.clone(),
            clock: self.clock.clone(),
            reset: self.reset.clone(),
            reset_polarity: self.reset_polarity,
            reset_async: self.reset_async,
            state_register: self.state_register.clone(),
            port_order: self.port_order.clone(),
            style: self.style,
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            reset_state: self.label(self.reset_state).to_string(),
            states: self
                .states
                .iter()
                .map(|s| DocState {
                    label: s.label.clone(),
                    encoding: bits_text(s.encoding),
                    line: s.line,
                    output: self.moore_outputs.get(s.id).map(|b| bits_text(*b)),
                })
                .collect(),
            transitions: self
                .transitions
                .iter()
                .map(|t| DocTransition {
                    from: self.label(t.from).to_string(),
                    to: self.label(t.to).to_string(),
                    guard: t.guard.text(&self.inputs),
                    output: t.output.map(bits_text),
                    line: t.line,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serialises") + "\n"
    }

    /// Parses and validates a document written by [`FsmModel::to_json`].
    pub fn from_json(text: &str) -> Result<FsmModel, ModelDocError> {
        let doc: Doc = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT {
            return Err(ModelDocError::Format(doc.format));
        }
        let ow: u32 = doc.outputs.iter().map(|s| s.width).sum();
        let find = |label: &str| {
            doc.states
                .iter()
                .position(|s| s.label == label)
                .ok_or_else(|| ModelDocError::UnknownState(label.to_string()))
        };
        let mut states = Vec::new();
        let mut moore_outputs = Vec::new();
        for (i, s) in doc.states.iter().enumerate() {
            let encoding = Bits::parse_binary(&s.encoding).ok_or_else(|| ModelDocError::Bits(s.encoding.clone()))?;
            states.push(StateDef {
                id: i,
                label: s.label.clone(),
                encoding,
                line: s.line,
            });
            if doc.style == Style::Moore {
                let text = s.output.as_deref().unwrap_or("");
                moore_outputs.push(parse_bits(text, ow)?);
            }
        }
        let mut transitions = Vec::new();
        for (i, t) in doc.transitions.iter().enumerate() {
            let guard = Guard::parse(&t.guard, &doc.inputs).map_err(|message| ModelDocError::Guard {
                text: t.guard.clone(),
                message,
            })?;
            let output = match (&t.output, doc.style) {
                (Some(o), Style::Mealy) => Some(parse_bits(o, ow)?),
                (None, Style::Mealy) => Some(parse_bits("", ow)?),
                _ => None,
            };
            transitions.push(Transition {
                id: TransitionId(i),
                from: find(&t.from)?,
                to: find(&t.to)?,
                guard,
                output,
                line: t.line,
            });
        }
        let model = FsmModel {
            name: doc.name.clone(),
            clock: doc.clock.clone(),
            reset: doc.reset.clone(),
            reset_polarity: doc.reset_polarity,
            reset_async: doc.reset_async,
            state_register: doc.state_register.clone(),
            port_order: doc.port_order.clone(),
            inputs: doc.inputs.clone(),
            outputs: doc.outputs.clone(),
            reset_state: find(&doc.reset_state)?,
            states,
            transitions,
            style: doc.style,
            moore_outputs,
        };
        model.validate()?;
        Ok(model)
    }

    /// Graphviz rendering with guards as edge labels.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", self.name);
        let _ = writeln!(out, "  comment=\"format: {MODEL_FORMAT}\";");
        out.push_str("  rankdir=LR;\n");
        for s in &self.states {
            let shape = if s.id == self.reset_state {
                "doublecircle"
            } else {
                "circle"
            };
            let label = match self.moore_outputs.get(s.id) {
                Some(o) if o.width() > 0 => format!("{}\\n{}", s.label, o),
                _ => s.label.clone(),
            };
            let _ = writeln!(out, "  \"{}\" [shape={shape}, label=\"{label}\"];", s.label);
        }
        for id in super::enumerate_transitions(self) {
            let t = &self.transitions[id.0];
            let mut label = t.guard.text(&self.inputs);
            if let Some(o) = t.output.filter(|o| o.width() > 0) {
                let _ = write!(label, " / {o}");
            }
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{label}\"];",
                self.label(t.from),
                self.label(t.to)
            );
        }
        out.push_str("}\n");
        out
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parameter names for the states: labels when usable, else `ST_<id>`.
fn state_names(m: &FsmModel, taken: &HashSet<&str>) -> Vec<String> {
    let keywords = [
        "begin", "end", "case", "if", "else", "module", "input", "output", "reg", "wire", "default", "always", "assign",
    ];
    let mut seen = HashSet::new();
    m.states
        .iter()
        .map(|s| {
            let ok = is_ident(&s.label)
                && !taken.contains(s.label.as_str())
                && !keywords.contains(&s.label.as_str())
                && seen.insert(s.label.clone());
            if ok {
                s.label.clone()
            } else {
                format!("ST_{}", s.id)
            }
        })
        .collect()
}

fn range(width: u32) -> String {
    if width > 1 {
        format!(" [{}:0]", width - 1)
    } else {
        String::new()
    }
}

fn output_target(m: &FsmModel) -> String {
    if m.outputs.len() == 1 {
        m.outputs[0].name.clone()
    } else {
        let names: Vec<&str> = m.outputs.iter().map(|s| s.name.as_str()).collect();
        format!("{{{}}}", names.join(", "))
    }
}

/// Orders a state's transitions so that a `Default` guard comes last.
fn chain(m: &FsmModel, state: usize) -> Vec<&Transition> {
    let mut ts: Vec<&Transition> = m.transitions_from(state).collect();
    ts.sort_by_key(|t| (matches!(t.guard, Guard::Default), t.to, t.id));
    ts
}

fn write_chain(out: &mut String, m: &FsmModel, state: usize, indent: &str, action: impl Fn(&Transition) -> String) {
    let ts = chain(m, state);
    if ts.is_empty() {
        let _ = writeln!(out, "{indent};");
        return;
    }
    if ts.len() == 1 && (matches!(ts[0].guard, Guard::Default) || is_always(&ts[0].guard)) {
        let _ = writeln!(out, "{indent}{}", action(ts[0]));
        return;
    }
    let _ = writeln!(out, "{indent}begin");
    for (i, t) in ts.iter().enumerate() {
        let head = if i == 0 { "" } else { "else " };
        match &t.guard {
            Guard::Default => {
                let _ = writeln!(out, "{indent}  {head}{}", action(t));
            }
            g => {
                let _ = writeln!(out, "{indent}  {head}if ({}) {}", g.verilog(&m.inputs), action(t));
            }
        }
    }
    let _ = writeln!(out, "{indent}end");
}

fn is_always(g: &Guard) -> bool {
    matches!(g, Guard::AnyOf(c) if c.iter().any(|c| c.mask == 0))
}

/// Two-process RTL implementing `m`: a clocked state register, a
/// combinational next-state `case`, and a combinational output block.
pub fn render_rtl(m: &FsmModel) -> String {
    let mut taken: HashSet<&str> = m.inputs.iter().chain(&m.outputs).map(|s| s.name.as_str()).collect();
    taken.insert(&m.clock);
    taken.insert(&m.reset);
    taken.insert(&m.state_register);
    let names = state_names(m, &taken);
    let sw = m.states.first().map(|s| s.encoding.width()).unwrap_or(1).max(1);
    let next = format!("{}_next", m.state_register);
    let mut out = String::new();

    let mut ports: Vec<String> = vec![format!("input {}", m.clock), format!("input {}", m.reset)];
    ports.extend(m.inputs.iter().map(|s| format!("input{} {}", range(s.width), s.name)));
    ports.extend(
        m.outputs
            .iter()
            .map(|s| format!("output reg{} {}", range(s.width), s.name)),
    );
    let _ = writeln!(out, "module {}(", m.name);
    for (i, p) in ports.iter().enumerate() {
        let sep = if i + 1 == ports.len() { "" } else { "," };
        let _ = writeln!(out, "  {p}{sep}");
    }
    out.push_str(");\n");
    let params: Vec<String> = m
        .states
        .iter()
        .map(|s| format!("{} = {}'d{}", names[s.id], sw, s.encoding.value()))
        .collect();
    let _ = writeln!(out, "  localparam{} {};", range(sw), params.join(", "));
    let _ = writeln!(out, "  reg{} {}, {next};", range(sw), m.state_register);

    let active = match m.reset_polarity {
        ResetPolarity::ActiveHigh => m.reset.clone(),
        ResetPolarity::ActiveLow => format!("!{}", m.reset),
    };
    let sens = match (m.reset_async, m.reset_polarity) {
        (false, _) => format!("posedge {}", m.clock),
        (true, ResetPolarity::ActiveHigh) => format!("posedge {} or posedge {}", m.clock, m.reset),
        (true, ResetPolarity::ActiveLow) => format!("posedge {} or negedge {}", m.clock, m.reset),
    };
    let _ = writeln!(out, "  always @({sens}) begin");
    let _ = writeln!(
        out,
        "    if ({active}) {} <= {};",
        m.state_register, names[m.reset_state]
    );
    let _ = writeln!(out, "    else {} <= {next};", m.state_register);
    out.push_str("  end\n");

    out.push_str("  always @(*) begin\n");
    let _ = writeln!(out, "    {next} = {};", m.state_register);
    let _ = writeln!(out, "    case ({})", m.state_register);
    for s in &m.states {
        let _ = writeln!(out, "      {}:", names[s.id]);
        write_chain(&mut out, m, s.id, "        ", |t| format!("{next} = {};", names[t.to]));
    }
    out.push_str("    endcase\n  end\n");

    let ow = m.output_width();
    if ow > 0 {
        let target = output_target(m);
        out.push_str("  always @(*) begin\n");
        let _ = writeln!(out, "    {target} = {ow}'d0;");
        let _ = writeln!(out, "    case ({})", m.state_register);
        for s in &m.states {
            let _ = writeln!(out, "      {}:", names[s.id]);
            match m.style {
                Style::Moore => {
                    let _ = writeln!(out, "        {target} = {ow}'b{};", m.moore_outputs[s.id]);
                }
                Style::Mealy => write_chain(&mut out, m, s.id, "        ", |t| {
                    format!("{target} = {ow}'b{};", t.output.unwrap_or(Bits::zero(ow)))
                }),
            }
        }
        out.push_str("    endcase\n  end\n");
    }
    out.push_str("endmodule\n");
    out
}

/// Renders `m` as RTL and parses it back into a module declaration.
pub fn model_to_module(m: &FsmModel) -> Result<ModuleDecl, FrontendError> {
    parse_module(&tokenize(&render_rtl(m))?)
}
