//! Interpretation of the constrained testbench dialect into a timed
//! [`StimulusProgram`].
//!
//! Each `initial` block runs with its own local clock against a shared
//! signal timeline. Blocks are executed one after another in source order, so
//! a block observes writes made by earlier blocks at or before its current
//! time; reads of signals written only by later blocks see their initial
//! values.

use std::collections::HashMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ast::{BinaryOp, Edge, Expr, LValue, NetKind, Stmt, UnaryOp};
use super::conventions::{Violation, ViolationKind};
use super::eval::{apply_binary, eval_expr, EvalError, Scope, Value};
use super::lexer::Token;
use super::parser::{parse_tb_module, Binding, TaskDecl, TbModule};
use super::{FrontendError, Loc};
use crate::bits::Bits;

const STEP_BUDGET: usize = 2_000_000;
const CALL_DEPTH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResetPolarity {
    ActiveHigh,
    ActiveLow,
}

impl ResetPolarity {
    /// Signal level that holds the machine in reset.
    pub fn asserted_level(self) -> u64 {
        match self {
            ResetPolarity::ActiveHigh => 1,
            ResetPolarity::ActiveLow => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StimulusEvent {
    ResetAssert,
    ResetDeassert,
    ApplyInput(Bits),
    /// Bit list, most significant first. Parsing never produces this variant;
    /// it describes a sequence call before expansion.
    ApplyInputSequence(Vec<u8>),
    Finish,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub time: u64,
    pub event: StimulusEvent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalWrite {
    pub time: u64,
    pub signal: String,
    pub value: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortBinding {
    /// `None` for positional connections.
    pub port: Option<String>,
    /// Testbench signal driving (or observing) the port, when it is a plain name.
    pub signal: Option<String>,
    pub line: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DutInstance {
    pub module: String,
    pub name: String,
    pub bindings: Vec<PortBinding>,
    pub line: u32,
}

/// A parsed and interpreted testbench.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusProgram {
    pub module_name: String,
    /// Module header has an empty port list.
    pub portless: bool,
    pub clock_signal: String,
    pub clock_half_period: u64,
    /// Time of the first rising clock edge.
    pub first_posedge: u64,
    pub reset_signal: String,
    pub reset_polarity: ResetPolarity,
    pub instance: Option<DutInstance>,
    /// Testbench-level signals and their widths.
    pub signals: Vec<(String, u32)>,
    pub events: Vec<TimedEvent>,
    /// Every write to a testbench signal, ordered by time then program order.
    pub writes: Vec<SignalWrite>,
    pub finish_time: u64,
    /// Dump commands appear in the first `initial` block.
    pub has_dump_commands: bool,
    /// Inputs are applied through an `apply_input` task.
    pub uses_apply_input: bool,
}

impl StimulusProgram {
    /// Value of `signal` as seen by a rising edge at `time` (writes strictly
    /// before the edge).
    pub fn value_before(&self, signal: &str, time: u64) -> Option<u64> {
        self.writes
            .iter()
            .take_while(|w| w.time < time)
            .filter(|w| w.signal == signal)
            .last()
            .map(|w| w.value)
    }

    /// Whether `signal` held `level` at any instant in the half-open interval
    /// `(after, before)`, or was already at `level` just after `after`.
    pub fn level_seen_between(&self, signal: &str, after: u64, before: u64, level: u64) -> bool {
        if self.value_before(signal, after + 1) == Some(level) {
            return true;
        }
        self.writes
            .iter()
            .filter(|w| w.time > after && w.time < before && w.signal == signal)
            .any(|w| w.value == level)
    }

    /// Rising-edge times up to and including the finish time.
    pub fn posedge_times(&self) -> impl Iterator<Item = u64> + '_ {
        let step = 2 * self.clock_half_period;
        (0u64..)
            .map(move |k| self.first_posedge + k * step)
            .take_while(move |t| *t <= self.finish_time)
    }

    /// Testbench signal connected to a DUT port. Positional bindings are
    /// resolved against `port_order`; unbound ports fall back to a testbench
    /// signal of the same name.
    pub fn signal_for_port(&self, port: &str, port_order: &[String]) -> Option<String> {
        if let Some(inst) = &self.instance {
            for (i, b) in inst.bindings.iter().enumerate() {
                let matches = match &b.port {
                    Some(p) => p == port,
                    None => port_order.get(i).map(|p| p == port).unwrap_or(false),
                };
                if matches {
                    return b.signal.clone();
                }
            }
        }
        self.signals.iter().any(|(s, _)| s == port).then(|| port.to_string())
    }

    /// Input vectors carried by `ApplyInput` events, in order.
    pub fn applied_vectors(&self) -> Vec<Bits> {
        self.events
            .iter()
            .filter_map(|e| match &e.event {
                StimulusEvent::ApplyInput(b) => Some(*b),
                _ => None,
            })
            .collect()
    }

    /// Event kinds without times.
    pub fn event_kinds(&self) -> Vec<StimulusEvent> {
        self.events.iter().map(|e| e.event.clone()).collect()
    }

    /// Appends `vectors` after the current end of the program. `drivers`
    /// lists the testbench signals receiving each vector, most significant
    /// first with their widths. Each vector is written mid-cycle so it is
    /// sampled by exactly one rising edge; the finish moves to the last edge.
    pub fn extend_with_vectors(&mut self, drivers: &[(String, u32)], vectors: &[Bits]) {
        if vectors.is_empty() {
            return;
        }
        let h = self.clock_half_period;
        let step = 2 * h;
        let mut p1 = self.first_posedge;
        while p1 <= self.finish_time {
            p1 += step;
        }
        self.events.retain(|e| e.event != StimulusEvent::Finish);
        for (k, v) in vectors.iter().enumerate() {
            let t = p1 - h + step * k as u64;
            let mut offset = drivers.iter().map(|d| d.1).sum::<u32>();
            for (sig, w) in drivers {
                offset -= w;
                self.writes.push(SignalWrite {
                    time: t,
                    signal: sig.clone(),
                    value: v.slice(offset, *w).value(),
                });
            }
            self.events.push(TimedEvent {
                time: t,
                event: StimulusEvent::ApplyInput(*v),
            });
        }
        let end = p1 + step * (vectors.len() as u64 - 1);
        self.finish_time = end;
        self.events.push(TimedEvent {
            time: end,
            event: StimulusEvent::Finish,
        });
    }
}

/// Expands `ApplyInputSequence` events into one `ApplyInput` per bit, msb first.
pub fn expand_sequences(events: &[StimulusEvent]) -> Vec<StimulusEvent> {
    events
        .iter()
        .flat_map(|e| match e {
            StimulusEvent::ApplyInputSequence(bits) => bits
                .iter()
                .map(|b| StimulusEvent::ApplyInput(Bits::new(*b as u64, 1)))
                .collect(),
            other => vec![other.clone()],
        })
        .collect()
}

/// Parses and interprets a testbench.
pub fn parse_testbench(tokens: &[Token]) -> Result<StimulusProgram, FrontendError> {
    let tb = parse_tb_module(tokens)?;
    interpret(&tb)
}

fn conv(kind: ViolationKind, message: impl Into<String>, loc: Loc) -> FrontendError {
    FrontendError::Convention(Violation {
        kind,
        message: message.into(),
        loc,
    })
}

fn reset_name_re() -> Regex {
    Regex::new(r"(?i)(rst|reset)").unwrap()
}

struct Clock {
    signal: String,
    half_period: u64,
    initial: u64,
}

/// Recognises `#H clk = ~clk;` in its statement shapes.
fn clock_toggle(stmt: &Stmt) -> Option<(String, u64)> {
    let toggle = |s: &Stmt| -> Option<String> {
        if let Stmt::Assign {
            lhs: LValue::Ident(name, _),
            rhs: Expr::Unary(UnaryOp::BitNot | UnaryOp::Not, inner),
            ..
        } = s
        {
            if let Expr::Ident(src, _) = inner.as_ref() {
                if src == name {
                    return Some(name.clone());
                }
            }
        }
        None
    };
    match stmt {
        Stmt::Delay {
            amount,
            stmt: Some(inner),
            ..
        } => toggle(inner).map(|n| (n, *amount)),
        Stmt::Block(stmts) => match stmts.as_slice() {
            [single] => clock_toggle(single),
            [Stmt::Delay { amount, stmt: None, .. }, second] => toggle(second).map(|n| (n, *amount)),
            _ => None,
        },
        _ => None,
    }
}

fn interpret(tb: &TbModule) -> Result<StimulusProgram, FrontendError> {
    // Clock generator: an always block or a `forever` inside an initial block.
    let mut clock: Option<(String, u64)> = None;
    for (body, loc) in &tb.always {
        match clock_toggle(body) {
            Some(c) if clock.is_none() => clock = Some(c),
            _ => {
                return Err(FrontendError::UnsupportedConstruct {
                    name: "always block other than clock generation".into(),
                    location: *loc,
                })
            }
        }
    }
    let mut initials: Vec<(Vec<Stmt>, Loc)> = Vec::new();
    for (body, loc) in &tb.initials {
        let stmts = match body {
            Stmt::Block(s) => s.clone(),
            other => vec![other.clone()],
        };
        let mut kept = Vec::new();
        for s in stmts {
            if let Stmt::Forever { body, loc: floc } = &s {
                match clock_toggle(body) {
                    Some(c) if clock.is_none() => {
                        clock = Some(c);
                        continue;
                    }
                    _ => {
                        return Err(FrontendError::UnsupportedConstruct {
                            name: "forever loop other than clock generation".into(),
                            location: *floc,
                        })
                    }
                }
            }
            kept.push(s);
        }
        initials.push((kept, *loc));
    }
    let Some((clock_signal, half_period)) = clock else {
        return Err(conv(
            ViolationKind::NoClock,
            "no clock generator of the form `#N clk = ~clk;` found",
            tb.loc,
        ));
    };
    if half_period == 0 {
        return Err(conv(ViolationKind::NoClock, "clock half period is zero", tb.loc));
    }

    let mut clock_initial = 0u64;
    for (name, init) in &tb.net_inits {
        if *name == clock_signal {
            clock_initial = eval_expr(init, &HashMap::<String, Value>::new())
                .map(|v| v.bits & 1)
                .unwrap_or(0);
        }
    }
    for (stmts, _) in &initials {
        for s in stmts {
            match s {
                Stmt::Assign {
                    lhs: LValue::Ident(n, _),
                    rhs,
                    ..
                } => {
                    if *n == clock_signal {
                        if let Ok(v) = eval_expr(rhs, &HashMap::<String, Value>::new()) {
                            clock_initial = v.bits & 1;
                        }
                    }
                }
                Stmt::Delay { .. } | Stmt::WaitEdge { .. } | Stmt::Call { .. } => break,
                _ => {}
            }
        }
    }
    let clk = Clock {
        signal: clock_signal.clone(),
        half_period,
        initial: clock_initial,
    };
    let first_posedge = if clk.initial == 0 { half_period } else { 2 * half_period };

    // DUT instance and reset signal.
    let instance = tb.instances.first().map(|inst| DutInstance {
        module: inst.module.clone(),
        name: inst.name.clone(),
        bindings: inst.bindings.iter().map(port_binding).collect(),
        line: inst.loc.line,
    });
    if tb.instances.len() > 1 {
        return Err(FrontendError::UnsupportedConstruct {
            name: "more than one module instance".into(),
            location: tb.instances[1].loc,
        });
    }
    let re = reset_name_re();
    let mut reset_signal = None;
    if let Some(inst) = &instance {
        reset_signal = inst
            .bindings
            .iter()
            .find(|b| b.port.as_deref().map(|p| re.is_match(p)).unwrap_or(false))
            .and_then(|b| b.signal.clone());
    }
    if reset_signal.is_none() {
        reset_signal = tb
            .nets
            .iter()
            .find(|n| n.kind == NetKind::Reg && re.is_match(&n.name))
            .map(|n| n.name.clone());
    }

    // Run every initial block.
    let mut widths: HashMap<String, (u32, u32, bool)> = HashMap::new();
    for n in &tb.nets {
        let lsb = n.range.map(|(m, l)| m.min(l)).unwrap_or(0);
        widths.insert(n.name.clone(), (n.width(), lsb, n.kind == NetKind::Integer));
    }
    let tasks: HashMap<&str, &TaskDecl> = tb.tasks.iter().map(|t| (t.name.as_str(), t)).collect();
    let consts: HashMap<String, Value> = tb
        .params
        .iter()
        .map(|p| (p.name.clone(), Value::new(p.value, p.width().unwrap_or(32))))
        .collect();

    let mut timeline: Vec<Entry> = Vec::new();
    for (name, init) in &tb.net_inits {
        if *name == clock_signal {
            continue;
        }
        let v = eval_expr(init, &consts).map_err(|e| eval_err(e, tb.loc))?;
        let w = widths.get(name).map(|w| w.0).unwrap_or(1);
        timeline.push(Entry {
            time: 0,
            block: 0,
            seq: 0,
            kind: EntryKind::Write(name.clone(), Value::new(v.bits, w).bits),
        });
    }
    let mut has_dump = false;
    let mut finish: Option<u64> = None;
    let mut uses_apply = false;
    for (idx, (stmts, loc)) in initials.iter().enumerate() {
        let mut interp = Interp {
            block: idx + 1,
            seq: 0,
            now: 0,
            steps: 0,
            frames: Vec::new(),
            widths: &widths,
            consts: &consts,
            tasks: &tasks,
            clock: &clk,
            earlier: &timeline,
            own: Vec::new(),
            own_last: HashMap::new(),
            dump_file: false,
            dump_vars: false,
            apply_depth: 0,
            uses_apply: false,
            finished: false,
        };
        for s in stmts {
            interp.exec(s)?;
            if interp.finished {
                break;
            }
        }
        if idx == 0 && interp.dump_file && interp.dump_vars {
            has_dump = true;
        }
        uses_apply |= interp.uses_apply;
        if interp.finished {
            let t = interp.now;
            finish = Some(finish.map_or(t, |f: u64| f.min(t)));
        }
        let _ = loc;
        let own = std::mem::take(&mut interp.own);
        timeline.extend(own);
    }
    timeline.sort_by_key(|e| (e.time, e.block, e.seq));

    let Some(finish_time) = finish else {
        return Err(conv(
            ViolationKind::NoFinish,
            "test patterns do not end with $finish or $stop",
            tb.loc,
        ));
    };
    timeline.retain(|e| e.time <= finish_time);

    let first_initial = initials.first().map(|(_, l)| *l).unwrap_or(tb.loc);
    let Some(reset_signal) = reset_signal else {
        return Err(conv(
            ViolationKind::NoReset,
            "no reset signal is driven by the testbench",
            first_initial,
        ));
    };

    let mut writes = Vec::new();
    let mut events = Vec::new();
    let mut polarity = None;
    let mut reset_level: Option<u64> = None;
    for e in &timeline {
        match &e.kind {
            EntryKind::Write(sig, v) => {
                writes.push(SignalWrite {
                    time: e.time,
                    signal: sig.clone(),
                    value: *v,
                });
                if *sig == reset_signal {
                    let p = *polarity.get_or_insert(if *v != 0 {
                        ResetPolarity::ActiveHigh
                    } else {
                        ResetPolarity::ActiveLow
                    });
                    let asserted = (*v != 0) == (p == ResetPolarity::ActiveHigh);
                    if reset_level != Some(*v) {
                        events.push(TimedEvent {
                            time: e.time,
                            event: if asserted {
                                StimulusEvent::ResetAssert
                            } else {
                                StimulusEvent::ResetDeassert
                            },
                        });
                    }
                    reset_level = Some(*v);
                }
            }
            EntryKind::Apply(bits) => events.push(TimedEvent {
                time: e.time,
                event: StimulusEvent::ApplyInput(*bits),
            }),
        }
    }
    events.push(TimedEvent {
        time: finish_time,
        event: StimulusEvent::Finish,
    });

    // A reset assert/deassert pair must precede the first applied input.
    let first_apply = events
        .iter()
        .position(|e| matches!(e.event, StimulusEvent::ApplyInput(_)));
    let prefix = &events[..first_apply.unwrap_or(events.len() - 1)];
    let assert_at = prefix.iter().position(|e| e.event == StimulusEvent::ResetAssert);
    let paired = assert_at
        .map(|a| prefix[a..].iter().any(|e| e.event == StimulusEvent::ResetDeassert))
        .unwrap_or(false);
    if !paired {
        return Err(conv(
            ViolationKind::NoReset,
            format!("reset `{reset_signal}` is not asserted and released before the first input"),
            first_initial,
        ));
    }

    let mut signals: Vec<(String, u32)> = tb.nets.iter().map(|n| (n.name.clone(), n.width())).collect();
    signals.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(StimulusProgram {
        module_name: tb.name.clone(),
        portless: tb.portless,
        clock_signal,
        clock_half_period: half_period,
        first_posedge,
        reset_signal,
        reset_polarity: polarity.unwrap_or(ResetPolarity::ActiveHigh),
        instance,
        signals,
        events,
        writes,
        finish_time,
        has_dump_commands: has_dump,
        uses_apply_input: uses_apply,
    })
}

fn port_binding(b: &Binding) -> PortBinding {
    PortBinding {
        port: b.port.clone(),
        signal: match &b.signal {
            Some(Expr::Ident(n, _)) => Some(n.clone()),
            _ => None,
        },
        line: b.loc.line,
    }
}

fn eval_err(e: EvalError, loc: Loc) -> FrontendError {
    match e {
        EvalError::UnknownIdent { name, loc } => FrontendError::Parse {
            expected: "a declared identifier".into(),
            found: format!("undeclared `{name}`"),
            location: loc,
        },
        EvalError::Unsupported { what, .. } => FrontendError::UnsupportedConstruct {
            name: what,
            location: loc,
        },
        EvalError::Budget => FrontendError::UnsupportedConstruct {
            name: "non-terminating testbench code".into(),
            location: loc,
        },
    }
}

#[derive(Clone, Debug)]
struct Entry {
    time: u64,
    block: usize,
    seq: usize,
    kind: EntryKind,
}

#[derive(Clone, Debug)]
enum EntryKind {
    Write(String, u64),
    Apply(Bits),
}

struct Local {
    value: Value,
    lsb: u32,
    signed: bool,
}

struct Interp<'a> {
    block: usize,
    seq: usize,
    now: u64,
    steps: usize,
    frames: Vec<HashMap<String, Local>>,
    widths: &'a HashMap<String, (u32, u32, bool)>,
    consts: &'a HashMap<String, Value>,
    tasks: &'a HashMap<&'a str, &'a TaskDecl>,
    clock: &'a Clock,
    earlier: &'a [Entry],
    own: Vec<Entry>,
    own_last: HashMap<String, (u64, u64)>,
    dump_file: bool,
    dump_vars: bool,
    apply_depth: usize,
    uses_apply: bool,
    finished: bool,
}

impl Scope for Interp<'_> {
    fn lookup(&self, name: &str) -> Option<Value> {
        if let Some(frame) = self.frames.last() {
            if let Some(l) = frame.get(name) {
                return Some(l.value);
            }
        }
        if let Some(c) = self.consts.get(name) {
            return Some(*c);
        }
        let (width, _, _) = *self.widths.get(name)?;
        if name == self.clock.signal {
            return Some(Value::new(self.clock_level(self.now), width));
        }
        let theirs = self
            .earlier
            .iter()
            .filter(|e| e.time <= self.now)
            .filter_map(|e| match &e.kind {
                EntryKind::Write(s, v) if s == name => Some((e.time, *v)),
                _ => None,
            })
            .next_back();
        let mine = self.own_last.get(name).copied();
        let bits = match (theirs, mine) {
            (Some((tt, tv)), Some((mt, mv))) => {
                if mt >= tt {
                    mv
                } else {
                    tv
                }
            }
            (Some((_, v)), None) | (None, Some((_, v))) => v,
            (None, None) => 0,
        };
        Some(Value::new(bits, width))
    }

    fn lsb(&self, name: &str) -> u32 {
        if let Some(frame) = self.frames.last() {
            if let Some(l) = frame.get(name) {
                return l.lsb;
            }
        }
        self.widths.get(name).map(|w| w.1).unwrap_or(0)
    }
}

impl Interp<'_> {
    fn clock_level(&self, t: u64) -> u64 {
        (self.clock.initial + t / self.clock.half_period) % 2
    }

    fn is_signed(&self, name: &str) -> bool {
        if let Some(frame) = self.frames.last() {
            if let Some(l) = frame.get(name) {
                return l.signed;
            }
        }
        self.widths.get(name).map(|w| w.2).unwrap_or(false)
    }

    /// Evaluation with integer signedness: comparisons between signed
    /// operands (integers and unsized decimals) compare as two's complement.
    fn eval(&self, expr: &Expr) -> Result<(Value, bool), EvalError> {
        match expr {
            Expr::Ident(n, _) => Ok((eval_expr(expr, self)?, self.is_signed(n))),
            Expr::Number(lit, _) => Ok((eval_expr(expr, self)?, lit.width.is_none())),
            Expr::Unary(UnaryOp::Neg, inner) => {
                let (v, s) = self.eval(inner)?;
                Ok((Value::new(v.bits.wrapping_neg(), v.width), s))
            }
            Expr::Binary(op, a, b) => {
                let (va, sa) = self.eval(a)?;
                let (vb, sb) = self.eval(b)?;
                let signed = sa && sb;
                use BinaryOp::*;
                match op {
                    Lt | Le | Gt | Ge if signed => {
                        let x = sign_extend(va);
                        let y = sign_extend(vb);
                        let r = match op {
                            Lt => x < y,
                            Le => x <= y,
                            Gt => x > y,
                            _ => x >= y,
                        };
                        Ok((Value::new(r as u64, 1), false))
                    }
                    Add | Sub | Mul if signed => {
                        let v = apply_binary(*op, va, vb);
                        Ok((Value::new(v.bits, va.width.max(vb.width)), true))
                    }
                    _ => Ok((apply_binary(*op, va, vb), false)),
                }
            }
            _ => Ok((eval_expr(expr, self)?, false)),
        }
    }

    fn tick(&mut self, loc: Loc) -> Result<(), FrontendError> {
        self.steps += 1;
        if self.steps > STEP_BUDGET {
            return Err(eval_err(EvalError::Budget, loc));
        }
        Ok(())
    }

    fn push(&mut self, kind: EntryKind) {
        self.seq += 1;
        self.own.push(Entry {
            time: self.now,
            block: self.block,
            seq: self.seq,
            kind,
        });
    }

    fn write(&mut self, lhs: &LValue, value: Value, loc: Loc) -> Result<(), FrontendError> {
        match lhs {
            LValue::Concat(parts) => {
                let mut offset = 0u32;
                for part in parts.iter().rev() {
                    let w = self.lvalue_width(part);
                    self.write(part, Value::new(value.bits >> offset.min(63), w), loc)?;
                    offset += w;
                }
                Ok(())
            }
            LValue::Ident(name, nloc) | LValue::Index(name, _, nloc) | LValue::Slice(name, _, _, nloc) => {
                let current = self.lookup(name).ok_or_else(|| FrontendError::Parse {
                    expected: "a declared identifier".into(),
                    found: format!("undeclared `{name}`"),
                    location: *nloc,
                })?;
                let lsb = self.lsb(name);
                let bits = match lhs {
                    LValue::Index(_, idx, _) => {
                        let i = self.eval(idx).map_err(|e| eval_err(e, loc))?.0.bits;
                        let shift = i.saturating_sub(lsb as u64);
                        if shift >= 64 {
                            return Ok(());
                        }
                        (current.bits & !(1 << shift)) | ((value.bits & 1) << shift)
                    }
                    LValue::Slice(_, m, l, _) => {
                        let (hi, lo) = ((*m).max(*l), (*m).min(*l));
                        let shift = lo.saturating_sub(lsb);
                        let mask = crate::bits::mask(hi - lo + 1) << shift;
                        (current.bits & !mask) | ((value.bits << shift) & mask)
                    }
                    _ => value.bits,
                };
                let bits = Value::new(bits, current.width).bits;
                if let Some(frame) = self.frames.last_mut() {
                    if let Some(l) = frame.get_mut(name) {
                        l.value = Value::new(bits, l.value.width);
                        return Ok(());
                    }
                }
                if *name == self.clock.signal {
                    return Ok(());
                }
                self.own_last.insert(name.clone(), (self.now, bits));
                self.push(EntryKind::Write(name.clone(), bits));
                Ok(())
            }
        }
    }

    fn lvalue_width(&self, lhs: &LValue) -> u32 {
        match lhs {
            LValue::Ident(n, _) => self.lookup(n).map(|v| v.width).unwrap_or(1),
            LValue::Index(..) => 1,
            LValue::Slice(_, m, l, _) => m.abs_diff(*l) + 1,
            LValue::Concat(parts) => parts.iter().map(|p| self.lvalue_width(p)).sum(),
        }
    }

    fn exec(&mut self, stmt: &Stmt) -> Result<(), FrontendError> {
        if self.finished {
            return Ok(());
        }
        match stmt {
            Stmt::Block(stmts) => {
                for s in stmts {
                    self.exec(s)?;
                    if self.finished {
                        break;
                    }
                }
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
                loc,
            } => {
                self.tick(*loc)?;
                if self.eval(cond).map_err(|e| eval_err(e, *loc))?.0.truthy() {
                    self.exec(then_branch)?;
                } else if let Some(e) = else_branch {
                    self.exec(e)?;
                }
            }
            Stmt::Case {
                selector,
                arms,
                default,
                loc,
            } => {
                self.tick(*loc)?;
                let sel = self.eval(selector).map_err(|e| eval_err(e, *loc))?.0;
                for arm in arms {
                    for l in &arm.labels {
                        if self.eval(l).map_err(|e| eval_err(e, arm.loc))?.0.bits == sel.bits {
                            return self.exec(&arm.body);
                        }
                    }
                }
                if let Some(d) = default {
                    self.exec(d)?;
                }
            }
            Stmt::Assign { lhs, rhs, loc, .. } => {
                self.tick(*loc)?;
                let v = self.eval(rhs).map_err(|e| eval_err(e, *loc))?.0;
                self.write(lhs, v, *loc)?;
            }
            Stmt::Null => {}
            Stmt::Delay { amount, stmt, loc } => {
                self.tick(*loc)?;
                self.now += amount;
                if let Some(s) = stmt {
                    self.exec(s)?;
                }
            }
            Stmt::WaitEdge { edge, signal, loc } => {
                self.tick(*loc)?;
                if *signal != self.clock.signal {
                    return Err(FrontendError::UnsupportedConstruct {
                        name: format!("edge wait on non-clock signal `{signal}`"),
                        location: *loc,
                    });
                }
                let want = match edge {
                    Edge::Posedge => 1,
                    Edge::Negedge => 0,
                };
                let h = self.clock.half_period;
                let mut t = (self.now / h + 1) * h;
                while self.clock_level(t) != want {
                    t += h;
                }
                self.now = t;
            }
            Stmt::Call { name, args, loc } => {
                self.tick(*loc)?;
                self.call(name, args, *loc)?;
            }
            Stmt::SysCall { name, loc, .. } => {
                self.tick(*loc)?;
                match name.as_str() {
                    "$finish" | "$stop" => self.finished = true,
                    "$fsdbDumpfile" | "$dumpfile" => self.dump_file = true,
                    "$fsdbDumpvars" | "$dumpvars" => self.dump_vars = true,
                    "$display" | "$write" | "$monitor" | "$strobe" | "$time" | "$timeformat" | "$fflush" | "$info"
                    | "$warning" | "$error" | "$dumpon" | "$dumpoff" | "$fsdbDumpon" | "$fsdbDumpoff"
                    | "$fsdbDumpflush" | "$dumpflush" => {}
                    other => {
                        return Err(FrontendError::UnsupportedConstruct {
                            name: other.to_string(),
                            location: *loc,
                        })
                    }
                }
            }
            Stmt::For {
                init,
                cond,
                step,
                body,
                loc,
            } => {
                self.exec(init)?;
                loop {
                    self.tick(*loc)?;
                    if !self.eval(cond).map_err(|e| eval_err(e, *loc))?.0.truthy() {
                        break;
                    }
                    self.exec(body)?;
                    if self.finished {
                        break;
                    }
                    self.exec(step)?;
                }
            }
            Stmt::Repeat { count, body, loc } => {
                let n = self.eval(count).map_err(|e| eval_err(e, *loc))?.0.bits;
                for _ in 0..n {
                    self.tick(*loc)?;
                    self.exec(body)?;
                    if self.finished {
                        break;
                    }
                }
            }
            Stmt::Forever { loc, .. } => {
                return Err(FrontendError::UnsupportedConstruct {
                    name: "forever loop other than clock generation".into(),
                    location: *loc,
                })
            }
        }
        Ok(())
    }

    fn call(&mut self, name: &str, args: &[Expr], loc: Loc) -> Result<(), FrontendError> {
        let Some(task) = self.tasks.get(name).copied() else {
            return Err(FrontendError::Parse {
                expected: "a declared task".into(),
                found: format!("undeclared `{name}`"),
                location: loc,
            });
        };
        if task.args.len() != args.len() {
            return Err(FrontendError::Parse {
                expected: format!("{} argument(s) to `{name}`", task.args.len()),
                found: format!("{} argument(s)", args.len()),
                location: loc,
            });
        }
        if self.frames.len() >= CALL_DEPTH {
            return Err(eval_err(EvalError::Budget, loc));
        }
        let mut frame = HashMap::new();
        let mut vector = Bits::zero(0);
        for (formal, actual) in task.args.iter().zip(args) {
            let v = self.eval(actual).map_err(|e| eval_err(e, loc))?.0;
            let width = super::ast::range_width(formal.range);
            let lsb = formal.range.map(|(m, l)| m.min(l)).unwrap_or(0);
            let value = Value::new(v.bits, width);
            if vector.width() + width > crate::bits::MAX_WIDTH {
                return Err(FrontendError::UnsupportedConstruct {
                    name: "task arguments wider than 64 bits in total".into(),
                    location: loc,
                });
            }
            vector = Bits::concat([vector, Bits::new(value.bits, width)]);
            frame.insert(
                formal.name.clone(),
                Local {
                    value,
                    lsb,
                    signed: false,
                },
            );
        }
        for local in &task.locals {
            frame.insert(
                local.name.clone(),
                Local {
                    value: Value::new(0, local.width()),
                    lsb: local.range.map(|(m, l)| m.min(l)).unwrap_or(0),
                    signed: local.kind == NetKind::Integer,
                },
            );
        }
        let is_apply = name == "apply_input";
        if is_apply {
            self.uses_apply = true;
            if self.apply_depth == 0 {
                self.push(EntryKind::Apply(vector));
            }
            self.apply_depth += 1;
        }
        self.frames.push(frame);
        let result = self.exec(&task.body);
        self.frames.pop();
        if is_apply {
            self.apply_depth -= 1;
        }
        result
    }
}

fn sign_extend(v: Value) -> i64 {
    if v.width >= 64 {
        return v.bits as i64;
    }
    let shift = 64 - v.width;
    ((v.bits << shift) as i64) >> shift
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdl::lexer::tokenize;

    const DETECTOR_SAMPLE_TB: &str = include_str!("../../tests/data/detector_sample_tb.v");

    fn program(text: &str) -> Result<StimulusProgram, FrontendError> {
        parse_testbench(&tokenize(text).unwrap())
    }

    #[test]
    fn detector_sample_program() {
        let p = program(DETECTOR_SAMPLE_TB).unwrap();
        assert_eq!(p.module_name, "tb_fsm");
        assert_eq!(p.clock_half_period, 5);
        assert_eq!(p.first_posedge, 5);
        assert_eq!(p.reset_signal, "rst");
        assert_eq!(p.reset_polarity, ResetPolarity::ActiveHigh);
        assert!(p.has_dump_commands);
        assert!(p.uses_apply_input);
        let mut expected = vec![
            TimedEvent {
                time: 0,
                event: StimulusEvent::ResetAssert,
            },
            TimedEvent {
                time: 10,
                event: StimulusEvent::ResetDeassert,
            },
        ];
        for k in 0..8 {
            expected.push(TimedEvent {
                time: 10 + 10 * k,
                event: StimulusEvent::ApplyInput(Bits::new(1, 1)),
            });
        }
        expected.push(TimedEvent {
            time: 90,
            event: StimulusEvent::Finish,
        });
        assert_eq!(p.events, expected);
        assert_eq!(p.posedge_times().count(), 9);
        assert_eq!(p.value_before("inp", 15), Some(1));
        assert_eq!(p.value_before("rst", 5), Some(1));
        assert_eq!(p.value_before("rst", 15), Some(0));
    }

    #[test]
    fn missing_finish_is_rule_five() {
        let text = DETECTOR_SAMPLE_TB.replace("$stop;", "");
        match program(&text).unwrap_err() {
            FrontendError::Convention(v) => assert_eq!(v.kind, ViolationKind::NoFinish),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_initial_has_no_reset() {
        let text = "module tb();\n reg clk; reg rst;\n always #5 clk = ~clk;\n initial begin end\nendmodule";
        match program(text).unwrap_err() {
            FrontendError::Convention(v) => {
                assert!(matches!(v.kind, ViolationKind::NoReset | ViolationKind::NoFinish))
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = "module tb();\n reg clk; reg rst;\n always #5 clk = ~clk;\n initial begin end\n initial #100 $finish;\nendmodule";
        match program(text).unwrap_err() {
            FrontendError::Convention(v) => assert_eq!(v.kind, ViolationKind::NoReset),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sequence_expansion_is_msb_first() {
        let ev = expand_sequences(&[StimulusEvent::ApplyInputSequence(vec![1, 0, 1, 1])]);
        let bits: Vec<u64> = ev
            .iter()
            .map(|e| match e {
                StimulusEvent::ApplyInput(b) => b.value(),
                _ => 9,
            })
            .collect();
        assert_eq!(bits, vec![1, 0, 1, 1]);
    }

    #[test]
    fn active_low_forever_clock_and_edge_waits() {
        let text = r#"module tb();
  reg clk, rst_n;
  reg [1:0] ab;
  fsm dut(clk, rst_n, ab);
  initial begin
    clk = 0;
    forever #5 clk = ~clk;
  end
  initial begin
    rst_n = 0; ab = 0;
    @(posedge clk);
    #2 rst_n = 1;
    repeat (2) begin
      @(negedge clk) ab = ab + 1;
    end
    #1 $finish;
  end
endmodule"#;
        let p = program(text).unwrap();
        assert_eq!(p.reset_polarity, ResetPolarity::ActiveLow);
        assert_eq!(p.reset_signal, "rst_n");
        assert!(!p.uses_apply_input);
        assert_eq!(p.value_before("ab", 16), Some(1));
        assert_eq!(p.value_before("ab", 26), Some(2));
        assert_eq!(p.finish_time, 21);
        let ports = vec!["clk".to_string(), "rst_n".to_string(), "ab".to_string()];
        assert_eq!(p.signal_for_port("ab", &ports).as_deref(), Some("ab"));
    }

    #[test]
    fn extension_appends_sampled_vectors() {
        let mut p = program(DETECTOR_SAMPLE_TB).unwrap();
        let before = p.posedge_times().count();
        p.extend_with_vectors(&[("inp".into(), 1)], &[Bits::new(0, 1), Bits::new(1, 1)]);
        let edges: Vec<u64> = p.posedge_times().collect();
        assert_eq!(edges.len(), before + 2);
        assert_eq!(p.value_before("inp", edges[before]), Some(0));
        assert_eq!(p.value_before("inp", edges[before + 1]), Some(1));
    }
}
