//! Recovers an explicit state machine from RTL by locating the state
//! register and then evaluating the module for every (state, input) pair.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use super::{FsmModel, Guard, Signal, StateDef, StateId, Style, Transition, TransitionId};
use crate::bits::Bits;
use crate::hdl::ast::{BinaryOp, Expr, ModuleDecl, NetKind, Stmt};
use crate::hdl::detect_reset;
use crate::hdl::eval::{eval_expr, exec_rtl, EvalError, Store};

/// Largest total input width whose vectors are enumerated.
pub const MAX_ENUM_INPUT_WIDTH: u32 = 16;
pub const MAX_STATES: usize = 256;
const SETTLE_LIMIT: usize = 64;
/// First synthetic line number handed to states without source provenance.
const SYNTHETIC_BASE_LINE: u32 = 17;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no state register found (a reg assigned in a clocked block and used as a case selector or compared with parameters)")]
    NoStateRegisterFound,
    #[error("several state register candidates: {}", candidates.join(", "))]
    MultipleStateRegisters { candidates: Vec<String> },
    #[error("state encoding is not constant: {0}")]
    NonConstantEncoding(String),
    #[error("module has no clocked always block")]
    NoClock,
    #[error("module has no recognisable reset input")]
    NoReset,
    #[error("cannot represent guards: {0}")]
    UnsupportedGuard(String),
    #[error("outputs differ between inputs that take {from} to {to}")]
    NonUniformMealyOutput { from: String, to: String },
    #[error("register `{0}` is clocked but is not the state register")]
    UnsupportedRegister(String),
    #[error("combinational logic does not settle (state {state}, input {input})")]
    CombinationalLoop { state: String, input: String },
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("more than {MAX_STATES} states")]
    TooManyStates,
}

impl ExtractError {
    pub fn code(&self) -> &'static str {
        match self {
            ExtractError::NoStateRegisterFound => "FSM-NOREG",
            ExtractError::MultipleStateRegisters { .. } => "FSM-MULTIREG",
            ExtractError::NonConstantEncoding(_) => "FSM-ENCODING",
            ExtractError::NoClock => "FSM-CLOCK",
            ExtractError::NoReset => "FSM-RESET",
            ExtractError::UnsupportedGuard(_) => "FSM-GUARD",
            ExtractError::NonUniformMealyOutput { .. } => "FSM-MEALY",
            ExtractError::UnsupportedRegister(_) => "FSM-REGISTER",
            ExtractError::CombinationalLoop { .. } => "FSM-LOOP",
            ExtractError::Eval(_) => "FSM-EVAL",
            ExtractError::TooManyStates => "FSM-STATES",
        }
    }
}

/// What one clock edge does from a given state under a given input.
#[derive(Clone, Copy)]
struct Step {
    next: u64,
    origin: Option<u32>,
    output: Bits,
    /// Input-vector bits the evaluation looked at.
    reads: u64,
}

struct Machine<'a> {
    dut: &'a ModuleDecl,
    base: Store,
    reg: String,
    reset: String,
    reset_level: u64,
    inputs: Vec<Signal>,
    outputs: Vec<Signal>,
}

impl Machine<'_> {
    fn store_for(&self, state: u64, input: u64, in_reset: bool) -> Store {
        let mut store = self.base.clone();
        store.set(&self.reg, state);
        let reset = if in_reset {
            self.reset_level
        } else {
            1 - self.reset_level
        };
        store.set(&self.reset, reset);
        let total: u32 = self.inputs.iter().map(|s| s.width).sum();
        let mut offset = total;
        for s in &self.inputs {
            offset -= s.width;
            store.set(&s.name, Bits::new(input, total.max(1)).slice(offset, s.width).value());
        }
        store
    }

    fn settle(&self, store: &mut Store) -> Result<bool, EvalError> {
        for _ in 0..SETTLE_LIMIT {
            let before = store.snapshot();
            for a in &self.dut.assigns {
                let v = eval_expr(&a.rhs, store)?;
                store.write(&a.lhs, v, Some(a.loc.line), false)?;
            }
            for b in self.dut.always_blocks.iter().filter(|b| !b.sensitivity.is_clocked()) {
                exec_rtl(&b.body, store)?;
            }
            if store.snapshot() == before {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn clock(&self, store: &mut Store) -> Result<(), EvalError> {
        for b in self.dut.always_blocks.iter().filter(|b| b.sensitivity.is_clocked()) {
            exec_rtl(&b.body, store)?;
        }
        store.commit();
        Ok(())
    }

    fn read_outputs(&self, store: &Store) -> Bits {
        let parts: Vec<Bits> = self
            .outputs
            .iter()
            .map(|s| Bits::new(store.get(&s.name).map(|v| v.value.bits).unwrap_or(0), s.width))
            .collect();
        Bits::concat(parts)
    }

    fn step(&self, state: u64, input: u64, in_reset: bool) -> Result<Step, ExtractError> {
        let mut store = self.store_for(state, input, in_reset);
        if !self.settle(&mut store)? {
            return Err(ExtractError::CombinationalLoop {
                state: format!("{state}"),
                input: format!("{input}"),
            });
        }
        let output = self.read_outputs(&store);
        self.clock(&mut store)?;
        let slot = store.get(&self.reg).expect("state register declared");
        Ok(Step {
            next: slot.value.bits,
            origin: slot.origin,
            output,
            reads: store.reads(),
        })
    }
}

/// Identifiers used as the selector of a `case` statement.
fn case_selectors(dut: &ModuleDecl) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for b in &dut.always_blocks {
        b.body.walk(&mut |s| {
            if let Stmt::Case {
                selector: Expr::Ident(n, _),
                ..
            } = s
            {
                out.insert(n.clone());
            }
        });
    }
    out
}

/// Pairs (register, parameter) compared with `==`, `!=`, `===` or `!==`.
fn compared_params(dut: &ModuleDecl) -> Vec<(String, String)> {
    fn visit(e: &Expr, dut: &ModuleDecl, out: &mut Vec<(String, String)>) {
        match e {
            Expr::Binary(op, a, b) => {
                if matches!(op, BinaryOp::Eq | BinaryOp::Ne | BinaryOp::CaseEq | BinaryOp::CaseNe) {
                    if let (Expr::Ident(x, _), Expr::Ident(y, _)) = (a.as_ref(), b.as_ref()) {
                        if dut.param(y).is_some() && dut.param(x).is_none() {
                            out.push((x.clone(), y.clone()));
                        } else if dut.param(x).is_some() && dut.param(y).is_none() {
                            out.push((y.clone(), x.clone()));
                        }
                    }
                }
                visit(a, dut, out);
                visit(b, dut, out);
            }
            Expr::Unary(_, a) => visit(a, dut, out),
            Expr::Ternary(c, a, b) => {
                visit(c, dut, out);
                visit(a, dut, out);
                visit(b, dut, out);
            }
            Expr::Concat(parts) => parts.iter().for_each(|p| visit(p, dut, out)),
            Expr::Replicate(n, parts) => {
                visit(n, dut, out);
                parts.iter().for_each(|p| visit(p, dut, out));
            }
            Expr::Index(_, i, _) => visit(i, dut, out),
            _ => {}
        }
    }
    let mut out = Vec::new();
    let mut exprs: Vec<&Expr> = dut.assigns.iter().map(|a| &a.rhs).collect();
    for b in &dut.always_blocks {
        b.body.walk(&mut |s| match s {
            Stmt::If { cond, .. } => exprs.push(cond),
            Stmt::Assign { rhs, .. } => exprs.push(rhs),
            Stmt::Case { selector, .. } => exprs.push(selector),
            _ => {}
        });
    }
    for e in exprs {
        visit(e, dut, &mut out);
    }
    out
}

fn written_in(dut: &ModuleDecl, clocked: bool) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for b in dut
        .always_blocks
        .iter()
        .filter(|b| b.sensitivity.is_clocked() == clocked)
    {
        b.body.walk(&mut |s| {
            if let Stmt::Assign { lhs, .. } = s {
                out.extend(lhs.targets().into_iter().map(String::from));
            }
        });
    }
    if !clocked {
        for a in &dut.assigns {
            out.extend(a.lhs.targets().into_iter().map(String::from));
        }
    }
    out
}

fn find_state_register(dut: &ModuleDecl) -> Result<String, ExtractError> {
    let clocked = written_in(dut, true);
    let comb = written_in(dut, false);
    let selectors = case_selectors(dut);
    let compared: BTreeSet<String> = compared_params(dut).into_iter().map(|p| p.0).collect();
    let candidates: Vec<&String> = clocked
        .iter()
        .filter(|r| !comb.contains(*r))
        .filter(|r| selectors.contains(*r) || compared.contains(*r))
        .collect();
    let both: Vec<&String> = candidates
        .iter()
        .copied()
        .filter(|r| selectors.contains(*r) && compared.contains(*r))
        .collect();
    let pick = if both.is_empty() { candidates } else { both };
    match pick.as_slice() {
        [] => Err(ExtractError::NoStateRegisterFound),
        [one] => Ok((*one).clone()),
        many => Err(ExtractError::MultipleStateRegisters {
            candidates: many.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

/// Case labels of every `case (reg)` statement, which must be constants.
fn state_case_labels(dut: &ModuleDecl, reg: &str, store: &Store) -> Result<Vec<(u64, Option<String>)>, ExtractError> {
    let mut labels = Vec::new();
    let mut bad = None;
    for b in &dut.always_blocks {
        b.body.walk(&mut |s| {
            if let Stmt::Case {
                selector: Expr::Ident(n, _),
                arms,
                ..
            } = s
            {
                if n != reg {
                    return;
                }
                for arm in arms {
                    for l in &arm.labels {
                        let mut constant = true;
                        l.visit_idents(&mut |id, _| constant &= dut.param(id).is_some());
                        if !constant {
                            bad.get_or_insert_with(|| crate::hdl::render::expr(l));
                            continue;
                        }
                        let name = match l {
                            Expr::Ident(p, _) => Some(p.clone()),
                            _ => None,
                        };
                        match eval_expr(l, store) {
                            Ok(v) => labels.push((v.bits, name)),
                            Err(_) => {
                                bad.get_or_insert_with(|| crate::hdl::render::expr(l));
                            }
                        }
                    }
                }
            }
        });
    }
    match bad {
        Some(text) => Err(ExtractError::NonConstantEncoding(text)),
        None => Ok(labels),
    }
}

/// Builds the explicit machine for `dut`.
///
/// States are the closure of the reset value, every `case (state)` label and
/// every parameter compared with the state register under the next-state
/// function. State ids follow ascending encoding.
pub fn extract_fsm(dut: &ModuleDecl) -> Result<FsmModel, ExtractError> {
    let clock = dut
        .always_blocks
        .iter()
        .find_map(|b| b.sensitivity.clock())
        .ok_or(ExtractError::NoClock)?
        .to_string();
    let reset = detect_reset(dut).ok_or(ExtractError::NoReset)?;
    let reg = find_state_register(dut)?;
    if let Some(other) = written_in(dut, true).into_iter().find(|r| *r != reg) {
        return Err(ExtractError::UnsupportedRegister(other));
    }
    let reg_width = dut.signal_width(&reg).unwrap_or(1);
    if reg_width > 16 {
        return Err(ExtractError::TooManyStates);
    }

    let mut base = Store::default();
    for p in &dut.params {
        base.declare_const(&p.name, p.value, p.width().unwrap_or(32));
    }
    for p in &dut.ports {
        base.declare(&p.name, p.width(), dut.signal_lsb(&p.name));
    }
    for n in &dut.nets {
        let lsb = if n.kind == NetKind::Integer {
            0
        } else {
            dut.signal_lsb(&n.name)
        };
        base.declare(&n.name, n.width(), lsb);
    }

    let inputs: Vec<Signal> = dut
        .inputs()
        .filter(|p| p.name != clock && p.name != reset.signal)
        .map(|p| Signal::new(p.name.clone(), p.width()))
        .collect();
    let outputs: Vec<Signal> = dut.outputs().map(|p| Signal::new(p.name.clone(), p.width())).collect();
    let iw: u32 = inputs.iter().map(|s| s.width).sum();
    if iw > MAX_ENUM_INPUT_WIDTH {
        return Err(ExtractError::UnsupportedGuard(format!(
            "{iw} input bits exceed the enumeration limit of {MAX_ENUM_INPUT_WIDTH}"
        )));
    }

    let mut offset = iw;
    let mut watched = HashMap::new();
    for s in &inputs {
        offset -= s.width;
        watched.insert(s.name.clone(), offset);
    }
    base.watch(watched);
    let machine = Machine {
        dut,
        base,
        reg: reg.clone(),
        reset: reset.signal.clone(),
        reset_level: reset.polarity.asserted_level(),
        inputs: inputs.clone(),
        outputs: outputs.clone(),
    };

    // The reset value must not depend on the prior state or the inputs.
    let all_ones = crate::bits::mask(reg_width);
    let r0 = machine.step(0, 0, true)?;
    let r1 = machine.step(all_ones, crate::bits::mask(iw), true)?;
    if r0.next != r1.next {
        return Err(ExtractError::NonConstantEncoding(format!(
            "reset value of `{reg}` depends on the prior state or inputs"
        )));
    }
    let reset_value = r0.next;
    let reset_line = r0.origin;

    // Seed values and their parameter names.
    let mut names: BTreeMap<u64, String> = BTreeMap::new();
    let mut seeds: BTreeSet<u64> = BTreeSet::from([reset_value]);
    for (v, name) in state_case_labels(dut, &reg, &machine.base)? {
        seeds.insert(v);
        if let Some(n) = name {
            names.entry(v).or_insert(n);
        }
    }
    for (r, p) in compared_params(dut) {
        if r == reg {
            let v = dut.param(&p).map(|d| d.value).unwrap_or(0) & crate::bits::mask(reg_width);
            seeds.insert(v);
            names.entry(v).or_insert(p);
        }
    }

    // Closure under the next-state function.
    let vectors = 1u64 << iw;
    let mut steps: BTreeMap<u64, Vec<Step>> = BTreeMap::new();
    let mut work: Vec<u64> = seeds.iter().copied().collect();
    let mut known = seeds.clone();
    while let Some(s) = work.pop() {
        if steps.contains_key(&s) {
            continue;
        }
        // Vectors agreeing on every input bit an evaluation read share its
        // result, so each evaluation fills a whole cube.
        let mut row: Vec<Option<Step>> = vec![None; vectors as usize];
        for v in 0..vectors {
            if row[v as usize].is_some() {
                continue;
            }
            let step = machine.step(s, v, false).map_err(|e| match e {
                ExtractError::CombinationalLoop { .. } => ExtractError::CombinationalLoop {
                    state: names.get(&s).cloned().unwrap_or_else(|| format!("S{s}")),
                    input: Bits::new(v, iw).to_binary(),
                },
                other => other,
            })?;
            if known.insert(step.next) {
                if known.len() > MAX_STATES {
                    return Err(ExtractError::TooManyStates);
                }
                work.push(step.next);
            }
            let free = (vectors - 1) & !step.reads;
            let base_v = v & !free;
            let mut sub = free;
            loop {
                row[(base_v | sub) as usize] = Some(step);
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & free;
            }
        }
        let row: Vec<Step> = row.into_iter().map(|s| s.expect("every vector filled")).collect();
        steps.insert(s, row);
    }

    let values: Vec<u64> = steps.keys().copied().collect();
    let id_of: HashMap<u64, StateId> = values.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let label = |v: u64| names.get(&v).cloned().unwrap_or_else(|| format!("S{v}"));

    // Group vectors by (from, to).
    struct Group {
        on: Vec<bool>,
        line: Option<u32>,
        outputs: BTreeSet<Bits>,
    }
    let mut groups: BTreeMap<(StateId, StateId), Group> = BTreeMap::new();
    for (from_v, row) in &steps {
        let from = id_of[from_v];
        for (v, step) in row.iter().enumerate() {
            let to = id_of[&step.next];
            let g = groups.entry((from, to)).or_insert_with(|| Group {
                on: vec![false; vectors as usize],
                line: None,
                outputs: BTreeSet::new(),
            });
            g.on[v] = true;
            if let Some(l) = step.origin {
                g.line = Some(g.line.map_or(l, |cur: u32| cur.min(l)));
            }
            g.outputs.insert(step.output);
        }
    }

    let moore = steps.values().all(|row| row.iter().all(|s| s.output == row[0].output));
    let style = if moore { Style::Moore } else { Style::Mealy };
    if style == Style::Mealy {
        if let Some(((f, t), _)) = groups.iter().find(|(_, g)| g.outputs.len() > 1) {
            return Err(ExtractError::NonUniformMealyOutput {
                from: label(values[*f]),
                to: label(values[*t]),
            });
        }
    }

    let reset_state = id_of[&reset_value];
    let states: Vec<StateDef> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let incoming = groups
                .iter()
                .filter(|((_, t), _)| *t == i)
                .filter_map(|(_, g)| g.line)
                .min();
            let line = incoming
                .or(if i == reset_state { reset_line } else { None })
                .unwrap_or(SYNTHETIC_BASE_LINE + i as u32);
            StateDef {
                id: i,
                label: label(*v),
                encoding: Bits::new(*v, reg_width),
                line,
            }
        })
        .collect();

    let transitions: Vec<Transition> = groups
        .into_iter()
        .enumerate()
        .map(|(i, ((from, to), g))| Transition {
            id: TransitionId(i),
            from,
            to,
            guard: Guard::from_minterms(iw, &g.on),
            output: match style {
                Style::Mealy => g.outputs.iter().next().copied(),
                Style::Moore => None,
            },
            line: g.line.unwrap_or(states[to].line),
        })
        .collect();

    let moore_outputs = match style {
        Style::Moore => values.iter().map(|v| steps[v][0].output).collect(),
        Style::Mealy => Vec::new(),
    };

    Ok(FsmModel {
        name: dut.name.clone(),
        clock,
        reset: reset.signal,
        reset_polarity: reset.polarity,
        reset_async: reset.asynchronous,
        state_register: reg,
        port_order: dut.ports.iter().map(|p| p.name.clone()).collect(),
        inputs,
        outputs,
        states,
        reset_state,
        transitions,
        style,
        moore_outputs,
    })
}
