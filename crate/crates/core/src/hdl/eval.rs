//! Two-state evaluation of expressions and procedural statements.
//!
//! Widths follow a simplified self-determined rule: arithmetic widens to the
//! wider operand (plus a carry bit for addition), comparisons and logical
//! operators yield one bit, and every store truncates to the target width.

use std::collections::HashMap;

use thiserror::Error;

use super::ast::{BinaryOp, Expr, LValue, Stmt, UnaryOp};
use super::Loc;
use crate::bits::mask;

pub const UNSIZED_WIDTH: u32 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Value {
    pub bits: u64,
    pub width: u32,
}

impl Value {
    pub fn new(bits: u64, width: u32) -> Self {
        let width = width.clamp(1, 64);
        Value {
            bits: bits & mask(width),
            width,
        }
    }

    pub fn truthy(self) -> bool {
        self.bits != 0
    }

    fn bool(b: bool) -> Self {
        Value::new(b as u64, 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unknown identifier `{name}` at {loc}")]
    UnknownIdent { name: String, loc: Loc },
    #[error("cannot evaluate {what} at {loc}")]
    Unsupported { what: String, loc: Loc },
    #[error("statement budget exhausted")]
    Budget,
}

/// Read access to named values.
pub trait Scope {
    fn lookup(&self, name: &str) -> Option<Value>;
    /// Least significant declared index, for bit and part selects.
    fn lsb(&self, _name: &str) -> u32 {
        0
    }
    /// Called with the bits of `name` (relative to its lsb) an expression
    /// actually consumed.
    fn note_read(&self, _name: &str, _bits: u64) {}
}

impl Scope for HashMap<String, Value> {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.get(name).copied()
    }
}

pub fn eval_expr(expr: &Expr, scope: &dyn Scope) -> Result<Value, EvalError> {
    Ok(match expr {
        Expr::Ident(name, loc) => {
            let v = scope.lookup(name).ok_or_else(|| EvalError::UnknownIdent {
                name: name.clone(),
                loc: *loc,
            })?;
            scope.note_read(name, u64::MAX);
            v
        }
        Expr::Number(lit, _) => Value::new(lit.value, lit.width.unwrap_or(UNSIZED_WIDTH)),
        Expr::Str(_) => {
            return Err(EvalError::Unsupported {
                what: "a string operand".into(),
                loc: Loc::default(),
            })
        }
        Expr::Unary(op, a) => {
            let a = eval_expr(a, scope)?;
            let m = mask(a.width);
            match op {
                UnaryOp::Not => Value::bool(!a.truthy()),
                UnaryOp::BitNot => Value::new(!a.bits, a.width),
                UnaryOp::Neg => Value::new(a.bits.wrapping_neg(), a.width),
                UnaryOp::Plus => a,
                UnaryOp::RedAnd => Value::bool(a.bits == m),
                UnaryOp::RedOr => Value::bool(a.bits != 0),
                UnaryOp::RedXor => Value::bool(a.bits.count_ones() % 2 == 1),
                UnaryOp::RedNand => Value::bool(a.bits != m),
                UnaryOp::RedNor => Value::bool(a.bits == 0),
                UnaryOp::RedXnor => Value::bool(a.bits.count_ones() % 2 == 0),
            }
        }
        Expr::Binary(op, a, b) => {
            let a = eval_expr(a, scope)?;
            let b = eval_expr(b, scope)?;
            apply_binary(*op, a, b)
        }
        Expr::Ternary(c, a, b) => {
            let c = eval_expr(c, scope)?;
            let a = eval_expr(a, scope)?;
            let b = eval_expr(b, scope)?;
            let w = a.width.max(b.width);
            Value::new(if c.truthy() { a.bits } else { b.bits }, w)
        }
        Expr::Concat(parts) => {
            let mut bits = 0u64;
            let mut width = 0u32;
            for p in parts {
                let v = eval_expr(p, scope)?;
                bits = (bits << v.width) | v.bits;
                width += v.width;
            }
            Value::new(bits, width)
        }
        Expr::Replicate(n, parts) => {
            let n = eval_expr(n, scope)?.bits;
            let inner = eval_expr(&Expr::Concat(parts.clone()), scope)?;
            let mut bits = 0u64;
            let mut width = 0u32;
            for _ in 0..n.min(64) {
                bits = (bits << inner.width) | inner.bits;
                width += inner.width;
            }
            Value::new(bits, width)
        }
        Expr::Index(name, idx, loc) => {
            let v = scope.lookup(name).ok_or_else(|| EvalError::UnknownIdent {
                name: name.clone(),
                loc: *loc,
            })?;
            let i = eval_expr(idx, scope)?.bits;
            let shift = i.saturating_sub(scope.lsb(name) as u64);
            if shift < 64 {
                scope.note_read(name, 1 << shift);
            }
            Value::new(if shift >= 64 { 0 } else { v.bits >> shift }, 1)
        }
        Expr::Slice(name, msb, lsb, loc) => {
            let v = scope.lookup(name).ok_or_else(|| EvalError::UnknownIdent {
                name: name.clone(),
                loc: *loc,
            })?;
            let (hi, lo) = ((*msb).max(*lsb), (*msb).min(*lsb));
            let shift = lo.saturating_sub(scope.lsb(name));
            scope.note_read(name, mask(hi - lo + 1).checked_shl(shift).unwrap_or(0));
            Value::new(v.bits >> shift, hi - lo + 1)
        }
    })
}

pub fn apply_binary(op: BinaryOp, a: Value, b: Value) -> Value {
    use BinaryOp::*;
    let w = a.width.max(b.width);
    match op {
        Add => Value::new(a.bits.wrapping_add(b.bits), (w + 1).min(64)),
        Sub => Value::new(a.bits.wrapping_sub(b.bits), w),
        Mul => Value::new(a.bits.wrapping_mul(b.bits), (a.width + b.width).min(64)),
        Div => Value::new(a.bits.checked_div(b.bits).unwrap_or(0), w),
        Mod => Value::new(a.bits.checked_rem(b.bits).unwrap_or(0), w),
        Eq | CaseEq => Value::bool(a.bits == b.bits),
        Ne | CaseNe => Value::bool(a.bits != b.bits),
        Lt => Value::bool(a.bits < b.bits),
        Le => Value::bool(a.bits <= b.bits),
        Gt => Value::bool(a.bits > b.bits),
        Ge => Value::bool(a.bits >= b.bits),
        LogAnd => Value::bool(a.truthy() && b.truthy()),
        LogOr => Value::bool(a.truthy() || b.truthy()),
        BitAnd => Value::new(a.bits & b.bits, w),
        BitOr => Value::new(a.bits | b.bits, w),
        BitXor => Value::new(a.bits ^ b.bits, w),
        BitXnor => Value::new(!(a.bits ^ b.bits), w),
        Shl => Value::new(if b.bits >= 64 { 0 } else { a.bits << b.bits }, a.width),
        Shr => Value::new(if b.bits >= 64 { 0 } else { a.bits >> b.bits }, a.width),
    }
}

/// Mutable variable store used while executing procedural code. Each slot
/// remembers the source line of the assignment that produced its value.
#[derive(Clone, Debug, Default)]
pub struct Store {
    slots: HashMap<String, Slot>,
    widths: HashMap<String, (u32, u32)>,
    consts: std::collections::HashSet<String>,
    /// Deferred (nonblocking) writes, applied by [`Store::commit`].
    pending: Vec<(String, Slot)>,
    /// Signals whose reads are recorded, with their offset in `reads`.
    watched: Option<std::sync::Arc<HashMap<String, u32>>>,
    reads: std::cell::Cell<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub value: Value,
    pub origin: Option<u32>,
}

impl Store {
    /// Declares a variable with its width and lsb index, initialised to 0.
    pub fn declare(&mut self, name: &str, width: u32, lsb: u32) {
        self.widths.insert(name.to_string(), (width.max(1), lsb));
        self.slots.entry(name.to_string()).or_insert(Slot {
            value: Value::new(0, width),
            origin: None,
        });
    }

    /// Declares a read-only named constant (parameter).
    pub fn declare_const(&mut self, name: &str, value: u64, width: u32) {
        self.declare(name, width, 0);
        self.set(name, value);
        self.consts.insert(name.to_string());
    }

    pub fn is_const(&self, name: &str) -> bool {
        self.consts.contains(name)
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.widths.contains_key(name)
    }

    pub fn set(&mut self, name: &str, bits: u64) {
        let w = self.width(name);
        self.slots.insert(
            name.to_string(),
            Slot {
                value: Value::new(bits, w),
                origin: None,
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<Slot> {
        self.slots.get(name).copied()
    }

    pub fn width(&self, name: &str) -> u32 {
        self.widths.get(name).map(|w| w.0).unwrap_or(UNSIZED_WIDTH)
    }

    pub fn snapshot(&self) -> HashMap<String, Slot> {
        self.slots.clone()
    }

    /// Applies deferred writes in program order.
    pub fn commit(&mut self) {
        for (name, slot) in std::mem::take(&mut self.pending) {
            self.slots.insert(name, slot);
        }
    }

    /// Starts recording reads of `signals`; bit `i` of signal `name` maps
    /// to bit `offset + i` of [`Store::reads`].
    pub fn watch(&mut self, signals: HashMap<String, u32>) {
        self.watched = Some(std::sync::Arc::new(signals));
        self.reads.set(0);
    }

    /// Watched bits read since the store was cloned or watching began.
    pub fn reads(&self) -> u64 {
        self.reads.get()
    }

    pub fn discard_pending(&mut self) {
        self.pending.clear();
    }

    /// Writes `value` into `lhs`. Whole-variable writes keep `origin`.
    pub fn write(&mut self, lhs: &LValue, value: Value, origin: Option<u32>, deferred: bool) -> Result<(), EvalError> {
        match lhs {
            LValue::Ident(name, loc) => {
                self.require(name, *loc)?;
                let slot = Slot {
                    value: Value::new(value.bits, self.width(name)),
                    origin,
                };
                self.put(name, slot, deferred);
            }
            LValue::Index(name, idx, loc) => {
                self.require(name, *loc)?;
                let i = eval_expr(idx, self)?.bits;
                let shift = i.saturating_sub(self.lsb(name) as u64);
                if shift < 64 {
                    let cur = self.current(name);
                    let bits = (cur.bits & !(1 << shift)) | ((value.bits & 1) << shift);
                    let slot = Slot {
                        value: Value::new(bits, cur.width),
                        origin,
                    };
                    self.put(name, slot, deferred);
                }
            }
            LValue::Slice(name, msb, lsb, loc) => {
                self.require(name, *loc)?;
                let (hi, lo) = ((*msb).max(*lsb), (*msb).min(*lsb));
                let shift = lo.saturating_sub(self.lsb(name));
                let m = mask(hi - lo + 1) << shift;
                let cur = self.current(name);
                let bits = (cur.bits & !m) | ((value.bits << shift) & m);
                let slot = Slot {
                    value: Value::new(bits, cur.width),
                    origin,
                };
                self.put(name, slot, deferred);
            }
            LValue::Concat(parts) => {
                let mut offset = 0u32;
                for part in parts.iter().rev() {
                    let w = self.lvalue_width(part);
                    let piece = Value::new(value.bits >> offset.min(63), w);
                    self.write(part, piece, origin, deferred)?;
                    offset += w;
                }
            }
        }
        Ok(())
    }

    fn lvalue_width(&self, lhs: &LValue) -> u32 {
        match lhs {
            LValue::Ident(n, _) => self.width(n),
            LValue::Index(..) => 1,
            LValue::Slice(_, m, l, _) => m.abs_diff(*l) + 1,
            LValue::Concat(parts) => parts.iter().map(|p| self.lvalue_width(p)).sum(),
        }
    }

    /// Value including any pending write, so partial nonblocking writes compose.
    fn current(&self, name: &str) -> Value {
        self.pending
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.value)
            .or_else(|| self.slots.get(name).map(|s| s.value))
            .unwrap_or(Value::new(0, self.width(name)))
    }

    fn put(&mut self, name: &str, slot: Slot, deferred: bool) {
        if deferred {
            self.pending.push((name.to_string(), slot));
        } else {
            self.slots.insert(name.to_string(), slot);
        }
    }

    fn require(&self, name: &str, loc: Loc) -> Result<(), EvalError> {
        if self.is_declared(name) {
            Ok(())
        } else {
            Err(EvalError::UnknownIdent {
                name: name.to_string(),
                loc,
            })
        }
    }
}

impl Scope for Store {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.slots.get(name).map(|s| s.value)
    }

    fn note_read(&self, name: &str, bits: u64) {
        if let Some(offset) = self.watched.as_ref().and_then(|w| w.get(name)) {
            let used = bits & mask(self.width(name));
            self.reads
                .set(self.reads.get() | used.checked_shl(*offset).unwrap_or(0));
        }
    }

    fn lsb(&self, name: &str) -> u32 {
        self.widths.get(name).map(|w| w.1).unwrap_or(0)
    }
}

/// Source line credited for a value computed by `expr` on line `line`:
/// plain variable copies inherit the origin of the copied variable, falling
/// back to the copy itself when that variable has no recorded origin.
fn origin_of(expr: &Expr, store: &Store, line: u32) -> Option<u32> {
    match expr {
        Expr::Ident(name, _) if store.is_declared(name) && !store.is_const(name) => {
            store.get(name).and_then(|s| s.origin).or(Some(line))
        }
        _ => Some(line),
    }
}

/// Executes synthesizable procedural code (no delays, calls or loops).
///
/// Blocking writes land immediately; nonblocking writes are deferred until
/// [`Store::commit`].
pub fn exec_rtl(stmt: &Stmt, store: &mut Store) -> Result<(), EvalError> {
    match stmt {
        Stmt::Block(stmts) => {
            for s in stmts {
                exec_rtl(s, store)?;
            }
        }
        Stmt::If {
            cond,
            then_branch,
            else_branch,
            ..
        } => {
            if eval_expr(cond, store)?.truthy() {
                exec_rtl(then_branch, store)?;
            } else if let Some(e) = else_branch {
                exec_rtl(e, store)?;
            }
        }
        Stmt::Case {
            selector,
            arms,
            default,
            ..
        } => {
            let sel = eval_expr(selector, store)?;
            for arm in arms {
                for label in &arm.labels {
                    let l = eval_expr(label, store)?;
                    if l.bits == sel.bits {
                        return exec_rtl(&arm.body, store);
                    }
                }
            }
            if let Some(d) = default {
                exec_rtl(d, store)?;
            }
        }
        Stmt::Assign {
            lhs,
            rhs,
            blocking,
            loc,
        } => {
            let v = eval_expr(rhs, store)?;
            let origin = origin_of(rhs, store, loc.line);
            store.write(lhs, v, origin, !*blocking)?;
        }
        Stmt::Null => {}
        other => {
            return Err(EvalError::Unsupported {
                what: "a testbench-only statement in RTL".into(),
                loc: stmt_loc(other),
            })
        }
    }
    Ok(())
}

pub fn stmt_loc(stmt: &Stmt) -> Loc {
    match stmt {
        Stmt::If { loc, .. }
        | Stmt::Case { loc, .. }
        | Stmt::Assign { loc, .. }
        | Stmt::Delay { loc, .. }
        | Stmt::WaitEdge { loc, .. }
        | Stmt::Call { loc, .. }
        | Stmt::SysCall { loc, .. }
        | Stmt::For { loc, .. }
        | Stmt::Repeat { loc, .. }
        | Stmt::Forever { loc, .. } => *loc,
        Stmt::Block(stmts) => stmts.first().map(stmt_loc).unwrap_or_default(),
        Stmt::Null => Loc::default(),
    }
}
