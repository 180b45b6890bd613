//! Syntax tree for the supported Verilog subset.
//!
//! Source locations are carried on nodes but never participate in equality,
//! so a module re-parsed from its rendering compares equal to the original.

use serde::{Deserialize, Serialize};

use super::Loc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Input,
    Output,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortDecl {
    pub name: String,
    pub direction: Direction,
    /// `[msb:lsb]`; `None` for a scalar.
    pub range: Option<(u32, u32)>,
    /// `output reg` ports.
    pub is_reg: bool,
    pub loc: Loc,
}

impl PortDecl {
    pub fn width(&self) -> u32 {
        range_width(self.range)
    }
}

pub fn range_width(range: Option<(u32, u32)>) -> u32 {
    match range {
        None => 1,
        Some((msb, lsb)) => msb.abs_diff(lsb) + 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Parameter,
    Localparam,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    pub kind: ParamKind,
    pub range: Option<(u32, u32)>,
    /// Constant-folded value.
    pub value: u64,
    pub loc: Loc,
}

impl ParamDecl {
    pub fn width(&self) -> Option<u32> {
        self.range.map(|r| range_width(Some(r)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetKind {
    Reg,
    Wire,
    Integer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDecl {
    pub name: String,
    pub kind: NetKind,
    pub range: Option<(u32, u32)>,
    pub loc: Loc,
}

impl NetDecl {
    pub fn width(&self) -> u32 {
        match self.kind {
            NetKind::Integer => 32,
            _ => range_width(self.range),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Edge {
    Posedge,
    Negedge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sensitivity {
    /// `@(posedge clk)`
    PosedgeClk { clock: String },
    /// `@(posedge clk or posedge rst)` / `@(posedge clk or negedge rst_n)`
    PosedgeClkOrReset {
        clock: String,
        reset: String,
        reset_edge: Edge,
    },
    /// `@*`, `@(*)` or a plain signal list.
    Combinational,
}

impl Sensitivity {
    pub fn is_clocked(&self) -> bool {
        !matches!(self, Sensitivity::Combinational)
    }

    pub fn clock(&self) -> Option<&str> {
        match self {
            Sensitivity::PosedgeClk { clock } | Sensitivity::PosedgeClkOrReset { clock, .. } => Some(clock),
            Sensitivity::Combinational => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlwaysBlock {
    pub sensitivity: Sensitivity,
    pub body: Stmt,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContinuousAssign {
    pub lhs: LValue,
    pub rhs: Expr,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDecl {
    pub name: String,
    pub ports: Vec<PortDecl>,
    pub params: Vec<ParamDecl>,
    pub nets: Vec<NetDecl>,
    pub always_blocks: Vec<AlwaysBlock>,
    pub assigns: Vec<ContinuousAssign>,
    pub loc: Loc,
}

impl ModuleDecl {
    pub fn port(&self, name: &str) -> Option<&PortDecl> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&ParamDecl> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn net(&self, name: &str) -> Option<&NetDecl> {
        self.nets.iter().find(|n| n.name == name)
    }

    pub fn inputs(&self) -> impl Iterator<Item = &PortDecl> {
        self.ports.iter().filter(|p| p.direction == Direction::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &PortDecl> {
        self.ports.iter().filter(|p| p.direction == Direction::Output)
    }

    /// Width of a port or net, if declared.
    pub fn signal_width(&self, name: &str) -> Option<u32> {
        self.port(name)
            .map(PortDecl::width)
            .or_else(|| self.net(name).map(NetDecl::width))
    }

    /// Least significant index of a declared range (for bit selects).
    pub fn signal_lsb(&self, name: &str) -> u32 {
        let range = self
            .port(name)
            .map(|p| p.range)
            .or_else(|| self.net(name).map(|n| n.range))
            .flatten();
        range.map(|(m, l)| m.min(l)).unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Base {
    Binary,
    Decimal,
    Hex,
    Octal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Literal {
    pub value: u64,
    pub width: Option<u32>,
    pub base: Base,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Not,
    BitNot,
    Neg,
    Plus,
    RedAnd,
    RedOr,
    RedXor,
    RedNand,
    RedNor,
    RedXnor,
}

impl UnaryOp {
    pub fn as_str(self) -> &'static str {
        match self {
            UnaryOp::Not => "!",
            UnaryOp::BitNot => "~",
            UnaryOp::Neg => "-",
            UnaryOp::Plus => "+",
            UnaryOp::RedAnd => "&",
            UnaryOp::RedOr => "|",
            UnaryOp::RedXor => "^",
            UnaryOp::RedNand => "~&",
            UnaryOp::RedNor => "~|",
            UnaryOp::RedXnor => "~^",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    CaseEq,
    CaseNe,
    Lt,
    Le,
    Gt,
    Ge,
    LogAnd,
    LogOr,
    BitAnd,
    BitOr,
    BitXor,
    BitXnor,
    Shl,
    Shr,
}

impl BinaryOp {
    pub fn as_str(self) -> &'static str {
        use BinaryOp::*;
        match self {
            Add => "+",
            Sub => "-",
            Mul => "*",
            Div => "/",
            Mod => "%",
            Eq => "==",
            Ne => "!=",
            CaseEq => "===",
            CaseNe => "!==",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            LogAnd => "&&",
            LogOr => "||",
            BitAnd => "&",
            BitOr => "|",
            BitXor => "^",
            BitXnor => "~^",
            Shl => "<<",
            Shr => ">>",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        use BinaryOp::*;
        match self {
            Mul | Div | Mod => 10,
            Add | Sub => 9,
            Shl | Shr => 8,
            Lt | Le | Gt | Ge => 7,
            Eq | Ne | CaseEq | CaseNe => 6,
            BitAnd => 5,
            BitXor | BitXnor => 4,
            BitOr => 3,
            LogAnd => 2,
            LogOr => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Ident(String, Loc),
    Number(Literal, Loc),
    Str(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
    Concat(Vec<Expr>),
    Replicate(Box<Expr>, Vec<Expr>),
    Index(String, Box<Expr>, Loc),
    Slice(String, u32, u32, Loc),
}

impl Expr {
    pub fn ident(name: &str) -> Expr {
        Expr::Ident(name.to_string(), Loc::default())
    }

    pub fn sized(value: u64, width: u32) -> Expr {
        Expr::Number(
            Literal {
                value,
                width: Some(width),
                base: Base::Binary,
            },
            Loc::default(),
        )
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// Calls `f` on every identifier referenced by this expression.
    pub fn visit_idents<'a>(&'a self, f: &mut impl FnMut(&'a str, Loc)) {
        match self {
            Expr::Ident(n, loc) => f(n, *loc),
            Expr::Index(n, i, loc) => {
                f(n, *loc);
                i.visit_idents(f);
            }
            Expr::Slice(n, _, _, loc) => f(n, *loc),
            Expr::Number(..) | Expr::Str(_) => {}
            Expr::Unary(_, a) => a.visit_idents(f),
            Expr::Binary(_, a, b) => {
                a.visit_idents(f);
                b.visit_idents(f);
            }
            Expr::Ternary(c, a, b) => {
                c.visit_idents(f);
                a.visit_idents(f);
                b.visit_idents(f);
            }
            Expr::Concat(parts) => parts.iter().for_each(|p| p.visit_idents(f)),
            Expr::Replicate(n, parts) => {
                n.visit_idents(f);
                parts.iter().for_each(|p| p.visit_idents(f));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LValue {
    Ident(String, Loc),
    Index(String, Box<Expr>, Loc),
    Slice(String, u32, u32, Loc),
    Concat(Vec<LValue>),
}

impl LValue {
    pub fn ident(name: &str) -> LValue {
        LValue::Ident(name.to_string(), Loc::default())
    }

    /// Base names written by this target, left to right.
    pub fn targets(&self) -> Vec<&str> {
        match self {
            LValue::Ident(n, _) | LValue::Index(n, _, _) | LValue::Slice(n, _, _, _) => vec![n],
            LValue::Concat(parts) => parts.iter().flat_map(|p| p.targets()).collect(),
        }
    }

    pub fn loc(&self) -> Loc {
        match self {
            LValue::Ident(_, l) | LValue::Index(_, _, l) | LValue::Slice(_, _, _, l) => *l,
            LValue::Concat(parts) => parts.first().map(LValue::loc).unwrap_or_default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseArm {
    pub labels: Vec<Expr>,
    pub body: Stmt,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stmt {
    Block(Vec<Stmt>),
    If {
        cond: Expr,
        then_branch: Box<Stmt>,
        else_branch: Option<Box<Stmt>>,
        loc: Loc,
    },
    Case {
        selector: Expr,
        arms: Vec<CaseArm>,
        default: Option<Box<Stmt>>,
        loc: Loc,
    },
    Assign {
        lhs: LValue,
        rhs: Expr,
        blocking: bool,
        loc: Loc,
    },
    Null,
    // Procedural constructs accepted only in testbenches.
    Delay {
        amount: u64,
        stmt: Option<Box<Stmt>>,
        loc: Loc,
    },
    WaitEdge {
        edge: Edge,
        signal: String,
        loc: Loc,
    },
    Call {
        name: String,
        args: Vec<Expr>,
        loc: Loc,
    },
    SysCall {
        name: String,
        args: Vec<Expr>,
        loc: Loc,
    },
    For {
        init: Box<Stmt>,
        cond: Expr,
        step: Box<Stmt>,
        body: Box<Stmt>,
        loc: Loc,
    },
    Repeat {
        count: Expr,
        body: Box<Stmt>,
        loc: Loc,
    },
    Forever {
        body: Box<Stmt>,
        loc: Loc,
    },
}

impl Stmt {
    /// Visits this statement and all nested statements, pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        f(self);
        match self {
            Stmt::Block(stmts) => stmts.iter().for_each(|s| s.walk(f)),
            Stmt::If {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.walk(f);
                if let Some(e) = else_branch {
                    e.walk(f);
                }
            }
            Stmt::Case { arms, default, .. } => {
                arms.iter().for_each(|a| a.body.walk(f));
                if let Some(d) = default {
                    d.walk(f);
                }
            }
            Stmt::Delay { stmt: Some(s), .. } => s.walk(f),
            Stmt::For { init, step, body, .. } => {
                init.walk(f);
                step.walk(f);
                body.walk(f);
            }
            Stmt::Repeat { body, .. } | Stmt::Forever { body, .. } => body.walk(f),
            _ => {}
        }
    }
}
