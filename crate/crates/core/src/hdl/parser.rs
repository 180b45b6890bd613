//! Recursive-descent parser for RTL modules and testbench modules.

use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::eval::{eval_expr, Value, UNSIZED_WIDTH};
use super::lexer::{Keyword, Token, TokenKind};
use super::{FrontendError, Loc};

/// Parses an RTL module from a token stream.
pub fn parse_module(tokens: &[Token]) -> Result<ModuleDecl, FrontendError> {
    let mut p = Parser::new(tokens, Mode::Rtl);
    let module = p.rtl_module()?;
    p.expect_eof()?;
    check_module(&module)?;
    Ok(module)
}

/// Parses a testbench module (the constrained driver dialect).
pub fn parse_tb_module(tokens: &[Token]) -> Result<TbModule, FrontendError> {
    let mut p = Parser::new(tokens, Mode::Testbench);
    let tb = p.tb_module()?;
    p.expect_eof()?;
    Ok(tb)
}

/// Module instantiation inside a testbench.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub module: String,
    pub name: String,
    pub bindings: Vec<Binding>,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Binding {
    /// Named port (`.port(sig)`); `None` for positional bindings.
    pub port: Option<String>,
    pub signal: Option<Expr>,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskArg {
    pub name: String,
    pub range: Option<(u32, u32)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskDecl {
    pub name: String,
    pub args: Vec<TaskArg>,
    pub locals: Vec<NetDecl>,
    pub body: Stmt,
    pub loc: Loc,
}

/// Parsed testbench module, before interpretation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TbModule {
    pub name: String,
    /// True when the header has no ports (`module tb();` or `module tb;`).
    pub portless: bool,
    pub nets: Vec<NetDecl>,
    pub params: Vec<ParamDecl>,
    /// Declaration initialisers, e.g. `reg clk = 0;`.
    pub net_inits: Vec<(String, Expr)>,
    pub instances: Vec<Instance>,
    pub always: Vec<(Stmt, Loc)>,
    pub initials: Vec<(Stmt, Loc)>,
    pub tasks: Vec<TaskDecl>,
    pub loc: Loc,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Rtl,
    Testbench,
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    mode: Mode,
    consts: HashMap<String, Value>,
}

impl<'a> Parser<'a> {
    fn new(tokens: &'a [Token], mode: Mode) -> Self {
        Parser {
            tokens,
            pos: 0,
            mode,
            consts: HashMap::new(),
        }
    }

    // ---- token helpers -------------------------------------------------

    fn peek(&self) -> Option<&'a TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn peek_at(&self, offset: usize) -> Option<&'a TokenKind> {
        self.tokens.get(self.pos + offset).map(|t| &t.kind)
    }

    fn loc(&self) -> Loc {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|t| t.loc)
            .unwrap_or(Loc::new(1, 1))
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn found(&self) -> String {
        self.peek()
            .map(|k| k.to_string())
            .unwrap_or_else(|| "end of input".to_string())
    }

    fn error<T>(&self, expected: &str) -> Result<T, FrontendError> {
        Err(FrontendError::Parse {
            expected: expected.to_string(),
            found: self.found(),
            location: self.loc(),
        })
    }

    fn unsupported<T>(&self, name: &str) -> Result<T, FrontendError> {
        Err(FrontendError::UnsupportedConstruct {
            name: name.to_string(),
            location: self.loc(),
        })
    }

    fn is(&self, kind: &TokenKind) -> bool {
        self.peek() == Some(kind)
    }

    fn is_kw(&self, kw: Keyword) -> bool {
        self.peek() == Some(&TokenKind::Keyword(kw))
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.peek(), Some(TokenKind::Op(o)) if *o == op)
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.is(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: Keyword) -> bool {
        self.eat(&TokenKind::Keyword(kw))
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<Loc, FrontendError> {
        let loc = self.loc();
        if self.eat(&kind) {
            Ok(loc)
        } else {
            self.error(&kind.to_string())
        }
    }

    fn expect_kw(&mut self, kw: Keyword) -> Result<Loc, FrontendError> {
        self.expect(TokenKind::Keyword(kw))
    }

    fn expect_op(&mut self, op: &'static str) -> Result<(), FrontendError> {
        if self.eat_op(op) {
            Ok(())
        } else {
            self.error(&format!("`{op}`"))
        }
    }

    fn ident(&mut self) -> Result<(String, Loc), FrontendError> {
        let loc = self.loc();
        match self.peek() {
            Some(TokenKind::Ident(name)) => {
                self.pos += 1;
                Ok((name.clone(), loc))
            }
            _ => self.error("identifier"),
        }
    }

    fn expect_eof(&self) -> Result<(), FrontendError> {
        if self.pos < self.tokens.len() {
            self.error("end of input")
        } else {
            Ok(())
        }
    }

    // ---- RTL module ------------------------------------------------------

    fn rtl_module(&mut self) -> Result<ModuleDecl, FrontendError> {
        let loc = self.expect_kw(Keyword::Module)?;
        let (name, _) = self.ident()?;
        let mut module = ModuleDecl {
            name,
            ports: Vec::new(),
            params: Vec::new(),
            nets: Vec::new(),
            always_blocks: Vec::new(),
            assigns: Vec::new(),
            loc,
        };
        if self.eat(&TokenKind::Hash) {
            self.expect(TokenKind::LParen)?;
            loop {
                self.eat_kw(Keyword::Parameter);
                self.param_item(ParamKind::Parameter, None, &mut module.params)?;
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(TokenKind::RParen)?;
        }
        // Header names for non-ANSI style, in order.
        let mut header: Vec<(String, Loc)> = Vec::new();
        let mut ansi = false;
        if self.eat(&TokenKind::LParen) {
            if !self.is(&TokenKind::RParen) {
                if matches!(
                    self.peek(),
                    Some(TokenKind::Keyword(Keyword::Input | Keyword::Output | Keyword::Inout))
                ) {
                    ansi = true;
                    self.ansi_ports(&mut module)?;
                } else {
                    loop {
                        header.push(self.ident()?);
                        if !self.eat(&TokenKind::Comma) {
                            break;
                        }
                    }
                }
            }
            self.expect(TokenKind::RParen)?;
        }
        self.expect(TokenKind::Semi)?;

        let mut declared: HashMap<String, PortDecl> = HashMap::new();
        let mut reg_outputs: HashSet<String> = HashSet::new();
        while !self.is_kw(Keyword::Endmodule) {
            if self.peek().is_none() {
                return self.error("`endmodule`");
            }
            self.rtl_item(&mut module, ansi, &mut declared, &mut reg_outputs)?;
        }
        self.expect_kw(Keyword::Endmodule)?;

        if !ansi {
            for (hname, hloc) in &header {
                let Some(mut port) = declared.remove(hname) else {
                    return Err(FrontendError::Parse {
                        expected: format!("a direction declaration for port `{hname}`"),
                        found: "none".into(),
                        location: *hloc,
                    });
                };
                port.is_reg |= reg_outputs.contains(hname);
                port.loc = *hloc;
                module.ports.push(port);
            }
            if let Some((extra, port)) = declared.into_iter().next() {
                return Err(FrontendError::Parse {
                    expected: "a port listed in the module header".into(),
                    found: format!("identifier `{extra}`"),
                    location: port.loc,
                });
            }
        }
        Ok(module)
    }

    fn ansi_ports(&mut self, module: &mut ModuleDecl) -> Result<(), FrontendError> {
        let mut direction = Direction::Input;
        let mut range = None;
        let mut is_reg = false;
        loop {
            if let Some(TokenKind::Keyword(kw @ (Keyword::Input | Keyword::Output | Keyword::Inout))) = self.peek() {
                if *kw == Keyword::Inout {
                    return self.unsupported("inout");
                }
                self.pos += 1;
                direction = if *kw == Keyword::Input {
                    Direction::Input
                } else {
                    Direction::Output
                };
                is_reg = false;
                if self.eat_kw(Keyword::Reg) {
                    is_reg = true;
                } else if self.eat_kw(Keyword::Wire) {
                } else if self.is_kw(Keyword::Logic) {
                    return self.unsupported("logic");
                }
                if self.is_kw(Keyword::Signed) {
                    return self.unsupported("signed");
                }
                range = self.opt_range()?;
            }
            let (name, loc) = self.ident()?;
            module.ports.push(PortDecl {
                name,
                direction,
                range,
                is_reg: is_reg && direction == Direction::Output,
                loc,
            });
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        Ok(())
    }

    fn rtl_item(
        &mut self,
        module: &mut ModuleDecl,
        ansi: bool,
        declared: &mut HashMap<String, PortDecl>,
        reg_outputs: &mut HashSet<String>,
    ) -> Result<(), FrontendError> {
        let loc = self.loc();
        match self.peek() {
            Some(TokenKind::Keyword(kw @ (Keyword::Input | Keyword::Output))) => {
                if ansi {
                    return self.error("a module item (ports already declared in the header)");
                }
                let direction = if *kw == Keyword::Input {
                    Direction::Input
                } else {
                    Direction::Output
                };
                self.pos += 1;
                let is_reg = self.eat_kw(Keyword::Reg);
                if !is_reg {
                    self.eat_kw(Keyword::Wire);
                }
                let range = self.opt_range()?;
                loop {
                    let (name, nloc) = self.ident()?;
                    if declared.contains_key(&name) {
                        return Err(FrontendError::Parse {
                            expected: "unique port name".into(),
                            found: format!("duplicate `{name}`"),
                            location: nloc,
                        });
                    }
                    declared.insert(
                        name.clone(),
                        PortDecl {
                            name,
                            direction,
                            range,
                            is_reg: is_reg && direction == Direction::Output,
                            loc: nloc,
                        },
                    );
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(TokenKind::Semi)?;
            }
            Some(TokenKind::Keyword(Keyword::Inout)) => return self.unsupported("inout"),
            Some(TokenKind::Keyword(kw @ (Keyword::Reg | Keyword::Wire | Keyword::Integer))) => {
                let kind = match kw {
                    Keyword::Reg => NetKind::Reg,
                    Keyword::Wire => NetKind::Wire,
                    _ => NetKind::Integer,
                };
                self.pos += 1;
                if self.is_kw(Keyword::Signed) {
                    return self.unsupported("signed");
                }
                let range = if kind == NetKind::Integer {
                    None
                } else {
                    self.opt_range()?
                };
                loop {
                    let (name, nloc) = self.ident()?;
                    if self.is(&TokenKind::LBracket) {
                        return self.unsupported("memory array");
                    }
                    let is_port = declared.contains_key(&name) || (ansi && module.port(&name).is_some());
                    if is_port {
                        if kind == NetKind::Reg {
                            reg_outputs.insert(name.clone());
                        }
                    } else {
                        module.nets.push(NetDecl {
                            name: name.clone(),
                            kind,
                            range,
                            loc: nloc,
                        });
                    }
                    if self.eat_op("=") {
                        let rhs = self.expr()?;
                        if kind == NetKind::Wire {
                            module.assigns.push(ContinuousAssign {
                                lhs: LValue::Ident(name, nloc),
                                rhs,
                                loc: nloc,
                            });
                        }
                        // Register initialisers have no effect: every machine
                        // is brought up through its reset.
                    }
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(TokenKind::Semi)?;
            }
            Some(TokenKind::Keyword(kw @ (Keyword::Parameter | Keyword::Localparam))) => {
                let kind = if *kw == Keyword::Parameter {
                    ParamKind::Parameter
                } else {
                    ParamKind::Localparam
                };
                self.pos += 1;
                self.eat_kw(Keyword::Integer);
                let range = self.opt_range()?;
                loop {
                    self.param_item(kind, range, &mut module.params)?;
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(TokenKind::Semi)?;
            }
            Some(TokenKind::Keyword(Keyword::Assign)) => {
                self.pos += 1;
                loop {
                    let lhs = self.lvalue()?;
                    self.expect_op("=")?;
                    let rhs = self.expr()?;
                    module.assigns.push(ContinuousAssign { lhs, rhs, loc });
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(TokenKind::Semi)?;
            }
            Some(TokenKind::Keyword(Keyword::Always)) => {
                self.pos += 1;
                let sensitivity = self.sensitivity()?;
                let body = self.stmt()?;
                module.always_blocks.push(AlwaysBlock { sensitivity, body, loc });
            }
            Some(TokenKind::Keyword(kw)) => {
                let name = kw.as_str();
                return self.unsupported(name);
            }
            Some(TokenKind::Ident(_))
                if matches!(self.peek_at(1), Some(TokenKind::Ident(_)) | Some(TokenKind::Hash)) =>
            {
                return self.unsupported("module instantiation");
            }
            _ => return self.error("a module item"),
        }
        Ok(())
    }

    fn param_item(
        &mut self,
        kind: ParamKind,
        range: Option<(u32, u32)>,
        out: &mut Vec<ParamDecl>,
    ) -> Result<(), FrontendError> {
        let range = match range {
            Some(r) => Some(r),
            None => self.opt_range()?,
        };
        let (name, loc) = self.ident()?;
        self.expect_op("=")?;
        let value_expr = self.expr()?;
        let value = self.const_eval(&value_expr)?;
        let width = range.map(|r| range_width(Some(r))).unwrap_or(value.width);
        self.consts.insert(name.clone(), Value::new(value.bits, width));
        out.push(ParamDecl {
            name,
            kind,
            range,
            value: value.bits & crate::bits::mask(width),
            loc,
        });
        Ok(())
    }

    fn const_eval(&self, expr: &Expr) -> Result<Value, FrontendError> {
        eval_expr(expr, &self.consts).map_err(|e| FrontendError::Parse {
            expected: "a constant expression".into(),
            found: e.to_string(),
            location: self.loc(),
        })
    }

    fn const_u32(&mut self) -> Result<u32, FrontendError> {
        let e = self.expr()?;
        let v = self.const_eval(&e)?;
        u32::try_from(v.bits).or_else(|_| self.error("a small constant"))
    }

    fn opt_range(&mut self) -> Result<Option<(u32, u32)>, FrontendError> {
        if !self.eat(&TokenKind::LBracket) {
            return Ok(None);
        }
        let msb = self.const_u32()?;
        self.expect(TokenKind::Colon)?;
        let lsb = self.const_u32()?;
        self.expect(TokenKind::RBracket)?;
        if msb.abs_diff(lsb) >= 64 {
            return self.unsupported("vector wider than 64 bits");
        }
        Ok(Some((msb, lsb)))
    }

    fn sensitivity(&mut self) -> Result<Sensitivity, FrontendError> {
        self.expect(TokenKind::At)?;
        if self.eat_op("*") {
            return Ok(Sensitivity::Combinational);
        }
        self.expect(TokenKind::LParen)?;
        if self.eat_op("*") {
            self.expect(TokenKind::RParen)?;
            return Ok(Sensitivity::Combinational);
        }
        let mut edges: Vec<(Option<Edge>, String)> = Vec::new();
        loop {
            let edge = if self.eat_kw(Keyword::Posedge) {
                Some(Edge::Posedge)
            } else if self.eat_kw(Keyword::Negedge) {
                Some(Edge::Negedge)
            } else {
                None
            };
            let (name, _) = self.ident()?;
            edges.push((edge, name));
            if !(self.eat_kw(Keyword::Or) || self.eat(&TokenKind::Comma)) {
                break;
            }
        }
        self.expect(TokenKind::RParen)?;
        let with_edge: Vec<_> = edges.iter().filter(|(e, _)| e.is_some()).collect();
        if with_edge.is_empty() {
            return Ok(Sensitivity::Combinational);
        }
        if with_edge.len() != edges.len() {
            return self.unsupported("mixed edge and level sensitivity");
        }
        // The clock is the signal not named like a reset; fall back to the first.
        let is_resetish = |n: &str| {
            let l = n.to_ascii_lowercase();
            l.contains("rst") || l.contains("reset") || l.contains("clr")
        };
        match edges.as_slice() {
            [(Some(Edge::Posedge), clock)] => Ok(Sensitivity::PosedgeClk { clock: clock.clone() }),
            [(e1, a), (e2, b)] => {
                let (clk, rst, redge, cedge) = if is_resetish(a) && !is_resetish(b) {
                    (b, a, e1.unwrap(), e2.unwrap())
                } else {
                    (a, b, e2.unwrap(), e1.unwrap())
                };
                if cedge != Edge::Posedge {
                    return self.unsupported("negedge clock");
                }
                Ok(Sensitivity::PosedgeClkOrReset {
                    clock: clk.clone(),
                    reset: rst.clone(),
                    reset_edge: redge,
                })
            }
            [(Some(Edge::Negedge), _)] => self.unsupported("negedge clock"),
            _ => self.unsupported("sensitivity list with more than two edges"),
        }
    }

    // ---- statements ------------------------------------------------------

    fn stmt(&mut self) -> Result<Stmt, FrontendError> {
        let loc = self.loc();
        match self.peek() {
            Some(TokenKind::Keyword(Keyword::Begin)) => {
                self.pos += 1;
                if self.eat(&TokenKind::Colon) {
                    self.ident()?;
                }
                let mut stmts = Vec::new();
                while !self.is_kw(Keyword::End) {
                    if self.peek().is_none() {
                        return self.error("`end`");
                    }
                    if self.mode == Mode::Testbench
                        && matches!(self.peek(), Some(TokenKind::Keyword(Keyword::Integer | Keyword::Reg)))
                    {
                        // Block-local declarations are not part of the dialect.
                        return self.unsupported("declaration inside a procedural block");
                    }
                    stmts.push(self.stmt()?);
                }
                self.expect_kw(Keyword::End)?;
                if self.eat(&TokenKind::Colon) {
                    self.ident()?;
                }
                Ok(Stmt::Block(stmts))
            }
            Some(TokenKind::Keyword(Keyword::If)) => {
                self.pos += 1;
                self.expect(TokenKind::LParen)?;
                let cond = self.expr()?;
                self.expect(TokenKind::RParen)?;
                let then_branch = Box::new(self.stmt()?);
                let else_branch = if self.eat_kw(Keyword::Else) {
                    Some(Box::new(self.stmt()?))
                } else {
                    None
                };
                Ok(Stmt::If {
                    cond,
                    then_branch,
                    else_branch,
                    loc,
                })
            }
            Some(TokenKind::Keyword(Keyword::Case)) => {
                self.pos += 1;
                self.case_body(loc)
            }
            Some(TokenKind::Keyword(Keyword::Casez)) => self.unsupported("casez"),
            Some(TokenKind::Keyword(Keyword::Casex)) => self.unsupported("casex"),
            Some(TokenKind::Semi) => {
                self.pos += 1;
                Ok(Stmt::Null)
            }
            Some(TokenKind::Hash) => {
                if self.mode == Mode::Rtl {
                    return self.unsupported("delay");
                }
                self.pos += 1;
                let amount = self.delay_amount()?;
                if self.eat(&TokenKind::Semi) {
                    return Ok(Stmt::Delay {
                        amount,
                        stmt: None,
                        loc,
                    });
                }
                let inner = self.stmt()?;
                Ok(Stmt::Delay {
                    amount,
                    stmt: Some(Box::new(inner)),
                    loc,
                })
            }
            Some(TokenKind::At) => {
                if self.mode == Mode::Rtl {
                    return self.unsupported("event control inside a procedural block");
                }
                self.pos += 1;
                self.expect(TokenKind::LParen)?;
                let edge = if self.eat_kw(Keyword::Posedge) {
                    Edge::Posedge
                } else if self.eat_kw(Keyword::Negedge) {
                    Edge::Negedge
                } else {
                    return self.unsupported("level event control");
                };
                let (signal, _) = self.ident()?;
                self.expect(TokenKind::RParen)?;
                let wait = Stmt::WaitEdge { edge, signal, loc };
                if self.eat(&TokenKind::Semi) {
                    return Ok(wait);
                }
                let inner = self.stmt()?;
                Ok(Stmt::Block(vec![wait, inner]))
            }
            Some(TokenKind::SystemIdent(name)) => {
                if self.mode == Mode::Rtl {
                    return self.unsupported(name);
                }
                self.pos += 1;
                let args = self.call_args()?;
                self.expect(TokenKind::Semi)?;
                Ok(Stmt::SysCall {
                    name: name.clone(),
                    args,
                    loc,
                })
            }
            Some(TokenKind::Keyword(Keyword::For)) => {
                if self.mode == Mode::Rtl {
                    return self.unsupported("for");
                }
                self.pos += 1;
                self.expect(TokenKind::LParen)?;
                let init = self.assignment(true)?;
                self.expect(TokenKind::Semi)?;
                let cond = self.expr()?;
                self.expect(TokenKind::Semi)?;
                let step = self.assignment(true)?;
                self.expect(TokenKind::RParen)?;
                let body = self.stmt()?;
                Ok(Stmt::For {
                    init: Box::new(init),
                    cond,
                    step: Box::new(step),
                    body: Box::new(body),
                    loc,
                })
            }
            Some(TokenKind::Keyword(Keyword::Repeat)) => {
                if self.mode == Mode::Rtl {
                    return self.unsupported("repeat");
                }
                self.pos += 1;
                self.expect(TokenKind::LParen)?;
                let count = self.expr()?;
                self.expect(TokenKind::RParen)?;
                let body = self.stmt()?;
                Ok(Stmt::Repeat {
                    count,
                    body: Box::new(body),
                    loc,
                })
            }
            Some(TokenKind::Keyword(Keyword::Forever)) => {
                if self.mode == Mode::Rtl {
                    return self.unsupported("forever");
                }
                self.pos += 1;
                let body = self.stmt()?;
                Ok(Stmt::Forever {
                    body: Box::new(body),
                    loc,
                })
            }
            Some(TokenKind::Ident(name))
                if self.mode == Mode::Testbench
                    && matches!(self.peek_at(1), Some(TokenKind::LParen) | Some(TokenKind::Semi)) =>
            {
                self.pos += 1;
                let args = self.call_args()?;
                self.expect(TokenKind::Semi)?;
                Ok(Stmt::Call {
                    name: name.clone(),
                    args,
                    loc,
                })
            }
            Some(TokenKind::Ident(_)) | Some(TokenKind::LBrace) => {
                let s = self.assignment(false)?;
                self.expect(TokenKind::Semi)?;
                Ok(s)
            }
            Some(TokenKind::Keyword(kw)) => {
                let name = kw.as_str();
                if matches!(kw, Keyword::While | Keyword::Wait) {
                    self.unsupported(name)
                } else {
                    self.error("a statement")
                }
            }
            _ => self.error("a statement"),
        }
    }

    fn delay_amount(&mut self) -> Result<u64, FrontendError> {
        let e = if self.eat(&TokenKind::LParen) {
            let e = self.expr()?;
            self.expect(TokenKind::RParen)?;
            e
        } else {
            self.primary()?
        };
        Ok(self.const_eval(&e)?.bits)
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, FrontendError> {
        let mut args = Vec::new();
        if self.eat(&TokenKind::LParen) {
            if !self.is(&TokenKind::RParen) {
                loop {
                    args.push(self.expr()?);
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
            }
            self.expect(TokenKind::RParen)?;
        }
        Ok(args)
    }

    fn assignment(&mut self, blocking_only: bool) -> Result<Stmt, FrontendError> {
        let loc = self.loc();
        let lhs = self.lvalue()?;
        let blocking = if self.eat_op("=") {
            true
        } else if !blocking_only && self.eat_op("<=") {
            false
        } else {
            return self.error("`=` or `<=`");
        };
        if self.is(&TokenKind::Hash) {
            return self.unsupported("intra-assignment delay");
        }
        let rhs = self.expr()?;
        Ok(Stmt::Assign {
            lhs,
            rhs,
            blocking,
            loc,
        })
    }

    fn case_body(&mut self, loc: Loc) -> Result<Stmt, FrontendError> {
        self.expect(TokenKind::LParen)?;
        let selector = self.expr()?;
        self.expect(TokenKind::RParen)?;
        let mut arms = Vec::new();
        let mut default = None;
        let mut seen: HashSet<u64> = HashSet::new();
        while !self.is_kw(Keyword::Endcase) {
            if self.peek().is_none() {
                return self.error("`endcase`");
            }
            let arm_loc = self.loc();
            if self.eat_kw(Keyword::Default) {
                self.eat(&TokenKind::Colon);
                if default.is_some() {
                    return Err(FrontendError::Parse {
                        expected: "at most one default arm".into(),
                        found: "a second `default`".into(),
                        location: arm_loc,
                    });
                }
                default = Some(Box::new(self.stmt()?));
                continue;
            }
            let mut labels = Vec::new();
            loop {
                let label = self.expr()?;
                if let Ok(v) = eval_expr(&label, &self.consts) {
                    if !seen.insert(v.bits) {
                        return Err(FrontendError::Parse {
                            expected: "disjoint case labels".into(),
                            found: format!("duplicate label value {}", v.bits),
                            location: arm_loc,
                        });
                    }
                }
                labels.push(label);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(TokenKind::Colon)?;
            let body = self.stmt()?;
            arms.push(CaseArm {
                labels,
                body,
                loc: arm_loc,
            });
        }
        self.expect_kw(Keyword::Endcase)?;
        Ok(Stmt::Case {
            selector,
            arms,
            default,
            loc,
        })
    }

    fn lvalue(&mut self) -> Result<LValue, FrontendError> {
        if self.eat(&TokenKind::LBrace) {
            let mut parts = Vec::new();
            loop {
                parts.push(self.lvalue()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(TokenKind::RBrace)?;
            return Ok(LValue::Concat(parts));
        }
        let (name, loc) = self.ident()?;
        if self.eat(&TokenKind::LBracket) {
            let first = self.expr()?;
            if self.eat(&TokenKind::Colon) {
                let msb = u32::try_from(self.const_eval(&first)?.bits).unwrap_or(0);
                let lsb = self.const_u32()?;
                self.expect(TokenKind::RBracket)?;
                return Ok(LValue::Slice(name, msb, lsb, loc));
            }
            self.expect(TokenKind::RBracket)?;
            return Ok(LValue::Index(name, Box::new(first), loc));
        }
        Ok(LValue::Ident(name, loc))
    }

    // ---- expressions -----------------------------------------------------

    fn expr(&mut self) -> Result<Expr, FrontendError> {
        let cond = self.binary(0)?;
        if self.eat(&TokenKind::Question) {
            let a = self.expr()?;
            self.expect(TokenKind::Colon)?;
            let b = self.expr()?;
            return Ok(Expr::Ternary(Box::new(cond), Box::new(a), Box::new(b)));
        }
        Ok(cond)
    }

    fn peek_binary(&self) -> Option<BinaryOp> {
        let Some(TokenKind::Op(op)) = self.peek() else {
            return None;
        };
        use BinaryOp::*;
        Some(match *op {
            "+" => Add,
            "-" => Sub,
            "*" => Mul,
            "/" => Div,
            "%" => Mod,
            "==" => Eq,
            "!=" => Ne,
            "===" => CaseEq,
            "!==" => CaseNe,
            "<" => Lt,
            "<=" => Le,
            ">" => Gt,
            ">=" => Ge,
            "&&" => LogAnd,
            "||" => LogOr,
            "&" => BitAnd,
            "|" => BitOr,
            "^" => BitXor,
            "~^" | "^~" => BitXnor,
            "<<" | "<<<" => Shl,
            ">>" | ">>>" => Shr,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, FrontendError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binary() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FrontendError> {
        let op = match self.peek() {
            Some(TokenKind::Op(op)) => match *op {
                "!" => Some(UnaryOp::Not),
                "~" => Some(UnaryOp::BitNot),
                "-" => Some(UnaryOp::Neg),
                "+" => Some(UnaryOp::Plus),
                "&" => Some(UnaryOp::RedAnd),
                "|" => Some(UnaryOp::RedOr),
                "^" => Some(UnaryOp::RedXor),
                "~&" => Some(UnaryOp::RedNand),
                "~|" => Some(UnaryOp::RedNor),
                "~^" | "^~" => Some(UnaryOp::RedXnor),
                _ => None,
            },
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Unary(op, Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, FrontendError> {
        let loc = self.loc();
        match self.bump().map(|t| &t.kind) {
            Some(TokenKind::Number(raw)) => {
                let lit = parse_number(raw).ok_or_else(|| FrontendError::Parse {
                    expected: "a numeric literal of at most 64 bits".into(),
                    found: format!("number `{raw}`"),
                    location: loc,
                })?;
                Ok(Expr::Number(lit, loc))
            }
            Some(TokenKind::Str(s)) if self.mode == Mode::Testbench => Ok(Expr::Str(s.clone())),
            Some(TokenKind::Ident(name)) => {
                let name = name.clone();
                if self.eat(&TokenKind::LBracket) {
                    let first = self.expr()?;
                    if self.eat(&TokenKind::Colon) {
                        let msb = u32::try_from(self.const_eval(&first)?.bits).unwrap_or(0);
                        let lsb = self.const_u32()?;
                        self.expect(TokenKind::RBracket)?;
                        return Ok(Expr::Slice(name, msb, lsb, loc));
                    }
                    self.expect(TokenKind::RBracket)?;
                    return Ok(Expr::Index(name, Box::new(first), loc));
                }
                if self.is(&TokenKind::LParen) {
                    self.pos -= 1;
                    return self.unsupported("function call");
                }
                Ok(Expr::Ident(name, loc))
            }
            Some(TokenKind::SystemIdent(name)) => {
                let name = name.clone();
                self.pos -= 1;
                self.unsupported(&name)
            }
            Some(TokenKind::LParen) => {
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(e)
            }
            Some(TokenKind::LBrace) => {
                let first = self.expr()?;
                if self.eat(&TokenKind::LBrace) {
                    let mut parts = Vec::new();
                    loop {
                        parts.push(self.expr()?);
                        if !self.eat(&TokenKind::Comma) {
                            break;
                        }
                    }
                    self.expect(TokenKind::RBrace)?;
                    self.expect(TokenKind::RBrace)?;
                    return Ok(Expr::Replicate(Box::new(first), parts));
                }
                let mut parts = vec![first];
                while self.eat(&TokenKind::Comma) {
                    parts.push(self.expr()?);
                }
                self.expect(TokenKind::RBrace)?;
                Ok(Expr::Concat(parts))
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.error("an expression")
            }
        }
    }

    // ---- testbench module ------------------------------------------------

    fn tb_module(&mut self) -> Result<TbModule, FrontendError> {
        let loc = self.expect_kw(Keyword::Module)?;
        let (name, _) = self.ident()?;
        let mut portless = true;
        if self.eat(&TokenKind::LParen) {
            if !self.is(&TokenKind::RParen) {
                portless = false;
                while !self.is(&TokenKind::RParen) && self.peek().is_some() {
                    self.pos += 1;
                }
            }
            self.expect(TokenKind::RParen)?;
        }
        self.expect(TokenKind::Semi)?;
        let mut tb = TbModule {
            name,
            portless,
            nets: Vec::new(),
            params: Vec::new(),
            net_inits: Vec::new(),
            instances: Vec::new(),
            always: Vec::new(),
            initials: Vec::new(),
            tasks: Vec::new(),
            loc,
        };
        while !self.is_kw(Keyword::Endmodule) {
            if self.peek().is_none() {
                return self.error("`endmodule`");
            }
            self.tb_item(&mut tb)?;
        }
        self.expect_kw(Keyword::Endmodule)?;
        Ok(tb)
    }

    fn net_decl_list(&mut self, out: &mut Vec<NetDecl>, inits: &mut Vec<(String, Expr)>) -> Result<(), FrontendError> {
        let kind = match self.bump().map(|t| &t.kind) {
            Some(TokenKind::Keyword(Keyword::Reg)) => NetKind::Reg,
            Some(TokenKind::Keyword(Keyword::Wire)) => NetKind::Wire,
            Some(TokenKind::Keyword(Keyword::Integer)) => NetKind::Integer,
            _ => {
                self.pos -= 1;
                return self.error("a declaration");
            }
        };
        let range = if kind == NetKind::Integer {
            None
        } else {
            self.opt_range()?
        };
        loop {
            let (name, nloc) = self.ident()?;
            if self.is(&TokenKind::LBracket) {
                return self.unsupported("memory array");
            }
            if self.eat_op("=") {
                let init = self.expr()?;
                inits.push((name.clone(), init));
            }
            out.push(NetDecl {
                name,
                kind,
                range,
                loc: nloc,
            });
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        self.expect(TokenKind::Semi)?;
        Ok(())
    }

    fn tb_item(&mut self, tb: &mut TbModule) -> Result<(), FrontendError> {
        let loc = self.loc();
        match self.peek() {
            Some(TokenKind::Keyword(Keyword::Reg | Keyword::Wire | Keyword::Integer)) => {
                self.net_decl_list(&mut tb.nets, &mut tb.net_inits)?;
            }
            Some(TokenKind::Keyword(kw @ (Keyword::Parameter | Keyword::Localparam))) => {
                let kind = if *kw == Keyword::Parameter {
                    ParamKind::Parameter
                } else {
                    ParamKind::Localparam
                };
                self.pos += 1;
                self.eat_kw(Keyword::Integer);
                let range = self.opt_range()?;
                loop {
                    self.param_item(kind, range, &mut tb.params)?;
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(TokenKind::Semi)?;
            }
            Some(TokenKind::Keyword(Keyword::Always)) => {
                self.pos += 1;
                if self.is(&TokenKind::At) {
                    return self.unsupported("event-controlled always block in a testbench");
                }
                let body = self.stmt()?;
                tb.always.push((body, loc));
            }
            Some(TokenKind::Keyword(Keyword::Initial)) => {
                self.pos += 1;
                let body = self.stmt()?;
                tb.initials.push((body, loc));
            }
            Some(TokenKind::Keyword(Keyword::Task)) => {
                self.pos += 1;
                let task = self.task_decl(loc)?;
                tb.tasks.push(task);
            }
            Some(TokenKind::Ident(_)) => {
                let inst = self.instance(loc)?;
                tb.instances.push(inst);
            }
            Some(TokenKind::Keyword(kw)) => {
                let name = kw.as_str();
                return self.unsupported(name);
            }
            _ => return self.error("a testbench item"),
        }
        Ok(())
    }

    fn task_decl(&mut self, loc: Loc) -> Result<TaskDecl, FrontendError> {
        if matches!(self.peek(), Some(TokenKind::Ident(w)) if w == "automatic") {
            self.pos += 1;
        }
        let (name, _) = self.ident()?;
        let mut args = Vec::new();
        let mut locals = Vec::new();
        let mut ignored_inits = Vec::new();
        let parse_arg = |p: &mut Parser<'a>, args: &mut Vec<TaskArg>| -> Result<(), FrontendError> {
            p.expect_kw(Keyword::Input)?;
            if !p.eat_kw(Keyword::Reg) {
                p.eat_kw(Keyword::Integer);
            }
            let range = p.opt_range()?;
            loop {
                let (aname, _) = p.ident()?;
                args.push(TaskArg { name: aname, range });
                if !(p.is(&TokenKind::Comma) && matches!(p.peek_at(1), Some(TokenKind::Ident(_)))) {
                    break;
                }
                p.pos += 1;
            }
            Ok(())
        };
        if self.eat(&TokenKind::LParen) {
            if !self.is(&TokenKind::RParen) {
                loop {
                    parse_arg(self, &mut args)?;
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
            }
            self.expect(TokenKind::RParen)?;
        }
        self.expect(TokenKind::Semi)?;
        let mut body = Vec::new();
        while !self.is_kw(Keyword::Endtask) {
            match self.peek() {
                None => return self.error("`endtask`"),
                Some(TokenKind::Keyword(Keyword::Input)) => {
                    parse_arg(self, &mut args)?;
                    self.expect(TokenKind::Semi)?;
                }
                Some(TokenKind::Keyword(Keyword::Reg | Keyword::Integer)) => {
                    self.net_decl_list(&mut locals, &mut ignored_inits)?;
                }
                _ => body.push(self.stmt()?),
            }
        }
        self.expect_kw(Keyword::Endtask)?;
        let body = if body.len() == 1 {
            body.pop().unwrap()
        } else {
            Stmt::Block(body)
        };
        Ok(TaskDecl {
            name,
            args,
            locals,
            body,
            loc,
        })
    }

    fn instance(&mut self, loc: Loc) -> Result<Instance, FrontendError> {
        let (module, _) = self.ident()?;
        if self.eat(&TokenKind::Hash) {
            // Parameter overrides are accepted and ignored.
            self.expect(TokenKind::LParen)?;
            let mut depth = 1;
            while depth > 0 {
                match self.bump().map(|t| &t.kind) {
                    Some(TokenKind::LParen) => depth += 1,
                    Some(TokenKind::RParen) => depth -= 1,
                    None => return self.error("`)`"),
                    _ => {}
                }
            }
        }
        let (name, _) = self.ident()?;
        self.expect(TokenKind::LParen)?;
        let mut bindings = Vec::new();
        if !self.is(&TokenKind::RParen) {
            loop {
                let bloc = self.loc();
                if self.eat(&TokenKind::Dot) {
                    let (port, _) = self.ident()?;
                    self.expect(TokenKind::LParen)?;
                    let signal = if self.is(&TokenKind::RParen) {
                        None
                    } else {
                        Some(self.expr()?)
                    };
                    self.expect(TokenKind::RParen)?;
                    bindings.push(Binding {
                        port: Some(port),
                        signal,
                        loc: bloc,
                    });
                } else {
                    let signal = self.expr()?;
                    bindings.push(Binding {
                        port: None,
                        signal: Some(signal),
                        loc: bloc,
                    });
                }
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen)?;
        self.expect(TokenKind::Semi)?;
        Ok(Instance {
            module,
            name,
            bindings,
            loc,
        })
    }
}

/// Parses a numeric literal; x/z/? digits read as 0 under two-state logic.
pub fn parse_number(raw: &str) -> Option<Literal> {
    let clean: String = raw.chars().filter(|c| *c != '_').collect();
    let Some(q) = clean.find('\'') else {
        let value = clean.parse::<u64>().ok()?;
        return Some(Literal {
            value,
            width: None,
            base: Base::Decimal,
        });
    };
    let width = if q == 0 {
        None
    } else {
        let w: u32 = clean[..q].parse().ok()?;
        if w == 0 || w > 64 {
            return None;
        }
        Some(w)
    };
    let mut rest = &clean[q + 1..];
    if rest.starts_with(['s', 'S']) {
        rest = &rest[1..];
    }
    let mut chars = rest.chars();
    let base_char = chars.next()?;
    let digits: String = chars.collect();
    let (base, radix) = match base_char.to_ascii_lowercase() {
        'b' => (Base::Binary, 2),
        'd' => (Base::Decimal, 10),
        'h' => (Base::Hex, 16),
        'o' => (Base::Octal, 8),
        _ => return None,
    };
    if digits.is_empty() {
        return None;
    }
    let normalized: String = digits
        .chars()
        .map(|c| {
            if matches!(c, 'x' | 'X' | 'z' | 'Z' | '?') {
                '0'
            } else {
                c
            }
        })
        .collect();
    let value = u64::from_str_radix(&normalized, radix).ok()?;
    let value = match width {
        Some(w) => value & crate::bits::mask(w),
        None => value & crate::bits::mask(UNSIZED_WIDTH),
    };
    Some(Literal { value, width, base })
}

/// Structural invariants that need the whole module: unique port names and
/// declared references.
fn check_module(module: &ModuleDecl) -> Result<(), FrontendError> {
    let mut names: HashSet<&str> = HashSet::new();
    for port in &module.ports {
        if !names.insert(&port.name) {
            return Err(FrontendError::Parse {
                expected: "unique port name".into(),
                found: format!("duplicate `{}`", port.name),
                location: port.loc,
            });
        }
    }
    for net in &module.nets {
        if !names.insert(&net.name) {
            return Err(FrontendError::Parse {
                expected: "unique net name".into(),
                found: format!("duplicate `{}`", net.name),
                location: net.loc,
            });
        }
    }
    for param in &module.params {
        if !names.insert(&param.name) {
            return Err(FrontendError::Parse {
                expected: "unique parameter name".into(),
                found: format!("duplicate `{}`", param.name),
                location: param.loc,
            });
        }
    }
    let mut undeclared: Option<(String, Loc)> = None;
    let mut check = |name: &str, loc: Loc| {
        if undeclared.is_none() && !names.contains(name) {
            undeclared = Some((name.to_string(), loc));
        }
    };
    for a in &module.assigns {
        for t in a.lhs.targets() {
            check(t, a.lhs.loc());
        }
        a.rhs.visit_idents(&mut check);
    }
    for block in &module.always_blocks {
        if let Some(clock) = block.sensitivity.clock() {
            check(clock, block.loc);
        }
        if let Sensitivity::PosedgeClkOrReset { reset, .. } = &block.sensitivity {
            check(reset, block.loc);
        }
        block.body.walk(&mut |s| match s {
            Stmt::If { cond, .. } => cond.visit_idents(&mut check),
            Stmt::Case { selector, arms, .. } => {
                selector.visit_idents(&mut check);
                for arm in arms {
                    for l in &arm.labels {
                        l.visit_idents(&mut check);
                    }
                }
            }
            Stmt::Assign { lhs, rhs, .. } => {
                for t in lhs.targets() {
                    check(t, lhs.loc());
                }
                if let LValue::Index(_, i, _) = lhs {
                    i.visit_idents(&mut check);
                }
                rhs.visit_idents(&mut check);
            }
            _ => {}
        });
    }
    if let Some((name, loc)) = undeclared {
        return Err(FrontendError::Parse {
            expected: "a declared identifier".into(),
            found: format!("undeclared `{name}`"),
            location: loc,
        });
    }
    Ok(())
}
