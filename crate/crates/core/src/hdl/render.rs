//! Pretty-printer producing source text that parses back to the same tree.

use std::fmt::Write;

use super::ast::*;

pub fn render_module(m: &ModuleDecl) -> String {
    let mut out = String::new();
    let _ = write!(out, "module {}", m.name);
    if m.ports.is_empty() {
        out.push_str("();\n");
    } else {
        out.push_str("(\n");
        for (i, p) in m.ports.iter().enumerate() {
            let dir = match p.direction {
                Direction::Input => "input",
                Direction::Output if p.is_reg => "output reg",
                Direction::Output => "output",
            };
            let sep = if i + 1 == m.ports.len() { "" } else { "," };
            let _ = writeln!(out, "  {dir}{} {}{sep}", range_text(p.range), p.name);
        }
        out.push_str(");\n");
    }
    for p in &m.params {
        let kw = match p.kind {
            ParamKind::Parameter => "parameter",
            ParamKind::Localparam => "localparam",
        };
        let value = match p.width() {
            Some(w) => format!("{w}'d{}", p.value),
            None => p.value.to_string(),
        };
        let _ = writeln!(out, "  {kw}{} {} = {value};", range_text(p.range), p.name);
    }
    for n in &m.nets {
        let kw = match n.kind {
            NetKind::Reg => "reg",
            NetKind::Wire => "wire",
            NetKind::Integer => "integer",
        };
        let _ = writeln!(out, "  {kw}{} {};", range_text(n.range), n.name);
    }
    for a in &m.assigns {
        let _ = writeln!(out, "  assign {} = {};", lvalue(&a.lhs), expr(&a.rhs));
    }
    for b in &m.always_blocks {
        let sens = match &b.sensitivity {
            Sensitivity::PosedgeClk { clock } => format!("@(posedge {clock})"),
            Sensitivity::PosedgeClkOrReset {
                clock,
                reset,
                reset_edge,
            } => format!("@(posedge {clock} or {} {reset})", edge(*reset_edge)),
            Sensitivity::Combinational => "@(*)".to_string(),
        };
        let _ = write!(out, "  always {sens}");
        stmt_tail(&mut out, &b.body, 1);
    }
    out.push_str("endmodule\n");
    out
}

fn range_text(range: Option<(u32, u32)>) -> String {
    match range {
        Some((m, l)) => format!(" [{m}:{l}]"),
        None => String::new(),
    }
}

fn edge(e: Edge) -> &'static str {
    match e {
        Edge::Posedge => "posedge",
        Edge::Negedge => "negedge",
    }
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

/// Writes a statement that follows a header on the same line (`always ...`,
/// `if (...)`, a case label): blocks open inline, others go on the next line.
fn stmt_tail(out: &mut String, s: &Stmt, level: usize) {
    if let Stmt::Block(_) = s {
        out.push(' ');
        stmt_inline(out, s, level);
    } else {
        out.push('\n');
        stmt(out, s, level + 1);
    }
}

fn stmt(out: &mut String, s: &Stmt, level: usize) {
    indent(out, level);
    stmt_inline(out, s, level);
}

fn stmt_inline(out: &mut String, s: &Stmt, level: usize) {
    match s {
        Stmt::Block(stmts) => {
            out.push_str("begin\n");
            for inner in stmts {
                stmt(out, inner, level + 1);
            }
            indent(out, level);
            out.push_str("end\n");
        }
        Stmt::If {
            cond,
            then_branch,
            else_branch,
            ..
        } => {
            let _ = write!(out, "if ({})", expr(cond));
            stmt_tail(out, then_branch, level);
            if let Some(e) = else_branch {
                indent(out, level);
                out.push_str("else");
                if let Stmt::If { .. } = e.as_ref() {
                    out.push(' ');
                    stmt_inline(out, e, level);
                } else {
                    stmt_tail(out, e, level);
                }
            }
        }
        Stmt::Case {
            selector,
            arms,
            default,
            ..
        } => {
            let _ = writeln!(out, "case ({})", expr(selector));
            for arm in arms {
                indent(out, level + 1);
                let labels: Vec<String> = arm.labels.iter().map(expr).collect();
                let _ = write!(out, "{}:", labels.join(", "));
                stmt_tail(out, &arm.body, level + 1);
            }
            if let Some(d) = default {
                indent(out, level + 1);
                out.push_str("default:");
                stmt_tail(out, d, level + 1);
            }
            indent(out, level);
            out.push_str("endcase\n");
        }
        Stmt::Assign { lhs, rhs, blocking, .. } => {
            let op = if *blocking { "=" } else { "<=" };
            let _ = writeln!(out, "{} {op} {};", lvalue(lhs), expr(rhs));
        }
        Stmt::Null => out.push_str(";\n"),
        Stmt::Delay { amount, stmt, .. } => match stmt {
            None => {
                let _ = writeln!(out, "#{amount};");
            }
            Some(s) => {
                let _ = write!(out, "#{amount} ");
                stmt_inline(out, s, level);
            }
        },
        Stmt::WaitEdge { edge: e, signal, .. } => {
            let _ = writeln!(out, "@({} {signal});", edge(*e));
        }
        Stmt::Call { name, args, .. } | Stmt::SysCall { name, args, .. } => {
            if args.is_empty() {
                let _ = writeln!(out, "{name};");
            } else {
                let a: Vec<String> = args.iter().map(expr).collect();
                let _ = writeln!(out, "{name}({});", a.join(", "));
            }
        }
        Stmt::For {
            init, cond, step, body, ..
        } => {
            let _ = write!(
                out,
                "for ({}; {}; {})",
                simple_assign(init),
                expr(cond),
                simple_assign(step)
            );
            stmt_tail(out, body, level);
        }
        Stmt::Repeat { count, body, .. } => {
            let _ = write!(out, "repeat ({})", expr(count));
            stmt_tail(out, body, level);
        }
        Stmt::Forever { body, .. } => {
            out.push_str("forever");
            stmt_tail(out, body, level);
        }
    }
}

fn simple_assign(s: &Stmt) -> String {
    match s {
        Stmt::Assign { lhs, rhs, .. } => format!("{} = {}", lvalue(lhs), expr(rhs)),
        _ => String::new(),
    }
}

pub fn lvalue(l: &LValue) -> String {
    match l {
        LValue::Ident(n, _) => n.clone(),
        LValue::Index(n, i, _) => format!("{n}[{}]", expr(i)),
        LValue::Slice(n, m, l, _) => format!("{n}[{m}:{l}]"),
        LValue::Concat(parts) => {
            let p: Vec<String> = parts.iter().map(lvalue).collect();
            format!("{{{}}}", p.join(", "))
        }
    }
}

pub fn literal(lit: &Literal) -> String {
    let digits = match lit.base {
        Base::Binary => format!("b{:b}", lit.value),
        Base::Decimal => format!("d{}", lit.value),
        Base::Hex => format!("h{:x}", lit.value),
        Base::Octal => format!("o{:o}", lit.value),
    };
    match (lit.width, lit.base) {
        (None, Base::Decimal) => lit.value.to_string(),
        (None, _) => format!("'{digits}"),
        (Some(w), Base::Binary) => format!("{w}'b{:0>width$b}", lit.value, width = w as usize),
        (Some(w), _) => format!("{w}'{digits}"),
    }
}

/// Renders an expression; compound operands are parenthesised so that the
/// text re-parses to the same tree regardless of precedence.
pub fn expr(e: &Expr) -> String {
    match e {
        Expr::Ident(n, _) => n.clone(),
        Expr::Number(lit, _) => literal(lit),
        Expr::Str(s) => format!("\"{s}\""),
        Expr::Unary(op, a) => format!("{}{}", op.as_str(), operand(a)),
        Expr::Binary(op, a, b) => format!("{} {} {}", operand(a), op.as_str(), operand(b)),
        Expr::Ternary(c, a, b) => format!("{} ? {} : {}", operand(c), operand(a), operand(b)),
        Expr::Concat(parts) => {
            let p: Vec<String> = parts.iter().map(expr).collect();
            format!("{{{}}}", p.join(", "))
        }
        Expr::Replicate(n, parts) => {
            let p: Vec<String> = parts.iter().map(expr).collect();
            format!("{{{}{{{}}}}}", operand(n), p.join(", "))
        }
        Expr::Index(n, i, _) => format!("{n}[{}]", expr(i)),
        Expr::Slice(n, m, l, _) => format!("{n}[{m}:{l}]"),
    }
}

fn operand(e: &Expr) -> String {
    match e {
        Expr::Binary(..) | Expr::Ternary(..) | Expr::Unary(..) => format!("({})", expr(e)),
        _ => expr(e),
    }
}
