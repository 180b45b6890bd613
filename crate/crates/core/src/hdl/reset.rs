//! Reset signal and polarity detection for RTL modules.

use std::collections::HashMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ast::{Edge, Expr, ModuleDecl, Sensitivity, Stmt};
use super::eval::{eval_expr, Value};
use super::testbench::ResetPolarity;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResetInfo {
    pub signal: String,
    pub polarity: ResetPolarity,
    /// Reset appears in the clocked block's sensitivity list.
    pub asynchronous: bool,
    /// Set when polarity could not be decided from the code.
    pub warning: Option<String>,
}

pub(crate) fn reset_name_pattern() -> Regex {
    Regex::new(r"(?i)^(a?rst|a?reset)(_?n|_ni|_b)?$|(?i)^(rst|reset)_|(?i)_(rst|reset)(_?n)?$").unwrap()
}

/// Finds the reset input: the second signal of an edge-triggered sensitivity
/// list, else an input named like a reset. Polarity comes from the edge, or
/// from which reset level makes the guarding `if` condition true.
pub fn detect_reset(dut: &ModuleDecl) -> Option<ResetInfo> {
    for block in &dut.always_blocks {
        if let Sensitivity::PosedgeClkOrReset { reset, reset_edge, .. } = &block.sensitivity {
            let polarity = match reset_edge {
                Edge::Posedge => ResetPolarity::ActiveHigh,
                Edge::Negedge => ResetPolarity::ActiveLow,
            };
            return Some(ResetInfo {
                signal: reset.clone(),
                polarity,
                asynchronous: true,
                warning: None,
            });
        }
    }
    let re = reset_name_pattern();
    let clocks: Vec<&str> = dut.always_blocks.iter().filter_map(|b| b.sensitivity.clock()).collect();
    let name = dut
        .inputs()
        .filter(|p| p.width() == 1 && !clocks.contains(&p.name.as_str()))
        .find(|p| re.is_match(&p.name))?
        .name
        .clone();

    let mut votes_high = 0usize;
    let mut votes_low = 0usize;
    for block in dut.always_blocks.iter().filter(|b| b.sensitivity.is_clocked()) {
        block.body.walk(&mut |s| {
            if let Stmt::If { cond, .. } = s {
                if let Some(level) = asserting_level(cond, &name, dut) {
                    if level == 1 {
                        votes_high += 1;
                    } else {
                        votes_low += 1;
                    }
                }
            }
        });
    }
    let (polarity, warning) = if votes_high > votes_low {
        (ResetPolarity::ActiveHigh, None)
    } else if votes_low > votes_high {
        (ResetPolarity::ActiveLow, None)
    } else {
        (
            ResetPolarity::ActiveHigh,
            Some(format!("polarity of reset `{name}` is ambiguous; assuming active-high")),
        )
    };
    Some(ResetInfo {
        signal: name,
        polarity,
        asynchronous: false,
        warning,
    })
}

/// Level of `reset` that makes `cond` true, when `cond` mentions only the
/// reset and constants and is true for exactly one level.
fn asserting_level(cond: &Expr, reset: &str, dut: &ModuleDecl) -> Option<u64> {
    let mut only_reset = true;
    let mut mentions = false;
    cond.visit_idents(&mut |n, _| {
        if n == reset {
            mentions = true;
        } else if dut.param(n).is_none() {
            only_reset = false;
        }
    });
    if !mentions || !only_reset {
        return None;
    }
    let mut scope: HashMap<String, Value> = dut
        .params
        .iter()
        .map(|p| (p.name.clone(), Value::new(p.value, p.width().unwrap_or(32))))
        .collect();
    let mut truth = [false; 2];
    for level in 0..2u64 {
        scope.insert(reset.to_string(), Value::new(level, 1));
        truth[level as usize] = eval_expr(cond, &scope).ok()?.truthy();
    }
    match truth {
        [false, true] => Some(1),
        [true, false] => Some(0),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdl::{parse_module, tokenize};

    fn info(text: &str) -> Option<ResetInfo> {
        detect_reset(&parse_module(&tokenize(text).unwrap()).unwrap())
    }

    #[test]
    fn async_edges_decide_polarity() {
        let r = info("module m(input clk, input rst_n, output reg q);\nalways @(posedge clk or negedge rst_n) if (!rst_n) q <= 0; else q <= 1;\nendmodule").unwrap();
        assert_eq!(r.polarity, ResetPolarity::ActiveLow);
        assert!(r.asynchronous);
    }

    #[test]
    fn sync_condition_decides_polarity() {
        let r = info("module m(input clk, input reset, output reg q);\nalways @(posedge clk) if (reset == 1'b0) q <= 0; else q <= 1;\nendmodule").unwrap();
        assert_eq!(r.polarity, ResetPolarity::ActiveLow);
        assert_eq!(r.warning, None);
        let r = info("module m(input clk, input rst, output reg q);\nalways @(posedge clk) if (rst) q <= 0; else q <= ~q;\nendmodule").unwrap();
        assert_eq!(r.polarity, ResetPolarity::ActiveHigh);
    }

    #[test]
    fn undecidable_polarity_warns() {
        let r =
            info("module m(input clk, input rst, output reg q);\nalways @(posedge clk) q <= rst;\nendmodule").unwrap();
        assert_eq!(r.polarity, ResetPolarity::ActiveHigh);
        assert!(r.warning.is_some());
    }

    #[test]
    fn no_reset_input() {
        assert!(
            info("module m(input clk, input a, output reg q);\nalways @(posedge clk) q <= a;\nendmodule").is_none()
        );
    }
}
