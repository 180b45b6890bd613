//! Checks that a testbench follows the driver conventions requested from the
//! generator (module shape, dump commands, `apply_input`, reset polarity,
//! `$finish`) and binds correctly to the DUT.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::ModuleDecl;
use super::reset::detect_reset;
use super::testbench::{StimulusEvent, StimulusProgram};
use super::Loc;
use crate::diag::{Diagnostic, Severity};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Module is not a port-less `tb...` module.
    NotTbModule,
    MissingDumpCommands,
    NoApplyInput,
    PolarityMismatch,
    NoFinish,
    NoReset,
    NoClock,
    /// `apply_input` vector width differs from the DUT's data inputs.
    WidthMismatch,
    /// Instance connects a port the DUT does not have, or the wrong module.
    PortBinding,
}

impl ViolationKind {
    pub fn code(self) -> &'static str {
        match self {
            ViolationKind::NotTbModule => "TB1-MODULE",
            ViolationKind::MissingDumpCommands => "TB2-DUMP",
            ViolationKind::NoApplyInput => "TB3-APPLY",
            ViolationKind::PolarityMismatch => "TB4-POLARITY",
            ViolationKind::NoFinish => "TB5-FINISH",
            ViolationKind::NoReset => "TB-RESET",
            ViolationKind::NoClock => "TB-CLOCK",
            ViolationKind::WidthMismatch => "TB-WIDTH",
            ViolationKind::PortBinding => "TB-BIND",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            ViolationKind::MissingDumpCommands => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
    pub loc: Loc,
}

impl Violation {
    pub fn to_diagnostic(&self, file: &str) -> Diagnostic {
        let d = Diagnostic::error(
            file,
            self.loc.line,
            self.loc.col,
            self.kind.code(),
            self.message.clone(),
        );
        Diagnostic {
            severity: self.kind.severity(),
            ..d
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.message, self.kind.code())
    }
}

/// Names of DUT inputs that carry data (not clock or reset), in port order.
pub fn data_inputs(dut: &ModuleDecl) -> Vec<(String, u32)> {
    let clocks: Vec<&str> = dut.always_blocks.iter().filter_map(|b| b.sensitivity.clock()).collect();
    let reset = detect_reset(dut).map(|r| r.signal);
    dut.inputs()
        .filter(|p| !clocks.contains(&p.name.as_str()) && Some(&p.name) != reset.as_ref())
        .map(|p| (p.name.clone(), p.width()))
        .collect()
}

/// Returns every convention violation. An empty list means the testbench
/// can drive the DUT as intended.
pub fn validate_testbench_conventions(program: &StimulusProgram, dut: &ModuleDecl) -> Vec<Violation> {
    let mut out = Vec::new();
    let top = Loc::new(1, 1);
    let inst_loc = program.instance.as_ref().map(|i| Loc::new(i.line, 1)).unwrap_or(top);

    if !program.module_name.starts_with("tb") || !program.portless {
        out.push(Violation {
            kind: ViolationKind::NotTbModule,
            message: format!(
                "testbench module `{}` must be a port-less module named like `tb`",
                program.module_name
            ),
            loc: top,
        });
    }
    if !program.has_dump_commands {
        out.push(Violation {
            kind: ViolationKind::MissingDumpCommands,
            message: "first initial block lacks $fsdbDumpfile/$fsdbDumpvars".into(),
            loc: top,
        });
    }
    if !program.uses_apply_input {
        out.push(Violation {
            kind: ViolationKind::NoApplyInput,
            message: "inputs are not applied through an apply_input task".into(),
            loc: top,
        });
    }
    if let Some(info) = detect_reset(dut) {
        if info.polarity != program.reset_polarity {
            out.push(Violation {
                kind: ViolationKind::PolarityMismatch,
                message: format!(
                    "DUT reset `{}` is {:?} but the testbench drives it {:?}",
                    info.signal, info.polarity, program.reset_polarity
                ),
                loc: top,
            });
        }
    }

    match &program.instance {
        None => out.push(Violation {
            kind: ViolationKind::PortBinding,
            message: format!("module `{}` is never instantiated", dut.name),
            loc: top,
        }),
        Some(inst) => {
            if inst.module != dut.name {
                out.push(Violation {
                    kind: ViolationKind::PortBinding,
                    message: format!("instance of unknown module `{}` (expected `{}`)", inst.module, dut.name),
                    loc: inst_loc,
                });
            }
            for (i, b) in inst.bindings.iter().enumerate() {
                let loc = Loc::new(b.line, 1);
                match &b.port {
                    Some(port) if dut.port(port).is_none() => out.push(Violation {
                        kind: ViolationKind::PortBinding,
                        message: format!("module `{}` has no port `{port}`", dut.name),
                        loc,
                    }),
                    None if i >= dut.ports.len() => out.push(Violation {
                        kind: ViolationKind::PortBinding,
                        message: format!("too many positional connections for `{}`", dut.name),
                        loc,
                    }),
                    _ => {}
                }
                if let Some(sig) = &b.signal {
                    if !program.signals.iter().any(|(s, _)| s == sig) {
                        out.push(Violation {
                            kind: ViolationKind::PortBinding,
                            message: format!("connection uses undeclared signal `{sig}`"),
                            loc,
                        });
                    }
                }
            }
        }
    }

    let expected: u32 = data_inputs(dut).iter().map(|d| d.1).sum();
    if let Some(bad) = program.events.iter().find_map(|e| match &e.event {
        StimulusEvent::ApplyInput(b) if b.width() != expected => Some(b.width()),
        _ => None,
    }) {
        out.push(Violation {
            kind: ViolationKind::WidthMismatch,
            message: format!("apply_input takes {bad} bit(s) but the DUT has {expected} data input bit(s)"),
            loc: top,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdl::{parse_module, parse_testbench, tokenize};

    const FSM: &str = "module fsm(input clk, input rst, input inp, output out1, output out2);\n\
        reg [1:0] s;\n always @(posedge clk) if (rst) s <= 0; else s <= s + inp;\n\
        assign out1 = s[0];\n assign out2 = s[1];\nendmodule";

    fn detector_sample() -> StimulusProgram {
        let text = include_str!("../../tests/data/detector_sample_tb.v");
        parse_testbench(&tokenize(text).unwrap()).unwrap()
    }

    fn dut(text: &str) -> ModuleDecl {
        parse_module(&tokenize(text).unwrap()).unwrap()
    }

    #[test]
    fn detector_sample_is_clean() {
        assert_eq!(validate_testbench_conventions(&detector_sample(), &dut(FSM)), vec![]);
    }

    #[test]
    fn active_low_dut_flags_polarity() {
        let low = FSM
            .replace("input rst", "input rst_n")
            .replace("if (rst)", "if (!rst_n)");
        let v = validate_testbench_conventions(&detector_sample(), &dut(&low));
        assert!(v.iter().any(|v| v.kind == ViolationKind::PolarityMismatch));
    }

    #[test]
    fn missing_dump_is_warning() {
        let text = include_str!("../../tests/data/detector_sample_tb.v")
            .replace("$fsdbDumpfile(\"test.fsdb\");", "")
            .replace("$fsdbDumpvars;", "");
        let p = parse_testbench(&tokenize(&text).unwrap()).unwrap();
        let v = validate_testbench_conventions(&p, &dut(FSM));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::MissingDumpCommands);
        assert_eq!(v[0].kind.severity(), Severity::Warning);
    }

    #[test]
    fn unknown_port_is_named() {
        let v = validate_testbench_conventions(
            &detector_sample(),
            &dut(&FSM.replace("input inp", "input din").replace("+ inp", "+ din")),
        );
        assert!(v
            .iter()
            .any(|v| v.kind == ViolationKind::PortBinding && v.message.contains("`inp`")));
    }
}
