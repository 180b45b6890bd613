//! The compile step of the generation loop: everything that must hold before
//! a testbench can be simulated, reported as diagnostics.

use serde::{Deserialize, Serialize};

use crate::diag::Diagnostic;
use crate::hdl::{validate_testbench_conventions, ModuleDecl, SourceUnit};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileDiagnostics {
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

impl CompileDiagnostics {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }

    /// One line per diagnostic, errors first, suitable for feeding back to a
    /// generator verbatim.
    pub fn feedback_text(&self) -> String {
        self.errors
            .iter()
            .chain(&self.warnings)
            .map(|d| format!("{d}\n"))
            .collect()
    }
}

/// Parses `tb`, checks its conventions and its binding to `dut`.
pub fn compile_check(tb: &SourceUnit, dut: &ModuleDecl) -> CompileDiagnostics {
    let mut out = CompileDiagnostics::default();
    let program = match tb.parse_testbench() {
        Ok(p) => p,
        Err(e) => {
            out.errors.push(e.to_diagnostic(&tb.path));
            return out;
        }
    };
    for v in validate_testbench_conventions(&program, dut) {
        let d = v.to_diagnostic(&tb.path);
        if d.is_error() {
            out.errors.push(d);
        } else {
            out.warnings.push(d);
        }
    }
    let key = |d: &Diagnostic| (d.line, d.column, d.code.clone());
    out.errors.sort_by_key(key);
    out.warnings.sort_by_key(key);
    out
}
