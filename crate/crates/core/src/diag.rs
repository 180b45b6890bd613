//! Line-oriented diagnostics shared by the frontend and the compile check.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
        })
    }
}

/// One diagnostic, rendered as `SEVERITY file:line:col CODE message`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub code: String,
    pub message: String,
}

impl Diagnostic {
    pub fn error(file: &str, line: u32, column: u32, code: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            file: file.to_string(),
            line,
            column,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn warning(file: &str, line: u32, column: u32, code: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            ..Diagnostic::error(file, line, column, code, message)
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}:{}:{} {} {}",
            self.severity, self.file, self.line, self.column, self.code, self.message
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_line() {
        let d = Diagnostic::error("tb.v", 3, 7, "E-PARSE", "expected `;`, found `end`");
        assert_eq!(d.to_string(), "ERROR tb.v:3:7 E-PARSE expected `;`, found `end`");
        let w = Diagnostic::warning("tb.v", 1, 1, "W-DUMP", "missing dump commands");
        assert!(w.to_string().starts_with("WARNING tb.v:1:1 W-DUMP"));
    }
}
