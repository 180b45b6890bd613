//! Verilog-subset frontend: tokenizer, RTL module parser, renderer, and the
//! constrained testbench dialect with its convention checks.

pub mod ast;
pub mod conventions;
pub mod eval;
pub mod lexer;
pub mod parser;
pub mod render;
pub mod reset;
pub mod testbench;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::Diagnostic;

pub use ast::ModuleDecl;
pub use conventions::{validate_testbench_conventions, Violation, ViolationKind};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::parse_module;
pub use render::render_module;
pub use reset::{detect_reset, ResetInfo};
pub use testbench::{parse_testbench, ResetPolarity, StimulusEvent, StimulusProgram};

/// 1-based source position. Locations are metadata: any two compare equal,
/// so structural comparisons of syntax trees ignore where nodes came from.
#[derive(Clone, Copy, Default, Serialize, Deserialize)]
pub struct Loc {
    pub line: u32,
    pub col: u32,
}

impl Loc {
    pub fn new(line: u32, col: u32) -> Self {
        Loc { line, col }
    }
}

impl PartialEq for Loc {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl Eq for Loc {}

impl fmt::Debug for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceKind {
    Rtl,
    Testbench,
}

/// A loaded `.v` file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceUnit {
    pub path: String,
    pub text: String,
    pub kind: SourceKind,
}

impl SourceUnit {
    pub fn new(path: impl Into<String>, text: impl Into<String>, kind: SourceKind) -> Result<Self, FrontendError> {
        let text = text.into();
        let path = path.into();
        if text.trim().is_empty() {
            return Err(FrontendError::EmptySource { path });
        }
        Ok(SourceUnit { path, text, kind })
    }

    pub fn load(path: &Path, kind: SourceKind) -> Result<Self, FrontendError> {
        let text = std::fs::read_to_string(path).map_err(|e| FrontendError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        SourceUnit::new(path.display().to_string(), text, kind)
    }

    /// Tokenizes and parses an RTL unit.
    pub fn parse_module(&self) -> Result<ModuleDecl, FrontendError> {
        parse_module(&tokenize(&self.text)?)
    }

    /// Tokenizes and parses a testbench unit.
    pub fn parse_testbench(&self) -> Result<StimulusProgram, FrontendError> {
        parse_testbench(&tokenize(&self.text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("unrecognized input at {line}:{column}: `{snippet}`")]
    Lex { line: u32, column: u32, snippet: String },
    #[error("expected {expected}, found {found} at {location}")]
    Parse {
        expected: String,
        found: String,
        location: Loc,
    },
    #[error("unsupported construct `{name}` at {location}")]
    UnsupportedConstruct { name: String, location: Loc },
    #[error("testbench convention violated: {0}")]
    Convention(Violation),
    #[error("source `{path}` is empty")]
    EmptySource { path: String },
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
}

impl FrontendError {
    pub fn location(&self) -> Loc {
        match self {
            FrontendError::Lex { line, column, .. } => Loc::new(*line, *column),
            FrontendError::Parse { location, .. } | FrontendError::UnsupportedConstruct { location, .. } => *location,
            FrontendError::Convention(v) => v.loc,
            FrontendError::EmptySource { .. } | FrontendError::Io { .. } => Loc::new(1, 1),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            FrontendError::Lex { .. } => "E-LEX",
            FrontendError::Parse { .. } => "E-PARSE",
            FrontendError::UnsupportedConstruct { .. } => "E-UNSUPPORTED",
            FrontendError::Convention(v) => v.kind.code(),
            FrontendError::EmptySource { .. } => "E-EMPTY",
            FrontendError::Io { .. } => "E-IO",
        }
    }

    pub fn to_diagnostic(&self, file: &str) -> Diagnostic {
        let loc = self.location();
        let message = match self {
            FrontendError::Convention(v) => v.message.clone(),
            other => other.to_string(),
        };
        Diagnostic::error(file, loc.line, loc.col, self.code(), message)
    }
}
