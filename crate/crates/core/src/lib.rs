//! Coverage-driven testbench generation and trace-based bug detection for
//! RTL finite-state machines.

pub mod bits;
pub mod corpus;
pub mod coverage;
pub mod diag;
pub mod fsm;
pub mod hdl;
pub mod llm;
pub mod loops;
pub mod mutation;
pub mod oracle;
pub mod sim;

pub use bits::Bits;
pub use diag::{Diagnostic, Severity};
pub use fsm::{FsmModel, StateId, Style, TransitionId};
