//! The two top-level pipelines: coverage-feedback testbench generation and
//! trace-based bug detection, plus experiment bookkeeping.

mod detect;
mod results;
mod tbloop;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::Percent;
use crate::fsm::ExtractError;
use crate::hdl::FrontendError;
use crate::llm::LlmError;
use crate::oracle::Observation;

pub use detect::{run_bug_detection, scenario_trace, DetectionOutcome, RawVerdict};
pub use results::{
    level_for, run_bench, run_experiment, summarize, BenchItem, BenchOutcome, ExperimentOptions, ExperimentRecord,
    Level, ResultsSink, ScenarioResult, PLOT_HEADER,
};
pub use tbloop::{run_testbench_loop, CompileSummary, IterationLog, LoopRun, StopReason};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    StateRegs,
    IoPairs,
    Fuzzing,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::StateRegs, Scenario::IoPairs, Scenario::Fuzzing];

    /// What the checker sees. Fuzzed runs show state registers too, so the
    /// comparison with guided stimulus isolates the stimulus.
    pub fn observation(self) -> Observation {
        match self {
            Scenario::IoPairs => Observation::IoPairs,
            Scenario::StateRegs | Scenario::Fuzzing => Observation::StateRegs,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::StateRegs => "StateRegs",
            Scenario::IoPairs => "IOPairs",
            Scenario::Fuzzing => "Fuzzing",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace(['-', '_', '/'], "").as_str() {
            "stateregs" | "state" => Ok(Scenario::StateRegs),
            "iopairs" | "io" => Ok(Scenario::IoPairs),
            "fuzzing" | "fuzz" => Ok(Scenario::Fuzzing),
            _ => Err(format!("unknown scenario `{s}` (stateregs, iopairs, fuzzing)")),
        }
    }
}

/// How the conversation is carried between coverage iterations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistoryMode {
    /// Keep every turn, switching to a summary once the token estimate
    /// exceeds the budget.
    #[default]
    Carried,
    /// Each iteration restarts from the system prompt, the latest cumulative
    /// report and the uncovered list.
    Summarized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub coverage_threshold: Percent,
    pub max_iterations: usize,
    pub compile_fix_retries: usize,
    /// Abort the loop when a testbench still fails to compile after all
    /// retries; otherwise the iteration is recorded and the loop moves on.
    pub abort_on_compile_failure: bool,
    pub chunk_size: usize,
    pub scenario: Scenario,
    pub fuzz_pattern_budget: usize,
    pub rng_seed: u64,
    pub history: HistoryMode,
    pub token_budget: usize,
    pub max_cycles: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            coverage_threshold: Percent(10_000),
            max_iterations: 25,
            compile_fix_retries: 3,
            abort_on_compile_failure: false,
            chunk_size: 10,
            scenario: Scenario::StateRegs,
            fuzz_pattern_budget: 1000,
            rng_seed: 0,
            history: HistoryMode::Carried,
            token_budget: 100_000,
            max_cycles: crate::sim::DEFAULT_MAX_CYCLES,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        let bad = |why: &str| Err(LoopError::Config(why.to_string()));
        if self.coverage_threshold.hundredths() == 0 || self.coverage_threshold.hundredths() > 10_000 {
            return bad("coverage threshold must lie in (0, 100]");
        }
        if self.max_iterations == 0 || self.chunk_size == 0 || self.fuzz_pattern_budget == 0 || self.max_cycles == 0 {
            return bad("iteration, chunk, fuzzing and cycle budgets must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("cannot read the design: {0}")]
    Frontend(#[from] FrontendError),
    #[error("no state machine could be extracted: {0}")]
    ExtractionFailed(#[from] ExtractError),
    #[error("backend failed: {source}")]
    BackendFailure {
        source: LlmError,
        /// Where the transcript up to the failure was saved, if anywhere.
        transcript: Option<PathBuf>,
    },
    #[error("testbench still fails to compile after {0} attempt(s)")]
    CompileFailure(usize),
    #[error("a specification text is required for this backend")]
    SpecMissing,
    #[error("golden and mutant machines have different interfaces")]
    InterfaceMismatch,
    #[error("bad loop configuration: {0}")]
    Config(String),
    #[error("simulation failed: {0}")]
    Simulation(#[from] crate::sim::SimError),
    #[error("i/o: {0}")]
    Io(String),
}

#[cfg(test)]
mod tests;
