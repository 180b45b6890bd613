use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{HistoryMode, LoopConfig, LoopError};
use crate::coverage::{accumulate, merge, render_report, uncovered_transitions, CoverageReport};
use crate::fsm::{extract_fsm, FsmModel};
use crate::hdl::{SourceKind, SourceUnit, StimulusProgram};
use crate::llm::{
    build_compile_feedback_prompt, build_coverage_feedback_prompt, build_system_prompt, extract_code, Backend,
    ChatMessage, PromptTranscript, Role,
};
use crate::sim::{compile_check, simulate};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileSummary {
    /// Backend answers checked in this iteration.
    pub attempts: usize,
    pub errors: usize,
    pub warnings: usize,
    pub clean: bool,
    /// Diagnostics of the last checked answer.
    pub feedback: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub testbench_sha256: String,
    pub compile: CompileSummary,
    /// Coverage of this iteration's testbench alone; absent when it never compiled.
    pub report: Option<CoverageReport>,
    pub cumulative: CoverageReport,
    /// Uncovered transitions sent as feedback at the start of this iteration.
    pub feedback: Vec<String>,
    pub transcript: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Threshold,
    MaxIterations,
    /// Two iterations in a row added no coverage.
    Stall,
    CompileFailure,
}

#[derive(Clone, Debug)]
pub struct LoopRun {
    pub model: FsmModel,
    pub logs: Vec<IterationLog>,
    pub stop: StopReason,
    /// Every message exchanged, in order; replaying its answers reproduces the run.
    pub tape: PromptTranscript,
    /// Testbenches that compiled, with their interpreted programs.
    pub testbenches: Vec<String>,
    pub programs: Vec<StimulusProgram>,
}

impl LoopRun {
    pub fn iterations(&self) -> usize {
        self.logs.len()
    }

    pub fn final_report(&self) -> &CoverageReport {
        &self.logs.last().expect("at least one iteration").cumulative
    }
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn io_err(e: impl std::fmt::Display) -> LoopError {
    LoopError::Io(e.to_string())
}

/// Both the live conversation (which may be restarted in summary form) and
/// the full tape of the run.
struct Conversation {
    live: PromptTranscript,
    tape: PromptTranscript,
}

impl Conversation {
    fn push(&mut self, msg: ChatMessage) {
        self.tape.push(msg.clone());
        self.live.push(msg);
    }

    fn restart(&mut self, system: ChatMessage, user: ChatMessage) {
        self.live = PromptTranscript::new(self.live.backend_id.clone());
        self.live.push(system);
        self.live.push(user.clone());
        self.tape.push(user);
    }
}

fn ask(backend: &mut dyn Backend, conv: &mut Conversation, out: Option<&Path>) -> Result<String, LoopError> {
    match crate::llm::complete(backend, &conv.live) {
        Ok(answer) => {
            conv.push(ChatMessage::new(Role::Assistant, answer.clone()));
            Ok(answer)
        }
        Err(source) => {
            let transcript = out.map(|d| d.join("transcript.jsonl"));
            if let Some(p) = &transcript {
                let _ = conv.tape.save(p);
            }
            Err(LoopError::BackendFailure { source, transcript })
        }
    }
}

/// Coverage-feedback testbench generation. Iteration 1 sends the system
/// prompt alone; later iterations send the cumulative uncovered list. Compile
/// errors are fed back within an iteration up to the retry limit. When `out`
/// is given, each iteration's artifacts are written under `out/iterNN`
/// before the next iteration starts.
pub fn run_testbench_loop(
    dut: &SourceUnit,
    backend: &mut dyn Backend,
    cfg: &LoopConfig,
    out: Option<&Path>,
) -> Result<LoopRun, LoopError> {
    cfg.validate()?;
    let module = dut.parse_module()?;
    let model = extract_fsm(&module)?;
    let system = build_system_prompt(dut);
    let id = backend.id();
    let mut conv = Conversation {
        live: PromptTranscript::new(id.clone()),
        tape: PromptTranscript::new(id),
    };
    conv.push(system.clone());

    let mut cumulative = accumulate(&model, &[]).expect("model matches itself");
    let mut logs = Vec::new();
    let mut testbenches = Vec::new();
    let mut programs = Vec::new();
    let mut idle_streak = 0;
    let mut stop = StopReason::MaxIterations;

    for iteration in 1..=cfg.max_iterations {
        let mut feedback = Vec::new();
        if iteration > 1 {
            feedback = uncovered_transitions(&cumulative);
            let prompt = build_coverage_feedback_prompt(&feedback).expect("loop stops at full coverage");
            let summarize = cfg.history == HistoryMode::Summarized || conv.live.token_estimate() > cfg.token_budget;
            if summarize {
                let text = format!(
                    "{}\nCumulative coverage so far:\n{}",
                    prompt.content,
                    render_report(&cumulative)
                );
                conv.restart(system.clone(), ChatMessage::new(Role::User, text));
            } else {
                conv.push(prompt);
            }
        }

        let mut compile = CompileSummary::default();
        let mut accepted = None;
        let mut last_code;
        loop {
            let answer = ask(backend, &mut conv, out)?;
            let code = extract_code(&answer);
            compile.attempts += 1;
            let diags = match SourceUnit::new(format!("tb_iter{iteration:02}.v"), code.as_str(), SourceKind::Testbench)
            {
                Ok(unit) => {
                    let d = compile_check(&unit, &module);
                    (
                        d.errors.len(),
                        d.warnings.len(),
                        d.is_clean(),
                        d.feedback_text(),
                        Some(unit),
                    )
                }
                Err(e) => (1, 0, false, format!("ERROR {e}\n"), None),
            };
            compile.errors = diags.0;
            compile.warnings = diags.1;
            compile.clean = diags.2;
            compile.feedback = diags.3;
            last_code = code;
            if compile.clean {
                accepted = diags.4;
                break;
            }
            if compile.attempts > cfg.compile_fix_retries {
                break;
            }
            conv.push(build_compile_feedback_prompt(&compile.feedback));
        }

        let before = cumulative.transitions_covered;
        let report = match &accepted {
            Some(unit) => {
                let program = unit.parse_testbench()?;
                let trace = simulate(&model, &program, cfg.max_cycles)?;
                let r = accumulate(&model, &[trace]).expect("trace from this model");
                cumulative = merge(&cumulative, &r).expect("same model");
                testbenches.push(last_code.clone());
                programs.push(program);
                Some(r)
            }
            None => None,
        };

        let mut log = IterationLog {
            iteration,
            testbench_sha256: sha256_hex(&last_code),
            compile,
            report,
            cumulative: cumulative.clone(),
            feedback,
            transcript: None,
        };
        if let Some(dir) = out {
            log.transcript = Some(dir.join(format!("iter{iteration:02}")).join("transcript.jsonl"));
            persist_iteration(dir, &log, &last_code, &conv.tape)?;
        }
        logs.push(log);

        if accepted.is_none() && cfg.abort_on_compile_failure {
            stop = StopReason::CompileFailure;
            break;
        }
        if cumulative.transition_percent >= cfg.coverage_threshold {
            stop = StopReason::Threshold;
            break;
        }
        idle_streak = if cumulative.transitions_covered == before {
            idle_streak + 1
        } else {
            0
        };
        if idle_streak >= 2 {
            stop = StopReason::Stall;
            break;
        }
    }
    if let Some(dir) = out {
        conv.tape.save(&dir.join("transcript.jsonl")).map_err(io_err)?;
    }
    if stop == StopReason::CompileFailure {
        return Err(LoopError::CompileFailure(cfg.compile_fix_retries + 1));
    }
    Ok(LoopRun {
        model,
        logs,
        stop,
        tape: conv.tape,
        testbenches,
        programs,
    })
}

fn persist_iteration(dir: &Path, log: &IterationLog, tb: &str, tape: &PromptTranscript) -> Result<(), LoopError> {
    let iter_dir = dir.join(format!("iter{:02}", log.iteration));
    std::fs::create_dir_all(&iter_dir).map_err(io_err)?;
    let write =
        |name: &str, data: &str| crate::llm::write_atomic(&iter_dir.join(name), data.as_bytes()).map_err(io_err);
    write("testbench.v", tb)?;
    write("coverage.txt", &render_report(&log.cumulative))?;
    let json = serde_json::to_string_pretty(log).map_err(io_err)? + "\n";
    write("coverage.json", &json)?;
    tape.save(&iter_dir.join("transcript.jsonl")).map_err(io_err)
}
