use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LoopConfig, LoopError, Scenario};
use crate::bits::Bits;
use crate::fsm::{render_rtl, FsmModel, StateId};
use crate::hdl::StimulusProgram;
use crate::llm::{
    build_bitwise_prompt, build_chunk_prompt, build_detection_system_prompt, Backend, ChatMessage, PromptTranscript,
    Role,
};
use crate::oracle::{
    align_records, concat_traces, observation_plan, parse_verdict, patterns_to_detection, simulate_plan, Observation,
    ReportedVerdict,
};
use crate::sim::{format_bit_cycles, format_cycles, simulate, simulate_vectors, Trace, TraceRecord};

/// One answer from the backend and what came of it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawVerdict {
    pub chunk: usize,
    /// Output bit the prompt focused on, for per-bit questions.
    pub bit: Option<String>,
    /// First line of the answer.
    pub answer: String,
    pub reported_cycle: Option<u64>,
    /// The reported cycle really diverges from the golden model.
    pub confirmed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub scenario: Scenario,
    pub detected: bool,
    pub cycle: Option<u64>,
    pub patterns_to_detection: Option<usize>,
    /// Non-reset cycles in the whole stimulus.
    pub patterns_applied: usize,
    pub prompts: usize,
    pub raw_verdicts: Vec<RawVerdict>,
    /// Answer text of the confirmed verdict.
    pub evidence: String,
}

/// The stimulus a scenario runs on the mutant: seeded random vectors for
/// fuzzing, otherwise the guided testbenches followed by the golden model's
/// observation plan.
pub fn scenario_trace(
    golden: &FsmModel,
    mutant: &FsmModel,
    guided: &[StimulusProgram],
    cfg: &LoopConfig,
) -> Result<Trace, LoopError> {
    if cfg.scenario == Scenario::Fuzzing {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let w = mutant.input_width();
        let vectors: Vec<Bits> = (0..cfg.fuzz_pattern_budget)
            .map(|_| {
                let v = if w == 0 { 0 } else { rng.gen::<u64>() };
                Bits::new(v, w)
            })
            .collect();
        return Ok(simulate_vectors(mutant, &vectors));
    }
    let mut traces = Vec::with_capacity(guided.len() + 1);
    for p in guided {
        traces.push(simulate(mutant, p, cfg.max_cycles)?);
    }
    traces.push(simulate_plan(mutant, &observation_plan(golden)));
    Ok(concat_traces(traces).expect("at least the observation trace"))
}

/// Golden state expected at each record, records in golden numbering.
fn expected_states(golden: &FsmModel, records: &[TraceRecord]) -> Vec<StateId> {
    let mut state = golden.reset_state;
    records
        .iter()
        .map(|r| {
            if r.reset_active {
                state = golden.reset_state;
                return state;
            }
            let here = state;
            state = golden.fire(state, r.inputs).map(|t| t.to).unwrap_or(state);
            here
        })
        .collect()
}

/// Asks `backend` whether the mutant's trace matches the specification,
/// window by window, and confirms each reported cycle against the golden
/// model. Stops at the first confirmed divergence.
pub fn run_bug_detection(
    golden: &FsmModel,
    mutant: &FsmModel,
    spec: Option<&str>,
    guided: &[StimulusProgram],
    backend: &mut dyn Backend,
    cfg: &LoopConfig,
) -> Result<DetectionOutcome, LoopError> {
    cfg.validate()?;
    if golden.inputs != mutant.inputs || golden.outputs != mutant.outputs {
        return Err(LoopError::InterfaceMismatch);
    }
    let spec = spec.unwrap_or("").trim();
    if spec.is_empty() && backend.needs_spec() {
        return Err(LoopError::SpecMissing);
    }
    let trace = scenario_trace(golden, mutant, guided, cfg)?;
    let records = align_records(golden, &trace);
    let expected = expected_states(golden, &records);
    let obs = cfg.scenario.observation();

    let mut transcript = PromptTranscript::new(backend.id());
    transcript.push(build_detection_system_prompt(&render_rtl(mutant), spec));
    let bits = golden.output_bit_names();
    let per_bit = obs == Observation::IoPairs && bits.len() > 1;

    let mut outcome = DetectionOutcome {
        scenario: cfg.scenario,
        detected: false,
        cycle: None,
        patterns_to_detection: None,
        patterns_applied: trace.active_cycles(),
        prompts: 0,
        raw_verdicts: Vec::new(),
        evidence: String::new(),
    };

    let confirm = |cycle: u64, bit: Option<u32>| -> bool {
        let Some(i) = records.iter().position(|r| r.cycle == cycle) else {
            return false;
        };
        let r = &records[i];
        if r.reset_active {
            return false;
        }
        let want = golden.output(expected[i], r.inputs);
        match (obs, bit) {
            (_, Some(b)) => want.bit(b) != r.outputs.bit(b),
            (Observation::StateRegs, None) => r.state != expected[i] || want != r.outputs,
            (Observation::IoPairs, None) => want != r.outputs,
        }
    };

    let mut ask = |transcript: &mut PromptTranscript, msg: ChatMessage| -> Result<String, LoopError> {
        transcript.push(msg);
        let answer = crate::llm::complete(backend, transcript).map_err(|source| LoopError::BackendFailure {
            source,
            transcript: None,
        })?;
        transcript.push(ChatMessage::new(Role::Assistant, answer.clone()));
        Ok(answer)
    };

    for (index, chunk) in records.chunks(cfg.chunk_size).enumerate() {
        let questions: Vec<(ChatMessage, Option<(String, u32)>)> = if per_bit {
            bits.iter()
                .map(|b| {
                    let idx = golden.output_bit_index(b).expect("own bit name");
                    let msg = build_bitwise_prompt(b, &bits, &format_bit_cycles(chunk, b, idx)).expect("own bit name");
                    (msg, Some((b.clone(), idx)))
                })
                .collect()
        } else {
            let pairs = format_cycles(&trace, chunk, obs == Observation::StateRegs);
            vec![(
                build_chunk_prompt(index, cfg.chunk_size, &pairs, obs == Observation::StateRegs),
                None,
            )]
        };
        let mut best: Option<(u64, String)> = None;
        for (msg, bit) in questions {
            let answer = ask(&mut transcript, msg)?;
            outcome.prompts += 1;
            let reported_cycle = match parse_verdict(&answer) {
                ReportedVerdict::Mismatch { cycle } => cycle,
                _ => None,
            };
            let confirmed = reported_cycle.is_some_and(|c| confirm(c, bit.as_ref().map(|b| b.1)));
            log::debug!("chunk {index}: reported {reported_cycle:?}, confirmed {confirmed}");
            outcome.raw_verdicts.push(RawVerdict {
                chunk: index,
                bit: bit.map(|b| b.0),
                answer: answer.lines().next().unwrap_or("").to_string(),
                reported_cycle,
                confirmed,
            });
            if let (true, Some(c)) = (confirmed, reported_cycle) {
                if best.as_ref().is_none_or(|(b, _)| c < *b) {
                    best = Some((c, answer));
                }
            }
        }
        if let Some((c, answer)) = best {
            outcome.detected = true;
            outcome.cycle = Some(c);
            outcome.patterns_to_detection = Some(patterns_to_detection(&trace, c));
            outcome.evidence = answer;
            break;
        }
    }
    Ok(outcome)
}
