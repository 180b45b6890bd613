//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use fsmcov_core::bits::Bits;
use fsmcov_core::corpus::{generate_corpus, random_model, CorpusProfile};
use fsmcov_core::coverage::{accumulate, merge, render_report, Percent};
use fsmcov_core::fsm::{extract_fsm, Guard};
use fsmcov_core::hdl::{SourceKind, SourceUnit};
use fsmcov_core::llm::{
    build_bitwise_prompt, build_chunk_prompt, build_coverage_feedback_prompt, build_system_prompt,
    build_trace_spec_prompt, BackendConfig, PromptTranscript, ReplayBackend, CHUNK_DATA_MARKER, SPEC_MARKER,
};
use fsmcov_core::loops::{
    run_bench, run_bug_detection, run_testbench_loop, ExperimentOptions, LoopConfig, Scenario, StopReason,
};
use fsmcov_core::mutation::{inject, sample_mutation, Mutation, MutationKind};
use fsmcov_core::oracle::{check_bitwise, check_chunked, check_trace, concat_traces, Observation, OracleBackend};
use fsmcov_core::sim::{simulate, simulate_vectors, Trace, DEFAULT_MAX_CYCLES};
use fsmcov_core::{FsmModel, StateId, Style, TransitionId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why())
    }
}

fn here(rel: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join(rel);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn unit(text: &str) -> SourceUnit {
    SourceUnit::new("dut.v", text, SourceKind::Rtl).unwrap()
}

fn model_of(text: &str) -> FsmModel {
    extract_fsm(&unit(text).parse_module().unwrap()).unwrap()
}

fn oracle_for(golden: &FsmModel) -> OracleBackend {
    OracleBackend::new(&BackendConfig::default()).with_golden(golden.clone())
}

fn golden_report() -> Check {
    let m = model_of(&here("tests/data/xyfsm_fsm.v"));
    let tb = SourceUnit::new("tb.v", here("tests/data/xyfsm_tb.v"), SourceKind::Testbench).unwrap();
    let trace = simulate(&m, &tb.parse_testbench().unwrap(), DEFAULT_MAX_CYCLES).unwrap();
    let text = render_report(&accumulate(&m, &[trace]).unwrap());
    let golden = here("tests/golden/xyfsm_report.txt");
    ensure((m.states.len(), m.transitions.len()) == (4, 8), || {
        "fixture is not 4 states / 8 transitions".into()
    })?;
    ensure(text == golden, || format!("report differs from golden:\n{text}"))?;
    let squeezed: Vec<String> = text
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect();
    ensure(squeezed.iter().any(|l| l == "Transitions 8 6 75.00"), || {
        "no `Transitions 8 6 75.00` row".into()
    })?;
    let missing = squeezed.iter().filter(|l| l.ends_with("Not Covered")).count();
    ensure(missing == 2, || format!("{missing} Not Covered rows"))?;
    Ok("byte-identical, 6/8 transitions".into())
}

fn fsm16_end_to_end() -> Check {
    let rtl = here("../../corpus/rtl/fsm16.v");
    let spec = here("../../corpus/spec/fsm16.txt");
    let g = model_of(&rtl);
    ensure(g.transitions.len() == 12, || {
        format!("{} transitions", g.transitions.len())
    })?;
    let run = run_testbench_loop(&unit(&rtl), &mut oracle_for(&g), &LoopConfig::default(), None)
        .map_err(|e| e.to_string())?;
    let cov = run.final_report().transition_percent;
    ensure(cov == Percent(10_000) && run.iterations() <= 2, || {
        format!("{cov}% after {} iterations", run.iterations())
    })?;
    let mu = Mutation::retarget(&g, "B", "C", "B").ok_or("no B->C edge")?;
    let bug = inject(&g, &mu).map_err(|e| e.to_string())?;
    let mut cycles = HashMap::new();
    for s in Scenario::ALL {
        let cfg = LoopConfig {
            scenario: s,
            ..LoopConfig::default()
        };
        let o = run_bug_detection(&g, &bug, Some(&spec), &run.programs, &mut oracle_for(&g), &cfg)
            .map_err(|e| e.to_string())?;
        ensure(o.detected, || format!("{} missed the bug", s.name()))?;
        cycles.insert(s, o.cycle.unwrap());
    }
    let (sr, io) = (cycles[&Scenario::StateRegs], cycles[&Scenario::IoPairs]);
    ensure(io >= sr, || format!("IOPairs cycle {io} < StateRegs cycle {sr}"))?;
    Ok(format!(
        "{cov}% in {} iteration(s); detected at cycle StateRegs {sr}, IOPairs {io}, Fuzzing {}",
        run.iterations(),
        cycles[&Scenario::Fuzzing]
    ))
}

fn replay_regression() -> Check {
    let rtl = here("../../corpus/rtl/fsm16.v");
    let tape = PromptTranscript::from_jsonl(&here("tests/data/fsm16_transcript.jsonl")).map_err(|e| e.to_string())?;
    let mut replay = ReplayBackend::from_transcript(&tape);
    let run = run_testbench_loop(&unit(&rtl), &mut replay, &LoopConfig::default(), None).map_err(|e| e.to_string())?;
    let series: Vec<String> = run
        .logs
        .iter()
        .map(|l| l.cumulative.transition_percent.to_string())
        .collect();
    ensure(series == ["50.00", "91.67", "100.00"], || {
        format!("coverage series {series:?}")
    })?;
    ensure(run.stop == StopReason::Threshold && replay.remaining() == 0, || {
        format!("{:?}", run.stop)
    })?;
    Ok(format!("recorded transcript re-scored: {}", series.join(" -> ")))
}

fn oracle_completeness() -> Check {
    let started = Instant::now();
    let corpus = generate_corpus(100, 2024, &CorpusProfile::standard())?;
    let records =
        run_bench(&corpus.bench_items(), &ExperimentOptions::default(), 1, None).map_err(|e| e.to_string())?;
    let mut worst_iters = 0;
    for (id, r) in &records {
        let r = r.as_ref().map_err(|e| format!("{id}: {e}"))?;
        ensure(r.coverage == Percent(10_000), || format!("{id}: {}%", r.coverage))?;
        worst_iters = worst_iters.max(r.iterations);
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("bench took {secs:.1} s"))?;
    Ok(format!(
        "100/100 at 100.00%, at most {worst_iters} iteration(s), {secs:.1} s including detection"
    ))
}

fn small_model(rng: &mut ChaCha8Rng, i: usize, min_outputs: u32) -> FsmModel {
    let states = rng.gen_range(2..=8);
    let iw = rng.gen_range(1..=4);
    let ow = rng.gen_range(min_outputs..=5);
    let style = if rng.gen_bool(0.3) { Style::Mealy } else { Style::Moore };
    let async_reset = rng.gen_bool(0.2);
    random_model(rng, &format!("m{i}"), states, iw, ow, style, async_reset)
}

fn random_trace(rng: &mut ChaCha8Rng, m: &FsmModel) -> Trace {
    let parts = rng.gen_range(1..=3);
    let traces = (0..parts)
        .map(|_| {
            let n = rng.gen_range(5..40);
            let v: Vec<Bits> = (0..n).map(|_| Bits::new(rng.gen(), m.input_width())).collect();
            simulate_vectors(m, &v)
        })
        .collect();
    concat_traces(traces).unwrap()
}

/// Golden model, distinguishable mutant and a trace of the mutant.
fn triples(seed: u64, count: usize, min_outputs: u32) -> Vec<(FsmModel, FsmModel, Trace)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut i = 0;
    while out.len() < count {
        i += 1;
        let g = small_model(&mut rng, i, min_outputs);
        let Ok(mu) = sample_mutation(&g, rng.gen(), &MutationKind::ALL) else {
            continue;
        };
        let bug = inject(&g, &mu).unwrap();
        let t = random_trace(&mut rng, &bug);
        out.push((g, bug, t));
    }
    out
}

fn chunking_equivalence() -> Check {
    let mut found = 0;
    for (g, _, t) in triples(7, 200, 1) {
        for mode in [Observation::StateRegs, Observation::IoPairs] {
            let whole = check_trace(&g, &t, mode);
            found += whole.found as usize;
            for k in [1, 3, 10, 17] {
                let c = check_chunked(&g, &t, mode, k);
                ensure((c.found, c.cycle) == (whole.found, whole.cycle), || {
                    format!("{} chunk {k} {mode:?}: {:?} vs {:?}", g.name, c.cycle, whole.cycle)
                })?;
            }
        }
    }
    Ok(format!(
        "200 triples x 2 views x 4 sizes agree ({found} of 400 whole-trace verdicts are mismatches)"
    ))
}

fn bitwise_union() -> Check {
    let mut found = 0;
    for (g, _, t) in triples(11, 200, 2) {
        let whole = check_trace(&g, &t, Observation::IoPairs);
        let mut first: Option<u64> = None;
        for b in g.output_bit_names() {
            let v = check_bitwise(&g, &t, &b).map_err(|e| e.to_string())?;
            if let Some(c) = v.cycle.filter(|_| v.found) {
                first = Some(first.map_or(c, |f| f.min(c)));
            }
        }
        ensure(
            first.is_some() == whole.found && first == whole.cycle.filter(|_| whole.found),
            || format!("{}: per-bit {first:?} vs whole {:?}", g.name, whole.cycle),
        )?;
        found += whole.found as usize;
    }
    Ok(format!("200 multi-output mutants agree ({found} mismatches)"))
}

/// Cube matching with the default branch taken last.
fn naive_fire(m: &FsmModel, state: StateId, input: u64) -> Option<(StateId, Option<Bits>)> {
    let from: Vec<_> = m.transitions.iter().filter(|t| t.from == state).collect();
    let explicit = from.iter().find(|t| match &t.guard {
        Guard::AnyOf(cubes) => cubes.iter().any(|c| input & c.mask == c.value),
        Guard::Default => false,
    });
    let t = explicit.or_else(|| from.iter().find(|t| t.guard == Guard::Default))?;
    Some((t.to, t.output))
}

fn naive_fire_id(m: &FsmModel, state: StateId, input: u64) -> Option<TransitionId> {
    let (to, _) = naive_fire(m, state, input)?;
    m.transitions
        .iter()
        .find(|t| t.from == state && t.to == to)
        .map(|t| t.id)
}

struct Stimulus {
    writes: Vec<(u64, String, u64)>,
    finish: u64,
    text: String,
}

/// A random testbench in the supported dialect and the writes it performs.
fn random_stimulus(rng: &mut ChaCha8Rng, m: &FsmModel) -> Stimulus {
    let asserted = m.reset_polarity.asserted_level();
    let released = 1 - asserted;
    let mut text = String::from("module tb();\n");
    let _ = writeln!(text, "  reg {};\n  reg {};", m.clock, m.reset);
    let width = |w: u32| {
        if w == 1 {
            String::new()
        } else {
            format!("[{}:0] ", w - 1)
        }
    };
    for s in &m.inputs {
        let _ = writeln!(text, "  reg {}{};", width(s.width), s.name);
    }
    for s in &m.outputs {
        let _ = writeln!(text, "  wire {}{};", width(s.width), s.name);
    }
    let binds: Vec<String> = m.port_order.iter().map(|p| format!(".{p}({p})")).collect();
    let _ = writeln!(text, "  {} dut({});", m.name, binds.join(", "));
    let _ = writeln!(text, "  always #5 {0} = ~{0};", m.clock);
    text.push_str("  initial begin\n    $fsdbDumpfile(\"w.fsdb\");\n    $fsdbDumpvars;\n");
    let _ = writeln!(text, "    {} = 0;", m.clock);
    let mut writes = vec![(0, m.reset.clone(), asserted)];
    let _ = writeln!(text, "    {} = {asserted};", m.reset);
    for s in &m.inputs {
        writes.push((0, s.name.clone(), 0));
        let _ = writeln!(text, "    {} = 0;", s.name);
    }
    let mut now = 10;
    writes.push((now, m.reset.clone(), released));
    let _ = writeln!(text, "    #10 {} = {released};", m.reset);
    for _ in 0..rng.gen_range(5..60) {
        match rng.gen_range(0..10) {
            0..=3 => {
                let d = rng.gen_range(1..=15);
                now += d;
                let _ = writeln!(text, "    #{d};");
            }
            4..=8 => {
                let s = &m.inputs[rng.gen_range(0..m.inputs.len())];
                let v = rng.gen::<u64>() & ((1u64 << s.width) - 1);
                let delay = if rng.gen_bool(0.3) { rng.gen_range(1..=12) } else { 0 };
                now += delay;
                let lead = if delay > 0 { format!("#{delay} ") } else { String::new() };
                let lit = if rng.gen_bool(0.5) {
                    v.to_string()
                } else {
                    format!("{}'b{:0w$b}", s.width, v, w = s.width as usize)
                };
                let _ = writeln!(text, "    {lead}{} = {lit};", s.name);
                writes.push((now, s.name.clone(), v));
            }
            _ => {
                let d = rng.gen_range(1..=12);
                let _ = writeln!(
                    text,
                    "    {} = {asserted};\n    #{d} {} = {released};",
                    m.reset, m.reset
                );
                writes.push((now, m.reset.clone(), asserted));
                now += d;
                writes.push((now, m.reset.clone(), released));
            }
        }
    }
    now += 10;
    let _ = writeln!(text, "    #10;\n    $finish;\n  end\nendmodule");
    Stimulus {
        writes,
        finish: now,
        text,
    }
}

/// Edge-by-edge evaluation straight from the write list.
fn naive_run(m: &FsmModel, st: &Stimulus) -> Vec<(bool, Bits, StateId, Bits)> {
    let asserted = m.reset_polarity.asserted_level();
    let mut vals: HashMap<&str, u64> = HashMap::new();
    let mut idx = 0;
    let mut state = m.reset_state;
    let mut out = Vec::new();
    let mut t = 5;
    while t <= st.finish {
        let mut pulsed = vals.get(m.reset.as_str()) == Some(&asserted);
        while idx < st.writes.len() && st.writes[idx].0 < t {
            let (_, s, v) = &st.writes[idx];
            vals.insert(s, *v);
            pulsed |= *s == m.reset && *v == asserted;
            idx += 1;
        }
        let in_reset = vals.get(m.reset.as_str()) == Some(&asserted);
        let mut word = 0u64;
        for s in &m.inputs {
            word = (word << s.width) | vals.get(s.name.as_str()).copied().unwrap_or(0);
        }
        let inputs = Bits::new(word, m.input_width());
        if in_reset || (m.reset_async && pulsed) {
            state = m.reset_state;
        }
        let step = naive_fire(m, state, word);
        let outputs = match m.style {
            Style::Moore => m.moore_outputs[state],
            Style::Mealy => step.and_then(|s| s.1).unwrap_or(Bits::zero(m.output_width())),
        };
        out.push((in_reset, inputs, state, outputs));
        if !in_reset {
            state = step.expect("complete machine").0;
        }
        t += 10;
    }
    out
}

fn simulator_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cycles = 0;
    for i in 0..1000 {
        let m = small_model(&mut rng, i, 1);
        let st = random_stimulus(&mut rng, &m);
        let tb = SourceUnit::new("tb.v", st.text.clone(), SourceKind::Testbench).unwrap();
        let program = tb.parse_testbench().map_err(|e| format!("{e}\n{}", st.text))?;
        let trace = simulate(&m, &program, DEFAULT_MAX_CYCLES).map_err(|e| e.to_string())?;
        let main: Vec<_> = trace
            .records
            .iter()
            .map(|r| (r.reset_active, r.inputs, r.state, r.outputs))
            .collect();
        let naive = naive_run(&m, &st);
        ensure(main == naive, || format!("pair {i} diverges\n{}", st.text))?;
        ensure(
            trace.records.iter().enumerate().all(|(k, r)| r.cycle == k as u64),
            || format!("pair {i}: cycle numbering"),
        )?;
        cycles += naive.len();
    }
    Ok(format!("1000 pairs, {cycles} cycles identical"))
}

fn coverage_recount() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1000 {
        let m = small_model(&mut rng, i, 1);
        let ta = random_trace(&mut rng, &m);
        let tb = random_trace(&mut rng, &m);
        // An edge counts once the following sample shows its effect; a reset
        // cutting in counts as the edge back to the reset state.
        let recount = |t: &Trace| -> BTreeSet<TransitionId> {
            let mut fired = BTreeSet::new();
            for k in 1..t.records.len() {
                let (r, next) = (&t.records[k - 1], &t.records[k]);
                if r.reset_active {
                    continue;
                }
                let id = if next.reset_active {
                    m.transitions
                        .iter()
                        .find(|x| x.from == r.state && x.to == m.reset_state)
                        .map(|x| x.id)
                } else {
                    naive_fire_id(&m, r.state, r.inputs.value())
                };
                fired.extend(id);
            }
            fired
        };
        let a = accumulate(&m, std::slice::from_ref(&ta)).map_err(|e| e.to_string())?;
        let b = accumulate(&m, std::slice::from_ref(&tb)).map_err(|e| e.to_string())?;
        let (ra, rb) = (recount(&ta), recount(&tb));
        ensure(a.covered_ids() == ra && a.transitions_covered == ra.len(), || {
            format!("trace {i}: recount differs")
        })?;
        let total = m.transitions.len() as u64;
        let pct = ((20_000 * ra.len() as u64 + total) / (2 * total)) as u32;
        ensure(a.transition_percent == Percent(pct), || {
            format!("trace {i}: percent {}", a.transition_percent)
        })?;
        let both = merge(&a, &b).map_err(|e| e.to_string())?;
        let union: BTreeSet<_> = ra.union(&rb).copied().collect();
        ensure(both.covered_ids() == union, || {
            format!("trace {i}: merge is not the union")
        })?;
        ensure(
            both.transition_percent >= a.transition_percent.max(b.transition_percent),
            || format!("trace {i}: merge lowered coverage"),
        )?;
        ensure(accumulate(&m, &[ta, tb]).map_err(|e| e.to_string())? == both, || {
            format!("trace {i}: accumulate != merge")
        })?;
    }
    Ok("1000 traces: recount, union and monotonicity hold".into())
}

fn fuzz_vs_guided() -> Check {
    const SEEDS: u64 = 30;
    let corpus = generate_corpus(60, 99, &CorpusProfile::standard())?;
    let mut wins = 0;
    let mut used = 0;
    let mut rows = Vec::new();
    for item in &corpus.items {
        if used == 20 {
            break;
        }
        let g = &item.model;
        let Ok(mu) = sample_mutation(g, used as u64, &[MutationKind::RetargetTransition]) else {
            continue;
        };
        used += 1;
        let bug = inject(g, &mu).unwrap();
        let dut = unit(&item.rtl_text);
        let programs = run_testbench_loop(&dut, &mut oracle_for(g), &LoopConfig::default(), None)
            .map_err(|e| e.to_string())?
            .programs;
        let cfg = LoopConfig {
            scenario: Scenario::StateRegs,
            ..LoopConfig::default()
        };
        let guided = run_bug_detection(g, &bug, Some(&item.spec_text), &programs, &mut oracle_for(g), &cfg)
            .map_err(|e| e.to_string())?
            .patterns_to_detection
            .ok_or_else(|| format!("{}: guided stimulus missed the bug", item.entry.id))?;
        let mut fuzz: Vec<usize> = (0..SEEDS)
            .map(|seed| {
                let cfg = LoopConfig {
                    scenario: Scenario::Fuzzing,
                    rng_seed: seed,
                    ..LoopConfig::default()
                };
                let o = run_bug_detection(g, &bug, Some(&item.spec_text), &[], &mut oracle_for(g), &cfg).unwrap();
                o.patterns_to_detection.unwrap_or(cfg.fuzz_pattern_budget + 1)
            })
            .collect();
        fuzz.sort_unstable();
        let median = (fuzz[14] + fuzz[15]) as f64 / 2.0;
        if median >= guided as f64 {
            wins += 1;
        }
        rows.push(format!("{}:{guided}/{median}", item.entry.id));
    }
    ensure(used == 20, || format!("only {used} retarget mutants"))?;
    ensure(wins * 10 >= used * 9, || {
        format!("fuzzing median >= guided on {wins}/{used}: {}", rows.join(" "))
    })?;
    Ok(format!("fuzzing median >= guided StateRegs on {wins}/{used} mutants"))
}

fn prompt_goldens() -> Check {
    let g = |name: &str| here(&format!("tests/golden/prompts/{name}.txt"));
    let rtl = "module m(input clk);\nendmodule\n";
    let sys = build_system_prompt(&unit(rtl)).content;
    ensure(sys == format!("{}\n{rtl}", g("system_prefix")), || {
        "system prompt".into()
    })?;
    let fb = build_coverage_feedback_prompt(&["Transition from A to B".to_string()]).map_err(|e| e.to_string())?;
    ensure(fb.content == g("coverage_feedback"), || {
        "coverage feedback prompt".into()
    })?;
    let spec = "Write a Verilog module that detects a 1011 pattern.";
    let tr = build_trace_spec_prompt("S0 S1 S2 S3 S1 S5", spec).content;
    ensure(
        tr == format!("{}\n{SPEC_MARKER}\n{spec}\n", g("trace_spec_prefix")),
        || "trace/spec prompt".into(),
    )?;
    let pairs: String = (0..10).map(|i| format!("cycle {i}: input=1 output=0\n")).collect();
    let ch = build_chunk_prompt(0, 10, &pairs, true).content;
    ensure(
        ch == format!("{}\n{CHUNK_DATA_MARKER}\n{pairs}", g("chunk_first_prefix")),
        || "chunk prompt".into(),
    )?;
    let outs = vec!["out1".to_string(), "out2".to_string()];
    let bw = build_bitwise_prompt("out1", &outs, "cycle 1: input=1 out1=0\n")
        .map_err(|e| e.to_string())?
        .content;
    ensure(bw.starts_with(&g("bitwise_prefix")), || "bitwise prompt".into())?;
    Ok("5 builders byte-exact".into())
}

fn main() {
    let checks: [(&str, fn() -> Check); 10] = [
        ("golden coverage report", golden_report),
        ("FSM16 end-to-end", fsm16_end_to_end),
        ("replay regression", replay_regression),
        ("oracle completeness, 100 machines", oracle_completeness),
        ("chunking equivalence, 200 triples", chunking_equivalence),
        ("bitwise decomposition, 200 mutants", bitwise_union),
        ("simulator vs naive interpreter, 1000 pairs", simulator_equivalence),
        ("coverage recount and merge, 1000 traces", coverage_recount),
        ("fuzzing vs guided ordering, 20 mutants x 30 seeds", fuzz_vs_guided),
        ("prompt goldens", prompt_goldens),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let took = fmt_secs(started.elapsed());
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{took}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{took}]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn fmt_secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}
