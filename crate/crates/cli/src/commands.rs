use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fsmcov_core::corpus::{
    generate_corpus, import_pairs, load_corpus, Corpus, CorpusManifest, CorpusProfile, MANIFEST_FORMAT,
};
use fsmcov_core::coverage::{accumulate, render_report};
use fsmcov_core::fsm::{extract_fsm, render_rtl};
use fsmcov_core::hdl::ast::Direction;
use fsmcov_core::hdl::{ModuleDecl, SourceKind, SourceUnit, StimulusProgram};
use fsmcov_core::llm::build_backend;
use fsmcov_core::loops::{
    run_bench, run_bug_detection, run_testbench_loop, summarize, BenchItem, DetectionOutcome, ExperimentRecord,
    LoopConfig, ResultsSink, Scenario,
};
use fsmcov_core::mutation::{sample_mutation, MutantRecord, Mutation, MutationKind};
use fsmcov_core::sim::{compile_check, simulate, Trace, DEFAULT_MAX_CYCLES};
use fsmcov_core::FsmModel;
use serde_json::json;

use crate::args::*;
use crate::config::{apply_backend, apply_knobs, FileConfig};
use crate::{emit, Failure};

type Outcome = Result<(), Failure>;

pub fn run(cli: &Cli) -> Outcome {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    let json = cli.json;
    match &cli.command {
        Command::Parse(a) => parse(a, json),
        Command::Extract(a) => extract(a, json),
        Command::Simulate(a) => simulate_cmd(a, json),
        Command::Cover(a) => cover(a, json),
        Command::Loop(a) => loop_cmd(a, cfg, json),
        Command::Inject(a) => inject(a, &cfg, json),
        Command::Detect(a) => detect(a, cfg, json),
        Command::Bench(a) => bench(a, cfg, json),
        Command::Report(a) => report(a, json),
        Command::GenCorpus(a) => gen_corpus(a, json),
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serialisable") + "\n"
}

fn load(path: &Path, kind: SourceKind) -> Result<SourceUnit, Failure> {
    SourceUnit::load(path, kind).map_err(|e| Failure::domain(e.to_diagnostic(&path.display().to_string())))
}

fn load_dut(path: &Path) -> Result<(SourceUnit, ModuleDecl), Failure> {
    let unit = load(path, SourceKind::Rtl)?;
    let module = unit
        .parse_module()
        .map_err(|e| Failure::domain(e.to_diagnostic(&unit.path)))?;
    Ok((unit, module))
}

fn load_model(path: &Path) -> Result<(SourceUnit, FsmModel), Failure> {
    let (unit, module) = load_dut(path)?;
    let model = extract_fsm(&module).map_err(|e| Failure::domain(format!("{}: {e}", unit.path)))?;
    Ok((unit, model))
}

/// Parses a testbench and checks it against the design; warnings go to
/// stderr, errors fail the command.
fn load_testbench(path: &Path, dut: &ModuleDecl) -> Result<StimulusProgram, Failure> {
    let unit = load(path, SourceKind::Testbench)?;
    let diags = compile_check(&unit, dut);
    for d in &diags.warnings {
        eprintln!("{d}");
    }
    if !diags.is_clean() {
        return Err(Failure::domain(diags.feedback_text().trim_end()));
    }
    unit.parse_testbench()
        .map_err(|e| Failure::domain(e.to_diagnostic(&unit.path)))
}

fn id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "dut".into())
}

fn parse(a: &ParseArgs, json: bool) -> Outcome {
    if a.dut.is_none() && a.tb.is_none() {
        return Err(Failure::usage("give --dut, --tb or both"));
    }
    let mut doc = json!({});
    let mut text = String::new();
    let dut = match &a.dut {
        Some(p) => {
            let (unit, m) = load_dut(p)?;
            let ports = |dir: Direction| -> Vec<serde_json::Value> {
                m.ports
                    .iter()
                    .filter(|q| q.direction == dir)
                    .map(|q| json!({"name": q.name, "width": q.range.map_or(1, |(h, l)| h.abs_diff(l) + 1)}))
                    .collect()
            };
            doc["dut"] = json!({
                "file": unit.path,
                "module": m.name,
                "inputs": ports(Direction::Input),
                "outputs": ports(Direction::Output),
                "always_blocks": m.always_blocks.len(),
            });
            text += &format!(
                "{}: module {} with {} port(s), {} always block(s)\n",
                unit.path,
                m.name,
                m.ports.len(),
                m.always_blocks.len()
            );
            Some(m)
        }
        None => None,
    };
    if let Some(p) = &a.tb {
        let unit = load(p, SourceKind::Testbench)?;
        let program = unit
            .parse_testbench()
            .map_err(|e| Failure::domain(e.to_diagnostic(&unit.path)))?;
        doc["tb"] = json!({
            "file": unit.path,
            "module": program.module_name,
            "clock": program.clock_signal,
            "reset": program.reset_signal,
            "writes": program.writes.len(),
            "finish_time": program.finish_time,
        });
        text += &format!(
            "{}: testbench {} with {} input write(s), finishes at t={}\n",
            unit.path,
            program.module_name,
            program.writes.len(),
            program.finish_time
        );
        if let Some(m) = &dut {
            let diags = compile_check(&unit, m);
            doc["diagnostics"] = json!(diags);
            for d in diags.errors.iter().chain(&diags.warnings) {
                eprintln!("{d}");
            }
            if !diags.is_clean() {
                if json {
                    emit(&pretty(&doc))?;
                }
                return Err(Failure::domain(format!("{} compile error(s)", diags.errors.len())));
            }
        }
    }
    emit(&if json { pretty(&doc) } else { text })
}

fn extract(a: &ExtractArgs, json: bool) -> Outcome {
    let (_, m) = load_model(&a.dut)?;
    if json || a.format == ModelFormat::Json {
        emit(&m.to_json())
    } else {
        emit(&m.to_dot())
    }
}

fn run_tb(dut: &Path, tb: &Path, max_cycles: Option<usize>) -> Result<(FsmModel, Trace), Failure> {
    let (unit, module) = load_dut(dut)?;
    let m = extract_fsm(&module).map_err(|e| Failure::domain(format!("{}: {e}", unit.path)))?;
    let program = load_testbench(tb, &module)?;
    let t = simulate(&m, &program, max_cycles.unwrap_or(DEFAULT_MAX_CYCLES))
        .map_err(|e| Failure::domain(format!("{}: {e}", tb.display())))?;
    Ok((m, t))
}

fn simulate_cmd(a: &SimulateArgs, json: bool) -> Outcome {
    let (_, t) = run_tb(&a.dut, &a.tb, a.max_cycles)?;
    emit(&if json { pretty(&t.to_json()) } else { t.to_csv() })
}

fn cover(a: &CoverArgs, json: bool) -> Outcome {
    let mut traces = Vec::new();
    let mut model = None;
    for tb in &a.tb {
        let (m, t) = run_tb(&a.dut, tb, a.max_cycles)?;
        model = Some(m);
        traces.push(t);
    }
    let m = model.expect("clap requires one --tb");
    let r = accumulate(&m, &traces).map_err(Failure::domain)?;
    emit(&if json { pretty(&r) } else { render_report(&r) })
}

fn tool_manifest(command: &str, extra: serde_json::Value) -> serde_json::Value {
    let mut v = json!({
        "tool": "fsmcov",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "created_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    });
    if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    v
}

fn write_file(path: &Path, text: &str) -> Outcome {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Failure::domain(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))
}

fn loop_cmd(a: &LoopArgs, mut cfg: FileConfig, json: bool) -> Outcome {
    apply_backend(&mut cfg.experiment.backend, &a.backend);
    apply_knobs(&mut cfg.experiment.loop_cfg, &a.knobs);
    let (unit, golden) = load_model(&a.dut)?;
    let mut backend = build_backend(&cfg.experiment.backend, Some(&golden)).map_err(Failure::domain)?;
    if let Some(out) = &a.out {
        let manifest = tool_manifest(
            "loop",
            json!({"dut": unit.path, "backend_id": backend.id(), "config": cfg.to_json()}),
        );
        write_file(&out.join("manifest.json"), &pretty(&manifest))?;
    }
    let run = run_testbench_loop(&unit, backend.as_mut(), &cfg.experiment.loop_cfg, a.out.as_deref())
        .map_err(Failure::domain)?;
    for log in &run.logs {
        let cov = log.cumulative.transition_percent;
        let compiled = if log.compile.clean { "" } else { " (did not compile)" };
        eprintln!("iteration {}: transition coverage {cov}%{compiled}", log.iteration);
    }
    eprintln!("stopped: {:?} after {} iteration(s)", run.stop, run.iterations());
    if json {
        let doc = json!({
            "stop": run.stop,
            "iterations": run.iterations(),
            "transition_coverage": run.final_report().transition_percent,
            "state_coverage": run.final_report().state_percent,
            "report": run.final_report(),
            "logs": run.logs,
        });
        emit(&pretty(&doc))
    } else {
        emit(&render_report(run.final_report()))
    }
}

fn resolve_mutation(
    a: &MutationArgs,
    golden: &FsmModel,
    defaults: &[MutationKind],
    seed: u64,
) -> Result<Mutation, Failure> {
    if let Some(text) = &a.mutation {
        let body = if Path::new(text).is_file() {
            std::fs::read_to_string(text).map_err(|e| Failure::domain(format!("{text}: {e}")))?
        } else {
            text.clone()
        };
        return serde_json::from_str(&body).map_err(|e| Failure::usage(format!("--mutation: {e}")));
    }
    if let Some((from, to, new_to)) = &a.retarget {
        return Mutation::retarget(golden, from, to, new_to).ok_or_else(|| {
            Failure::domain(format!(
                "no {from} -> {to} edge or no state {new_to} in {}",
                golden.name
            ))
        });
    }
    let kinds = if a.kind.is_empty() {
        defaults.to_vec()
    } else {
        a.kind.clone()
    };
    sample_mutation(golden, a.mutation_seed.unwrap_or(seed), &kinds).map_err(Failure::domain)
}

fn inject(a: &InjectArgs, cfg: &FileConfig, json: bool) -> Outcome {
    let (_, golden) = load_model(&a.dut)?;
    let mu = resolve_mutation(
        &a.mutation,
        &golden,
        &cfg.experiment.mutation_kinds,
        cfg.experiment.mutation_seed,
    )?;
    let rec = MutantRecord::build(&id_of(&a.dut), &golden, mu).map_err(Failure::domain)?;
    if !rec.distinguishable {
        eprintln!("warning: the mutant is not distinguishable from the design by its outputs");
    }
    match (json, a.emit) {
        (true, _) | (false, InjectEmit::Record) => emit(&rec.to_json()),
        (false, InjectEmit::Model) => emit(&rec.mutant.to_json()),
        (false, InjectEmit::Rtl) => emit(&render_rtl(&rec.mutant)),
    }
}

fn describe(o: &DetectionOutcome) -> String {
    match (o.cycle, o.patterns_to_detection) {
        (Some(c), Some(p)) => format!(
            "{}: detected at cycle {c} after {p} pattern(s), {} prompt(s)\n",
            o.scenario.name(),
            o.prompts
        ),
        _ => format!(
            "{}: not detected in {} pattern(s), {} prompt(s)\n",
            o.scenario.name(),
            o.patterns_applied,
            o.prompts
        ),
    }
}

fn detect(a: &DetectArgs, mut cfg: FileConfig, json: bool) -> Outcome {
    apply_backend(&mut cfg.experiment.backend, &a.backend);
    apply_knobs(&mut cfg.experiment.loop_cfg, &a.knobs);
    let (unit, golden) = load_model(&a.dut)?;
    let spec = match &a.spec {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Failure::domain(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mu = resolve_mutation(
        &a.mutation,
        &golden,
        &cfg.experiment.mutation_kinds,
        cfg.experiment.mutation_seed,
    )?;
    let id = id_of(&a.dut);
    let rec = MutantRecord::build(&id, &golden, mu).map_err(Failure::domain)?;
    let scenarios = if a.scenario.is_empty() {
        cfg.experiment.scenarios.clone()
    } else {
        a.scenario.clone()
    };
    let det_cfg = cfg
        .experiment
        .detection_backend
        .clone()
        .unwrap_or_else(|| cfg.experiment.backend.clone());

    let guided = if scenarios.iter().any(|s| *s != Scenario::Fuzzing) {
        let mut b = build_backend(&cfg.experiment.backend, Some(&golden)).map_err(Failure::domain)?;
        let run = run_testbench_loop(&unit, b.as_mut(), &cfg.experiment.loop_cfg, None).map_err(Failure::domain)?;
        eprintln!(
            "guided stimulus: {} testbench(es), transition coverage {}%",
            run.programs.len(),
            run.final_report().transition_percent
        );
        run.programs
    } else {
        Vec::new()
    };

    let mut outcomes = Vec::new();
    for scenario in scenarios {
        let mut b = build_backend(&det_cfg, Some(&golden)).map_err(Failure::domain)?;
        let lc = LoopConfig {
            scenario,
            ..cfg.experiment.loop_cfg.clone()
        };
        let o = run_bug_detection(&golden, &rec.mutant, spec.as_deref(), &guided, b.as_mut(), &lc)
            .map_err(Failure::domain)?;
        if let Some(out) = &a.out {
            write_file(
                &out.join("detection").join(format!("{}.json", scenario.name())),
                &pretty(&o),
            )?;
        }
        outcomes.push(o);
    }
    if let Some(out) = &a.out {
        write_file(&out.join("mutant.json"), &rec.to_json())?;
        let manifest = tool_manifest(
            "detect",
            json!({"dut": unit.path, "mutation": mu, "backend_id": det_cfg.backend_id(), "config": cfg.to_json()}),
        );
        write_file(&out.join("manifest.json"), &pretty(&manifest))?;
    }
    if json {
        emit(&pretty(
            &json!({"mutation": mu, "distinguishable": rec.distinguishable, "outcomes": outcomes}),
        ))
    } else {
        emit(&outcomes.iter().map(describe).collect::<String>())
    }
}

fn bench_items(a: &BenchArgs, cfg: &FileConfig) -> Result<(Vec<BenchItem>, serde_json::Value), Failure> {
    let mut corpus = if let Some(n) = a.generate {
        let profile = a.profile.clone().unwrap_or_else(CorpusProfile::standard);
        generate_corpus(n, a.gen_seed.unwrap_or(0), &profile).map_err(Failure::usage)?
    } else {
        let path = a
            .corpus
            .clone()
            .or_else(|| cfg.corpus.clone())
            .unwrap_or_else(|| PathBuf::from("corpus"));
        load_corpus(&path).map_err(Failure::domain)?
    };
    for dir in &a.import {
        for item in import_pairs(dir).map_err(Failure::domain)? {
            corpus.push(item).map_err(Failure::domain)?;
        }
    }
    let mut items = corpus.bench_items();
    if !a.only.is_empty() {
        if let Some(missing) = a.only.iter().find(|id| corpus.get(id).is_none()) {
            return Err(Failure::domain(format!("no corpus entry `{missing}`")));
        }
        items.retain(|i| a.only.contains(&i.id));
    }
    let source = json!({
        "description": corpus.manifest.description,
        "generator": corpus.manifest.generator,
        "ids": items.iter().map(|i| i.id.clone()).collect::<Vec<_>>(),
    });
    Ok((items, source))
}

fn bench(a: &BenchArgs, mut cfg: FileConfig, json: bool) -> Outcome {
    apply_backend(&mut cfg.experiment.backend, &a.backend);
    apply_knobs(&mut cfg.experiment.loop_cfg, &a.knobs);
    if !a.scenario.is_empty() {
        cfg.experiment.scenarios = a.scenario.clone();
    }
    if !a.kind.is_empty() {
        cfg.experiment.mutation_kinds = a.kind.clone();
    }
    if let Some(s) = a.mutation_seed {
        cfg.experiment.mutation_seed = s;
    }
    if let Some(p) = &a.corpus {
        cfg.corpus = Some(p.clone());
    }
    if let Some(d) = &a.results {
        cfg.results_dir = Some(d.clone());
    }
    if let Some(r) = &a.run_id {
        cfg.run_id = Some(r.clone());
    }
    if let Some(w) = a.workers {
        cfg.workers = Some(w);
    }
    cfg.experiment
        .loop_cfg
        .validate()
        .map_err(|e| Failure::usage(e.to_string()))?;
    cfg.experiment
        .backend
        .validate()
        .map_err(|e| Failure::usage(e.to_string()))?;

    let (items, source) = bench_items(a, &cfg)?;
    let results = cfg.results_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    let run_id = cfg.run_id.clone().unwrap_or_else(|| {
        format!(
            "run-{}",
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        )
    });
    let workers = cfg.workers.unwrap_or(1);
    let sink = ResultsSink::new(&results, &run_id).map_err(Failure::domain)?;
    let manifest = tool_manifest(
        "bench",
        json!({
            "run_id": run_id,
            "corpus": source,
            "workers": workers,
            "backend_id": cfg.experiment.backend.backend_id(),
            "config": cfg.to_json(),
        }),
    );
    sink.write_manifest(&manifest).map_err(Failure::domain)?;
    eprintln!(
        "running {} design(s) on {workers} worker(s) into {}",
        items.len(),
        sink.root().display()
    );

    let mut records = Vec::new();
    let mut failed = 0;
    for (id, r) in run_bench(&items, &cfg.experiment, workers, Some(&sink)).map_err(Failure::domain)? {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                failed += 1;
                eprintln!("{id}: {e}");
            }
        }
    }
    sink.write_summary(&records).map_err(Failure::domain)?;
    if json {
        emit(&pretty(&records))?;
    } else {
        emit(&summarize(&records).0)?;
    }
    if failed > 0 {
        return Err(Failure::domain(format!("{failed} design(s) failed")));
    }
    Ok(())
}

fn read_records(run: &Path) -> Result<Vec<ExperimentRecord>, Failure> {
    let order: Option<Vec<String>> = std::fs::read_to_string(run.join("manifest.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| serde_json::from_value(v["corpus"]["ids"].clone()).ok());
    let ids = match order {
        Some(ids) => ids,
        None => {
            let listing = std::fs::read_dir(run).map_err(|e| Failure::domain(format!("{}: {e}", run.display())))?;
            let mut ids: Vec<String> = listing
                .filter_map(|e| e.ok())
                .filter(|e| e.path().join("record.json").is_file())
                .map(|e| e.file_name().to_string_lossy().to_string())
                .collect();
            ids.sort();
            ids
        }
    };
    let mut records = Vec::new();
    for id in ids {
        let path = run.join(&id).join("record.json");
        let Ok(text) = std::fs::read_to_string(&path) else {
            eprintln!("{id}: no record");
            continue;
        };
        records.push(serde_json::from_str(&text).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))?);
    }
    if records.is_empty() {
        return Err(Failure::domain(format!("no records under {}", run.display())));
    }
    Ok(records)
}

fn report(a: &ReportArgs, json: bool) -> Outcome {
    let records = read_records(&a.run)?;
    let (summary, plot) = summarize(&records);
    if a.write {
        write_file(&a.run.join("summary.csv"), &summary)?;
        write_file(&a.run.join("plotdata.csv"), &plot)?;
    }
    if json {
        emit(&pretty(&json!({"records": records, "summary": summary, "plot": plot})))
    } else if a.plot {
        emit(&plot)
    } else {
        emit(&summary)
    }
}

fn gen_corpus(a: &GenCorpusArgs, json: bool) -> Outcome {
    if a.count == 0 && a.import.is_empty() {
        return Err(Failure::usage("nothing to write: --count is 0 and no --import given"));
    }
    let mut corpus = if a.count > 0 {
        generate_corpus(a.count, a.seed, &a.profile).map_err(Failure::usage)?
    } else {
        Corpus {
            manifest: CorpusManifest {
                format: MANIFEST_FORMAT,
                description: "imported designs".into(),
                generator: None,
                notes: Vec::new(),
                entries: Vec::new(),
            },
            items: Vec::new(),
        }
    };
    for dir in &a.import {
        for item in import_pairs(dir).map_err(Failure::domain)? {
            corpus.push(item).map_err(Failure::domain)?;
        }
    }
    corpus
        .write(&a.out)
        .map_err(|e| Failure::domain(format!("{}: {e}", a.out.display())))?;
    let [easy, medium, hard] = corpus.manifest.level_counts();
    eprintln!("wrote {} design(s) to {}", corpus.items.len(), a.out.display());
    if json {
        emit(&corpus.manifest.to_json())
    } else {
        emit(&format!(
            "{}\t{} design(s)\tEasy {easy}\tMedium {medium}\tHard {hard}\n",
            a.out.join("manifest.json").display(),
            corpus.items.len()
        ))
    }
}
