use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{run_bug_detection, run_testbench_loop, DetectionOutcome, LoopConfig, LoopError, Scenario, StopReason};
use crate::coverage::Percent;
use crate::fsm::extract_fsm;
use crate::hdl::SourceUnit;
use crate::llm::{build_backend, BackendConfig, LlmError};
use crate::mutation::{inject, sample_mutation, MutantRecord, Mutation, MutationKind};

pub const PLOT_HEADER: &str = "fsm_index,fsm,method,patterns";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    Easy,
    Medium,
    Hard,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Easy => "Easy",
            Level::Medium => "Medium",
            Level::Hard => "Hard",
        })
    }
}

/// Difficulty tier by state count.
pub fn level_for(states: usize) -> Level {
    match states {
        0..=7 => Level::Easy,
        8..=14 => Level::Medium,
        _ => Level::Hard,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub detected: bool,
    pub patterns: Option<usize>,
    pub prompts: usize,
}

impl From<&DetectionOutcome> for ScenarioResult {
    fn from(o: &DetectionOutcome) -> Self {
        ScenarioResult {
            scenario: o.scenario,
            detected: o.detected,
            patterns: o.patterns_to_detection,
            prompts: o.prompts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub fsm_id: String,
    pub inputs: u32,
    pub outputs: u32,
    pub states: usize,
    pub level: Level,
    pub backend: String,
    pub coverage: Percent,
    pub state_coverage: Percent,
    pub iterations: usize,
    pub stop: StopReason,
    pub mutation: Option<Mutation>,
    pub detection: Vec<ScenarioResult>,
}

/// One design of a benchmark run.
#[derive(Clone, Debug)]
pub struct BenchItem {
    pub id: String,
    pub dut: SourceUnit,
    pub spec: String,
    /// Bug to inject; sampled from the golden model when absent.
    pub mutation: Option<Mutation>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentOptions {
    pub loop_cfg: LoopConfig,
    pub backend: BackendConfig,
    /// Backend for mismatch questions; the loop backend when absent.
    pub detection_backend: Option<BackendConfig>,
    pub scenarios: Vec<Scenario>,
    pub mutation_kinds: Vec<MutationKind>,
    pub mutation_seed: u64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            loop_cfg: LoopConfig::default(),
            backend: BackendConfig::default(),
            detection_backend: None,
            scenarios: Scenario::ALL.to_vec(),
            mutation_kinds: MutationKind::ALL.to_vec(),
            mutation_seed: 0,
        }
    }
}

fn io_err(e: impl fmt::Display) -> LoopError {
    LoopError::Io(e.to_string())
}

fn backend_err(source: LlmError) -> LoopError {
    LoopError::BackendFailure {
        source,
        transcript: None,
    }
}

/// Writes a run's artifacts under `<base>/<run-id>/`.
#[derive(Clone, Debug)]
pub struct ResultsSink {
    root: PathBuf,
}

impl ResultsSink {
    pub fn new(base: &Path, run_id: &str) -> Result<ResultsSink, LoopError> {
        let root = base.join(run_id);
        std::fs::create_dir_all(&root).map_err(io_err)?;
        Ok(ResultsSink { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn fsm_dir(&self, fsm_id: &str) -> PathBuf {
        self.root.join(fsm_id)
    }

    fn write(&self, path: &Path, text: &str) -> Result<(), LoopError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err)?;
        }
        crate::llm::write_atomic(path, text.as_bytes()).map_err(io_err)
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), LoopError> {
        let text = serde_json::to_string_pretty(value).map_err(io_err)? + "\n";
        self.write(path, &text)
    }

    pub fn write_manifest(&self, manifest: &serde_json::Value) -> Result<(), LoopError> {
        self.write_json(&self.root.join("manifest.json"), manifest)
    }

    pub fn write_detection(&self, fsm_id: &str, outcome: &DetectionOutcome) -> Result<(), LoopError> {
        let name = format!("{}.json", outcome.scenario.name());
        self.write_json(&self.fsm_dir(fsm_id).join("detection").join(name), outcome)
    }

    pub fn write_mutant(&self, fsm_id: &str, record: &MutantRecord) -> Result<(), LoopError> {
        self.write(&self.fsm_dir(fsm_id).join("mutant.json"), &record.to_json())
    }

    pub fn write_record(&self, record: &ExperimentRecord) -> Result<(), LoopError> {
        self.write_json(&self.fsm_dir(&record.fsm_id).join("record.json"), record)
    }

    /// Writes `summary.csv` and `plotdata.csv`.
    pub fn write_summary(&self, records: &[ExperimentRecord]) -> Result<(), LoopError> {
        let (summary, plot) = summarize(records);
        self.write(&self.root.join("summary.csv"), &summary)?;
        self.write(&self.root.join("plotdata.csv"), &plot)
    }
}

fn item_seed(base: u64, id: &str) -> u64 {
    let d = Sha256::digest(id.as_bytes());
    base ^ u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Coverage loop on one design, then each scenario against one injected bug.
pub fn run_experiment(
    item: &BenchItem,
    opts: &ExperimentOptions,
    sink: Option<&ResultsSink>,
) -> Result<ExperimentRecord, LoopError> {
    let module = item.dut.parse_module()?;
    let golden = extract_fsm(&module)?;
    let mut backend = build_backend(&opts.backend, Some(&golden)).map_err(backend_err)?;
    let dir = sink.map(|s| s.fsm_dir(&item.id));
    if let Some(d) = &dir {
        std::fs::create_dir_all(d).map_err(io_err)?;
    }
    let run = run_testbench_loop(&item.dut, backend.as_mut(), &opts.loop_cfg, dir.as_deref())?;
    let report = run.final_report();

    let mutation = match item.mutation {
        Some(m) => Some(m),
        None => match sample_mutation(&golden, item_seed(opts.mutation_seed, &item.id), &opts.mutation_kinds) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("{}: no bug injected: {e}", item.id);
                None
            }
        },
    };

    let mut detection = Vec::new();
    if let Some(mu) = mutation {
        let mutant = inject(&golden, &mu).map_err(|e| LoopError::Config(format!("{}: {e}", item.id)))?;
        if let Some(s) = sink {
            if let Ok(rec) = MutantRecord::build(&item.id, &golden, mu) {
                s.write_mutant(&item.id, &rec)?;
            }
        }
        let det_cfg = opts.detection_backend.as_ref().unwrap_or(&opts.backend);
        for &scenario in &opts.scenarios {
            let mut b = build_backend(det_cfg, Some(&golden)).map_err(backend_err)?;
            let cfg = LoopConfig {
                scenario,
                ..opts.loop_cfg.clone()
            };
            let outcome = run_bug_detection(&golden, &mutant, Some(&item.spec), &run.programs, b.as_mut(), &cfg)?;
            if let Some(s) = sink {
                s.write_detection(&item.id, &outcome)?;
            }
            detection.push(ScenarioResult::from(&outcome));
        }
    }

    let record = ExperimentRecord {
        fsm_id: item.id.clone(),
        inputs: golden.input_width(),
        outputs: golden.output_width(),
        states: golden.states.len(),
        level: level_for(golden.states.len()),
        backend: backend.id(),
        coverage: report.transition_percent,
        state_coverage: report.state_percent,
        iterations: run.iterations(),
        stop: run.stop,
        mutation,
        detection,
    };
    if let Some(s) = sink {
        s.write_record(&record)?;
    }
    Ok(record)
}

/// Per-item outcome of a bench run, keyed by FSM id.
pub type BenchOutcome = (String, Result<ExperimentRecord, LoopError>);

/// Runs every item on a pool of `workers` threads. Results keep input order.
pub fn run_bench(
    items: &[BenchItem],
    opts: &ExperimentOptions,
    workers: usize,
    sink: Option<&ResultsSink>,
) -> Result<Vec<BenchOutcome>, LoopError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LoopError::Config(e.to_string()))?;
    Ok(pool.install(|| {
        items
            .par_iter()
            .map(|item| (item.id.clone(), run_experiment(item, opts, sink)))
            .collect()
    }))
}

fn mark(r: Option<&ScenarioResult>) -> String {
    match r {
        Some(ScenarioResult {
            detected: true,
            patterns: Some(n),
            ..
        }) => format!("✓ {n}"),
        Some(ScenarioResult { detected: true, .. }) => "✓".into(),
        Some(_) => "✗".into(),
        None => String::new(),
    }
}

fn first_seen<'a, I: Iterator<Item = &'a str>>(it: I) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in it {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Renders the summary table and the per-method detection series.
/// One summary row per design, with coverage, iteration count and a
/// detection mark per backend and scenario. Plot rows leave `patterns`
/// empty when a scenario did not detect the bug.
pub fn summarize(records: &[ExperimentRecord]) -> (String, String) {
    let fsms = first_seen(records.iter().map(|r| r.fsm_id.as_str()));
    let backends = first_seen(records.iter().map(|r| r.backend.as_str()));
    let mut scenarios: Vec<Scenario> = records
        .iter()
        .flat_map(|r| r.detection.iter().map(|d| d.scenario))
        .collect();
    scenarios.sort();
    scenarios.dedup();
    let by_key: BTreeMap<(&str, &str), &ExperimentRecord> = records
        .iter()
        .map(|r| ((r.fsm_id.as_str(), r.backend.as_str()), r))
        .collect();

    let mut summary = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["Level", "FSM", "i/p", "o/p", "states"].map(String::from).to_vec();
    for b in &backends {
        header.push(format!("{b} %Cov"));
        header.push(format!("{b} Iters"));
    }
    for b in &backends {
        for s in &scenarios {
            header.push(format!("{b} {}", s.name()));
        }
    }
    summary.write_record(&header).expect("in-memory write");

    let mut plot = String::from(PLOT_HEADER);
    plot.push('\n');
    for (index, fsm) in fsms.iter().enumerate() {
        let any = records.iter().find(|r| r.fsm_id == *fsm).expect("seen above");
        let mut row = vec![
            any.level.to_string(),
            fsm.to_string(),
            any.inputs.to_string(),
            any.outputs.to_string(),
            any.states.to_string(),
        ];
        for b in &backends {
            match by_key.get(&(*fsm, *b)) {
                Some(r) => {
                    row.push(r.coverage.to_string());
                    row.push(r.iterations.to_string());
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        for b in &backends {
            let rec = by_key.get(&(*fsm, *b));
            for s in &scenarios {
                let d = rec.and_then(|r| r.detection.iter().find(|d| d.scenario == *s));
                row.push(mark(d));
                if let Some(d) = d {
                    let patterns = d
                        .patterns
                        .filter(|_| d.detected)
                        .map(|n| n.to_string())
                        .unwrap_or_default();
                    plot.push_str(&format!("{},{fsm},{b}/{},{patterns}\n", index + 1, s.name()));
                }
            }
        }
        summary.write_record(&row).expect("in-memory write");
    }
    let summary = String::from_utf8(summary.into_inner().expect("in-memory flush")).expect("utf-8 fields");
    (summary, plot)
}
