//! The optional JSON configuration file and how flags are layered on top.

use std::path::{Path, PathBuf};

use fsmcov_core::llm::{BackendConfig, BackendKind};
use fsmcov_core::loops::{ExperimentOptions, LoopConfig};
use serde::{Deserialize, Serialize};

use crate::args::{BackendArgs, Knobs};
use crate::Failure;

/// Everything a run can be configured with. Experiment options sit at the
/// top level next to the bench-only settings.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    #[serde(flatten)]
    pub experiment: ExperimentOptions,
    pub corpus: Option<PathBuf>,
    pub results_dir: Option<PathBuf>,
    pub run_id: Option<String>,
    pub workers: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, Failure> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialises")
    }
}

pub fn apply_backend(cfg: &mut BackendConfig, a: &BackendArgs) {
    if let Some(k) = a.backend {
        cfg.kind = k;
    }
    if let Some(t) = &a.transcript {
        cfg.transcript = Some(t.clone());
        if a.backend.is_none() {
            cfg.kind = BackendKind::Replay;
        }
    }
    if let Some(e) = &a.endpoint {
        cfg.endpoint = Some(e.clone());
    }
    if let Some(m) = &a.model {
        cfg.model = Some(m.clone());
    }
    if let Some(v) = &a.api_key_env {
        cfg.api_key_env = v.clone();
    }
    if let Some(t) = a.temperature {
        cfg.temperature = t;
    }
    if let Some(n) = a.oracle_batch {
        cfg.oracle_batch = Some(n);
    }
}

pub fn apply_knobs(cfg: &mut LoopConfig, k: &Knobs) {
    macro_rules! set {
        ($field:ident, $flag:ident) => {
            if let Some(v) = k.$flag {
                cfg.$field = v;
            }
        };
    }
    set!(max_iterations, max_iterations);
    set!(coverage_threshold, threshold);
    set!(compile_fix_retries, compile_retries);
    set!(history, history);
    set!(token_budget, token_budget);
    set!(max_cycles, max_cycles);
    set!(chunk_size, chunk_size);
    set!(fuzz_pattern_budget, fuzz_patterns);
    set!(rng_seed, seed);
    if k.abort_on_compile_failure {
        cfg.abort_on_compile_failure = true;
    }
}
