use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fsmcov_core::corpus::CorpusProfile;
use fsmcov_core::coverage::Percent;
use fsmcov_core::llm::BackendKind;
use fsmcov_core::loops::{HistoryMode, Scenario};
use fsmcov_core::mutation::MutationKind;

#[derive(Parser, Debug)]
#[command(
    name = "fsmcov",
    version,
    about = "Coverage-driven testbench generation and trace-based bug detection for RTL state machines",
    propagate_version = true
)]
pub struct Cli {
    /// Emit machine-readable JSON on stdout instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    /// JSON configuration file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More logging on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check that RTL and testbench files are in the supported subset.
    Parse(ParseArgs),
    /// Extract the state machine of a design as JSON or Graphviz dot.
    Extract(ExtractArgs),
    /// Run a testbench against a design and print the cycle trace as CSV.
    Simulate(SimulateArgs),
    /// Print the transition-coverage report of one or more testbenches.
    Cover(CoverArgs),
    /// Run the coverage-feedback testbench generation loop.
    Loop(LoopArgs),
    /// Apply or sample a bug and print the mutant.
    Inject(InjectArgs),
    /// Inject a bug and ask the backend to find it from simulation traces.
    Detect(DetectArgs),
    /// Run the loop and every detection scenario over a corpus.
    Bench(BenchArgs),
    /// Rebuild summary tables from the records of an earlier run.
    Report(ReportArgs),
    /// Write a synthetic corpus, optionally with imported designs.
    GenCorpus(GenCorpusArgs),
}

#[derive(Args, Debug)]
pub struct ParseArgs {
    /// RTL design file.
    #[arg(long)]
    pub dut: Option<PathBuf>,
    /// Testbench file; checked against the design when both are given.
    #[arg(long)]
    pub tb: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelFormat {
    Json,
    Dot,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub dut: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ModelFormat,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub dut: PathBuf,
    #[arg(long)]
    pub tb: PathBuf,
    /// Clock-cycle budget.
    #[arg(long)]
    pub max_cycles: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CoverArgs {
    #[arg(long)]
    pub dut: PathBuf,
    /// Testbench file; repeat to accumulate coverage over several.
    #[arg(long, required = true)]
    pub tb: Vec<PathBuf>,
    #[arg(long)]
    pub max_cycles: Option<usize>,
}

fn parse_percent(s: &str) -> Result<Percent, String> {
    let t = s.trim().trim_end_matches('%');
    let padded = match t.split_once('.') {
        None => format!("{t}.00"),
        Some((i, f)) if f.len() == 1 => format!("{i}.{f}0"),
        Some(_) => t.to_string(),
    };
    Percent::parse(&padded).ok_or_else(|| format!("`{s}` is not a percentage like 95 or 87.50"))
}

fn parse_history(s: &str) -> Result<HistoryMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "carried" | "full" => Ok(HistoryMode::Carried),
        "summarized" | "summary" => Ok(HistoryMode::Summarized),
        _ => Err(format!("unknown history mode `{s}` (carried, summarized)")),
    }
}

fn parse_triple(s: &str) -> Result<(String, String, String), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b, c] if !a.is_empty() && !b.is_empty() && !c.is_empty() => {
            Ok((a.to_string(), b.to_string(), c.to_string()))
        }
        _ => Err(format!("`{s}` is not FROM,TO,NEW_TO")),
    }
}

/// Which completion source answers prompts.
#[derive(Args, Debug, Default)]
pub struct BackendArgs {
    /// oracle, replay or remote.
    #[arg(long)]
    pub backend: Option<BackendKind>,
    /// Recorded transcript to replay (replay backend).
    #[arg(long, value_name = "FILE")]
    pub transcript: Option<PathBuf>,
    /// Base URL of the remote chat-completion service.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent to the remote service.
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the remote API key.
    #[arg(long, value_name = "VAR")]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Uncovered transitions the oracle targets per answer.
    #[arg(long, value_name = "N")]
    pub oracle_batch: Option<usize>,
}

/// Coverage-loop and detection knobs.
#[derive(Args, Debug, Default)]
pub struct Knobs {
    #[arg(long, value_name = "N")]
    pub max_iterations: Option<usize>,
    /// Target transition coverage in percent.
    #[arg(long, value_parser = parse_percent)]
    pub threshold: Option<Percent>,
    /// Compile-fix attempts per testbench.
    #[arg(long, value_name = "N")]
    pub compile_retries: Option<usize>,
    /// Stop with an error when a testbench never compiles.
    #[arg(long)]
    pub abort_on_compile_failure: bool,
    /// carried or summarized.
    #[arg(long, value_parser = parse_history)]
    pub history: Option<HistoryMode>,
    #[arg(long, value_name = "TOKENS")]
    pub token_budget: Option<usize>,
    #[arg(long)]
    pub max_cycles: Option<usize>,
    /// Trace records per mismatch question.
    #[arg(long, value_name = "N")]
    pub chunk_size: Option<usize>,
    /// Random vectors in the fuzzing scenario.
    #[arg(long, value_name = "N")]
    pub fuzz_patterns: Option<usize>,
    /// Seed for fuzzing stimulus.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct LoopArgs {
    #[arg(long)]
    pub dut: PathBuf,
    /// Directory for per-iteration artifacts and the run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub knobs: Knobs,
}

/// How the bug is chosen.
#[derive(Args, Debug, Default)]
pub struct MutationArgs {
    /// Mutation as JSON, inline or in a file.
    #[arg(long, value_name = "JSON|FILE", conflicts_with_all = ["retarget", "kind"])]
    pub mutation: Option<String>,
    /// Send the FROM->TO edge to NEW_TO (state labels).
    #[arg(long, value_name = "FROM,TO,NEW_TO", value_parser = parse_triple, conflicts_with = "kind")]
    pub retarget: Option<(String, String, String)>,
    /// Mutation kinds to sample from; repeatable.
    #[arg(long)]
    pub kind: Vec<MutationKind>,
    /// Seed for sampling.
    #[arg(long)]
    pub mutation_seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InjectEmit {
    /// Mutation, witness and mutant model.
    Record,
    /// Mutant rendered as Verilog.
    Rtl,
    /// Mutant model JSON.
    Model,
}

#[derive(Args, Debug)]
pub struct InjectArgs {
    #[arg(long)]
    pub dut: PathBuf,
    #[command(flatten)]
    pub mutation: MutationArgs,
    #[arg(long, value_enum, default_value = "record")]
    pub emit: InjectEmit,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub dut: PathBuf,
    /// Natural-language description of the intended behaviour.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Scenario to run; repeatable. All three when absent.
    #[arg(long)]
    pub scenario: Vec<Scenario>,
    /// Directory for detection outcomes.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub mutation: MutationArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub knobs: Knobs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Corpus directory or manifest.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Generate this many machines instead of loading a corpus.
    #[arg(long, value_name = "N", conflicts_with = "corpus")]
    pub generate: Option<usize>,
    #[arg(long, requires = "generate")]
    pub gen_seed: Option<u64>,
    #[arg(long, requires = "generate")]
    pub profile: Option<CorpusProfile>,
    /// Directory of `<id>.v` + `<id>.txt` pairs to add; repeatable.
    #[arg(long, value_name = "DIR")]
    pub import: Vec<PathBuf>,
    /// Only run these ids; repeatable.
    #[arg(long)]
    pub only: Vec<String>,
    /// Parent directory of run directories.
    #[arg(long, value_name = "DIR")]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Parallel experiments.
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    /// Scenario to run; repeatable. All three when absent.
    #[arg(long)]
    pub scenario: Vec<Scenario>,
    /// Mutation kinds sampled for entries without a canonical bug; repeatable.
    #[arg(long)]
    pub kind: Vec<MutationKind>,
    #[arg(long)]
    pub mutation_seed: Option<u64>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub knobs: Knobs,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directory holding `<fsm-id>/record.json` files.
    #[arg(long)]
    pub run: PathBuf,
    /// Print the detection series instead of the summary table.
    #[arg(long)]
    pub plot: bool,
    /// Also rewrite summary.csv and plotdata.csv in the run directory.
    #[arg(long)]
    pub write: bool,
}

#[derive(Args, Debug)]
pub struct GenCorpusArgs {
    /// Synthetic machines to generate.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// standard or minimal.
    #[arg(long, default_value = "standard")]
    pub profile: CorpusProfile,
    /// Directory of `<id>.v` + `<id>.txt` pairs to add; repeatable.
    #[arg(long, value_name = "DIR")]
    pub import: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
