//! Chat prompts, transcripts and the interchangeable completion backends.

pub mod prompts;
mod remote;
mod replay;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompts::*;
pub use remote::RemoteBackend;
pub use replay::ReplayBackend;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }
}

/// One transcript line: a message plus when and by whom it was produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub content: String,
    /// Milliseconds since the Unix epoch.
    pub ts: u64,
    pub backend: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTranscript {
    pub backend_id: String,
    pub entries: Vec<TranscriptEntry>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Rough token count: one token per four characters.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

impl PromptTranscript {
    pub fn new(backend_id: impl Into<String>) -> Self {
        PromptTranscript {
            backend_id: backend_id.into(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, msg: ChatMessage) {
        self.entries.push(TranscriptEntry {
            role: msg.role,
            content: msg.content,
            ts: now_ms(),
            backend: self.backend_id.clone(),
        });
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        self.entries
            .iter()
            .map(|e| ChatMessage::new(e.role, e.content.clone()))
            .collect()
    }

    pub fn last(&self) -> Option<&TranscriptEntry> {
        self.entries.last()
    }

    pub fn token_estimate(&self) -> usize {
        self.entries.iter().map(|e| estimate_tokens(&e.content)).sum()
    }

    /// Exactly one leading system message, then no two consecutive
    /// messages from the same role, and no empty content.
    pub fn check(&self) -> Result<(), LlmError> {
        let bad = |why: &str| Err(LlmError::Transcript(why.to_string()));
        match self.entries.first() {
            Some(e) if e.role == Role::System => {}
            _ => return bad("transcript must begin with a system message"),
        }
        if self.entries.iter().any(|e| e.content.is_empty()) {
            return bad("empty message");
        }
        let rest = &self.entries[1..];
        if rest.iter().any(|e| e.role == Role::System) {
            return bad("more than one system message");
        }
        if rest.windows(2).any(|w| w[0].role == w[1].role) {
            return bad("user and assistant turns must alternate");
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serialises") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<PromptTranscript, LlmError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e: TranscriptEntry =
                serde_json::from_str(line).map_err(|e| LlmError::Transcript(format!("line {}: {e}", i + 1)))?;
            entries.push(e);
        }
        let backend_id = entries.first().map(|e| e.backend.clone()).unwrap_or_default();
        Ok(PromptTranscript { backend_id, entries })
    }

    pub fn load(path: &Path) -> Result<PromptTranscript, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        write_atomic(path, self.to_jsonl().as_bytes())
    }
}

/// Writes via a temporary sibling file so readers never see partial data.
pub(crate) fn write_atomic(path: &Path, data: &[u8]) -> Result<(), LlmError> {
    let io = |e: std::io::Error| LlmError::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(data).map_err(io)?;
    f.sync_all().map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    #[default]
    Oracle,
    Replay,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "remote" => Ok(BackendKind::Remote),
            "oracle" => Ok(BackendKind::Oracle),
            "replay" => Ok(BackendKind::Replay),
            other => Err(format!("unknown backend `{other}` (remote, oracle, replay)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Base URL of the remote service, e.g. `https://api.example.com`.
    pub endpoint: Option<String>,
    /// Path appended to `endpoint`.
    pub path: String,
    pub model: Option<String>,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub transcript: Option<PathBuf>,
    pub seed: u64,
    /// Transitions the oracle targets per answer; `None` means all.
    pub oracle_batch: Option<usize>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Oracle,
            endpoint: None,
            path: "/v1/chat/completions".into(),
            model: None,
            api_key_env: "LLM_API_KEY".into(),
            temperature: 0.0,
            max_retries: 3,
            backoff_ms: 500,
            timeout_secs: 120,
            transcript: None,
            seed: 0,
            oracle_batch: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        match self.kind {
            BackendKind::Remote if self.endpoint.is_none() || self.model.is_none() => Err(LlmError::Config(
                "remote backend needs both an endpoint and a model".into(),
            )),
            BackendKind::Replay => match &self.transcript {
                Some(p) if p.is_file() => Ok(()),
                Some(p) => Err(LlmError::Config(format!("transcript {} does not exist", p.display()))),
                None => Err(LlmError::Config("replay backend needs a transcript path".into())),
            },
            _ => Ok(()),
        }
    }

    pub fn backend_id(&self) -> String {
        match self.kind {
            BackendKind::Remote => format!("remote:{}", self.model.as_deref().unwrap_or("?")),
            BackendKind::Oracle => format!("oracle:{}", self.seed),
            BackendKind::Replay => "replay".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("remote endpoint answered {status}: {body}")]
    Remote { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("replay transcript has no more assistant turns")]
    ReplayExhausted,
    #[error("the oracle cannot answer this prompt: {0}")]
    OracleUnsupportedPrompt(String),
    #[error("bad transcript: {0}")]
    Transcript(String),
    #[error("bad backend configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// A completion source. Implementations may keep state between calls (a
/// replay cursor, the oracle's carried state).
pub trait Backend: Send {
    fn id(&self) -> String;
    fn complete(&mut self, transcript: &PromptTranscript) -> Result<String, LlmError>;
    /// Whether mismatch questions must carry a written specification.
    fn needs_spec(&self) -> bool {
        true
    }
}

/// Sends the transcript to `backend` after checking its shape.
pub fn complete(backend: &mut dyn Backend, transcript: &PromptTranscript) -> Result<String, LlmError> {
    transcript.check()?;
    backend.complete(transcript)
}

/// Builds the backend selected by `cfg`. `golden` lets the oracle answer
/// mismatch questions; the other backends ignore it.
pub fn build_backend(cfg: &BackendConfig, golden: Option<&crate::FsmModel>) -> Result<Box<dyn Backend>, LlmError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        BackendKind::Remote => Box::new(RemoteBackend::new(cfg)?),
        BackendKind::Replay => {
            let path = cfg.transcript.as_deref().expect("validated");
            Box::new(ReplayBackend::load(path)?)
        }
        BackendKind::Oracle => {
            let mut b = crate::oracle::OracleBackend::new(cfg);
            if let Some(g) = golden {
                b = b.with_golden(g.clone());
            }
            Box::new(b)
        }
    })
}

/// Pulls Verilog source out of an answer: the first fenced block holding a
/// `module`, else the text from the first `module` keyword on.
pub fn extract_code(answer: &str) -> String {
    let mut blocks = Vec::new();
    let mut rest = answer;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        match body.find("```") {
            Some(end) => {
                blocks.push(&body[..end]);
                rest = &body[end + 3..];
            }
            None => break,
        }
    }
    if let Some(b) = blocks.iter().find(|b| b.contains("module")) {
        return b.to_string();
    }
    match answer.find("module") {
        Some(i) => answer[i..].to_string(),
        None => answer.to_string(),
    }
}
