use std::path::Path;

use super::{Backend, LlmError, PromptTranscript, Role};

/// Plays back the assistant turns of a recorded transcript in order.
pub struct ReplayBackend {
    answers: Vec<String>,
    next: usize,
}

impl ReplayBackend {
    pub fn from_transcript(t: &PromptTranscript) -> Self {
        ReplayBackend {
            answers: t
                .entries
                .iter()
                .filter(|e| e.role == Role::Assistant)
                .map(|e| e.content.clone())
                .collect(),
            next: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::from_transcript(&PromptTranscript::load(path)?))
    }

    pub fn remaining(&self) -> usize {
        self.answers.len() - self.next
    }
}

impl Backend for ReplayBackend {
    fn id(&self) -> String {
        "replay".into()
    }

    fn needs_spec(&self) -> bool {
        false
    }

    fn complete(&mut self, _transcript: &PromptTranscript) -> Result<String, LlmError> {
        let a = self.answers.get(self.next).cloned().ok_or(LlmError::ReplayExhausted)?;
        self.next += 1;
        Ok(a)
    }
}
