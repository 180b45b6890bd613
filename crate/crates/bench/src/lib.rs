//! Shared fixtures for the benchmarks.

use fsmcov_core::corpus::{generate_corpus, Corpus, CorpusProfile};

/// A small deterministic corpus of generated machines.
pub fn corpus(count: usize) -> Corpus {
    generate_corpus(count, 7, &CorpusProfile::standard()).expect("generator succeeds")
}
