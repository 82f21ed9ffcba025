use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate unit {unit:?} at line {line}")]
    DuplicateUnit { unit: String, line: usize },

    #[error("unit set is empty")]
    EmptyUnitSet,

    #[error("out-of-vocabulary unit {unit:?} at position {position}")]
    OutOfVocabulary { unit: String, position: usize },

    #[error("invalid lexicon entry at line {line}: {reason}")]
    BadLexicon { line: usize, reason: String },

    #[error("bad format: {0}")]
    BadFormat(String),

    #[error("invalid transcript: {0}")]
    InvalidTranscript(String),

    #[error("alignment infeasible: {needed} frames needed, {available} available")]
    AlignmentInfeasible { needed: usize, available: usize },

    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("invalid keyword: {0}")]
    InvalidKeyword(String),

    #[error("unit set mismatch: expected {expected:?}, found {found:?}")]
    UnitSetMismatch { expected: String, found: String },

    #[error("bad syllable {0:?}")]
    BadSyllable(String),

    #[error("no keyword has reference occurrences")]
    NoScorableKeywords,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Usage and I/O failures map to exit code 2, everything else to 1.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Config(_))
    }
}
