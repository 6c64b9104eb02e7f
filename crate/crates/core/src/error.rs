use std::path::PathBuf;

use thiserror::Error;

use crate::train::TrainHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
///
/// Variant names are stable: the CLI prints [`Error::name`] on stderr so that
/// scripts can match on the failing condition.
#[derive(Debug, Error)]
pub enum Error {
    #[error("audio is empty")]
    EmptyAudio,
    #[error("audio has {samples} samples, shorter than one {window}-sample window")]
    AudioTooShort { samples: usize, window: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported audio: {0}")]
    UnsupportedAudio(String),

    #[error("duplicate syllable {syllable:?} on vocabulary line {line}")]
    DuplicateSyllable { syllable: String, line: usize },
    #[error("vocabulary entry {syllable:?} on line {line} carries a tone digit")]
    ToneLeak { syllable: String, line: usize },
    #[error("vocabulary must start with \"sil\", found {found:?}")]
    BadVocabHeader { found: String },
    #[error("unknown syllable {syllable:?} in utterance {utt_id} (row {row})")]
    UnknownSyllable { utt_id: String, row: usize, syllable: String },
    #[error("overlapping units in utterance {utt_id} at row {row}")]
    OverlapError { utt_id: String, row: usize },
    #[error("non-positive duration in utterance {utt_id} at row {row}")]
    BadDuration { utt_id: String, row: usize },
    #[error("malformed alignment row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("invalid time {0} s")]
    BadTime(f64),

    #[error("utterance has no syllables")]
    EmptyUtterance,
    #[error("bad frame bounds: {0}")]
    BadBounds(String),
    #[error("utterance has {syllables} syllables but {slices} slices")]
    AlignmentSliceMismatch { syllables: usize, slices: usize },

    #[error("corrupt archive: {0}")]
    CorruptArchive(String),
    #[error("unsupported archive version {found} (expected {expected})")]
    VersionError { found: u32, expected: u32 },

    #[error("segment has no valid frames")]
    EmptySegment,
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("non-finite value in {0}")]
    NumericError(String),
    #[error("label {0} out of range")]
    BadLabel(usize),

    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}")]
    DivergenceError { epoch: usize, history: Box<TrainHistory> },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("bad tone pattern: {0}")]
    BadPattern(String),
    #[error("tone {0} is not voiced")]
    NotVoiced(String),

    #[error("I/O error on {path}: {source}")]
    IoError { path: PathBuf, source: std::io::Error },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable name of the variant.
    pub fn name(&self) -> &'static str {
        match self {
            Error::EmptyAudio => "EmptyAudio",
            Error::AudioTooShort { .. } => "AudioTooShort",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::UnsupportedAudio(_) => "UnsupportedAudio",
            Error::DuplicateSyllable { .. } => "DuplicateSyllable",
            Error::ToneLeak { .. } => "ToneLeak",
            Error::BadVocabHeader { .. } => "BadVocabHeader",
            Error::UnknownSyllable { .. } => "UnknownSyllable",
            Error::OverlapError { .. } => "OverlapError",
            Error::BadDuration { .. } => "BadDuration",
            Error::BadRow { .. } => "BadRow",
            Error::BadTime(_) => "BadTime",
            Error::EmptyUtterance => "EmptyUtterance",
            Error::BadBounds(_) => "BadBounds",
            Error::AlignmentSliceMismatch { .. } => "AlignmentSliceMismatch",
            Error::CorruptArchive(_) => "CorruptArchive",
            Error::VersionError { .. } => "VersionError",
            Error::EmptySegment => "EmptySegment",
            Error::ShapeError(_) => "ShapeError",
            Error::NumericError(_) => "NumericError",
            Error::BadLabel(_) => "BadLabel",
            Error::EmptyDataset => "EmptyDataset",
            Error::DivergenceError { .. } => "DivergenceError",
            Error::ConfigMismatch(_) => "ConfigMismatch",
            Error::BadPattern(_) => "BadPattern",
            Error::NotVoiced(_) => "NotVoiced",
            Error::IoError { .. } => "IoError",
            Error::Json(_) => "JsonError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoError { path: path.into(), source }
    }
}
