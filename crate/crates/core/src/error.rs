use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("integrity: {0}")]
    Integrity(String),

    #[error("capacity: {0}")]
    Capacity(String),

    #[error("format: {0}")]
    Format(String),

    #[error("input too short: {0}")]
    TooShort(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unvoiced utterance: {0}")]
    Unvoiced(String),

    #[error("lookup: {0}")]
    Lookup(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty point cloud: {0}")]
    EmptyCloud(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("missing scores for {}", .0.join(", "))]
    MissingScores(Vec<String>),

    #[error("data: {0}")]
    Data(String),

    #[error("config: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("[{stage}{}{}] {source}",
        .corpus.as_ref().map(|c| format!(" corpus={c}")).unwrap_or_default(),
        .utterance.as_ref().map(|u| format!(" utt={u}")).unwrap_or_default())]
    Stage {
        stage: String,
        corpus: Option<String>,
        utterance: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

/// Process exit status classes used by the command-line driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Config = 2,
    Data = 3,
    Numeric = 4,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach the failing stage, corpus and utterance to an error.
    pub fn in_stage(self, stage: &str, corpus: Option<&str>, utterance: Option<&str>) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            corpus: corpus.map(str::to_string),
            utterance: utterance.map(str::to_string),
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn exit_class(&self) -> ExitClass {
        match self.root() {
            Error::Config(_) => ExitClass::Config,
            Error::Numeric(_) | Error::DegenerateVariance(_) => ExitClass::Numeric,
            _ => ExitClass::Data,
        }
    }
}

/// Extension for attaching stage context to results.
pub trait StageContext<T> {
    fn stage(self, stage: &str, corpus: Option<&str>, utterance: Option<&str>) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &str, corpus: Option<&str>, utterance: Option<&str>) -> Result<T> {
        self.map_err(|e| e.in_stage(stage, corpus, utterance))
    }
}
