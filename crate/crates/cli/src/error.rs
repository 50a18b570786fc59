use std::fmt::Display;
use std::path::Path;

use thiserror::Error;

use backchannel_core::annotations::AnnotationError;
use backchannel_core::corpus::CorpusError;
use backchannel_core::evaluation::EvalError;
use backchannel_core::features::FeatureError;
use backchannel_core::learners::LearnError;
use backchannel_core::persona::PersonaError;
use backchannel_core::selftrain::SelfTrainError;
use backchannel_core::synth::SynthError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Internal(_) => "internal",
        }
    }

    /// One-line JSON record for stderr.
    pub fn record(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() }
        })
        .to_string()
    }

    pub fn config(m: impl Display) -> Self {
        CliError::Config(m.to_string())
    }

    pub fn data(m: impl Display) -> Self {
        CliError::Data(m.to_string())
    }

    pub fn io(path: &Path, e: impl Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

macro_rules! data_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_errors!(AnnotationError, CorpusError, FeatureError, PersonaError, csv::Error, serde_json::Error);

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Hyper(_) | LearnError::UnknownKind(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SelfTrainError> for CliError {
    fn from(e: SelfTrainError) -> Self {
        match e {
            SelfTrainError::Config(_) => CliError::Config(e.to_string()),
            SelfTrainError::Learn(l) => l.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(_) => CliError::Config(e.to_string()),
            EvalError::SelfTrain(s) => s.into(),
            EvalError::Learn(l) => l.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}
