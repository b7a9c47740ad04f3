//! Pipeline stages and their process exit codes.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Usage,
    Hypothesis,
    Spectrum,
    Symbol,
    Assembly,
    Gauge,
    Frequency,
    Kam,
    Simulation,
    Comparison,
    Io,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Usage => 2,
            Stage::Hypothesis => 3,
            Stage::Spectrum => 4,
            Stage::Symbol => 5,
            Stage::Assembly => 6,
            Stage::Gauge => 7,
            Stage::Frequency => 8,
            Stage::Kam => 9,
            Stage::Simulation => 10,
            Stage::Comparison => 11,
            Stage::Io => 12,
        }
    }

    pub fn all() -> [Stage; 11] {
        [
            Stage::Usage,
            Stage::Hypothesis,
            Stage::Spectrum,
            Stage::Symbol,
            Stage::Assembly,
            Stage::Gauge,
            Stage::Frequency,
            Stage::Kam,
            Stage::Simulation,
            Stage::Comparison,
            Stage::Io,
        ]
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage:?} stage failed: {message}")]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
    #[source]
    pub source: Option<qpkam::Error>,
}

impl StageError {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        StageError {
            stage,
            message: message.into(),
            source: None,
        }
    }

    pub fn from_core(stage: Stage, err: qpkam::Error) -> Self {
        StageError {
            stage,
            message: err.to_string(),
            source: Some(err),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.stage.exit_code()
    }
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> AtStage<T> for qpkam::Result<T> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError::from_core(stage, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_and_nonzero() {
        let mut codes: Vec<i32> = Stage::all().iter().map(|s| s.exit_code()).collect();
        assert!(codes.iter().all(|c| *c > 1));
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), Stage::all().len());
    }
}
