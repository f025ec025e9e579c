use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("event at t={time} scheduled before clock t={clock}")]
    PastEvent { time: f64, clock: f64 },
    #[error("run end t={t_end} precedes clock t={clock}")]
    EndBeforeClock { t_end: f64, clock: f64 },
    #[error("actor {actor} cannot handle event kind `{kind}`")]
    UnknownEventKind { actor: String, kind: &'static str },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("target {target} queried at t={t} before its first waypoint")]
    BeforeStart { target: u32, t: f64 },
    #[error("position ({x}, {y}) lies outside the deployment field")]
    OutOfField { x: f64, y: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("no reports to fuse")]
    EmptyReports,
    #[error("report weights sum to zero")]
    ZeroWeightSum,
    #[error("fix times must strictly increase")]
    NonIncreasingTimes,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("feature vector has dimension {got}, database expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("observation already matches signature record {0}")]
    AlreadyKnown(u32),
    #[error("no chemical confirmation for this track")]
    Unconfirmed,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid `{field}`: {reason}")]
    InvariantViolation { field: String, reason: String },
}

impl ScenarioError {
    pub(crate) fn invariant(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ScenarioError::InvariantViolation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("trace line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("trace does not belong to this scenario: {0}")]
    MismatchedTrace(String),
}
