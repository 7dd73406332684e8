use rdis_core::{CodecError, Diagnostic, EvalError};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum RuntimeError {
    #[error("document has {} validation error(s)", .0.iter().filter(|d| d.is_error()).count())]
    Invalid(Vec<Diagnostic>),
    #[error("connection `{0}`: serial not implemented")]
    SerialNotImplemented(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("on_connect primitive `{primitive}` failed: {reason}")]
    OnConnect { primitive: String, reason: String },
    #[error("unknown interface `{0}`")]
    UnknownInterface(String),
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("no mapping declared for `{0}`")]
    NoMapping(String),
    #[error("`{0}` is a command concept and cannot be read")]
    NotTelemetry(String),
    #[error("`{0}` is a telemetry concept and cannot be called")]
    NotCommand(String),
    #[error("missing argument `{0}`")]
    MissingArg(String),
    #[error("unknown argument `{0}`")]
    UnknownArg(String),
    #[error("unknown state variable `{0}`")]
    UnknownState(String),
    #[error("expression: {0}")]
    Eval(#[from] EvalError),
    #[error("argument `{name}` evaluated to {value}, which is not a wire integer")]
    BadValue { name: String, value: f64 },
    #[error("primitive `{primitive}`: {source}")]
    Codec { primitive: String, source: CodecError },
    #[error("primitive `{0}`: no reply before timeout")]
    ReplyTimeout(String),
    #[error("runtime is shutting down")]
    Shutdown,
    #[error("runtime handle is closed")]
    Closed,
}

impl RuntimeError {
    /// Stable machine-readable code, used by the bridge.
    pub fn code(&self) -> &'static str {
        match self {
            RuntimeError::Invalid(_) => "invalid-document",
            RuntimeError::SerialNotImplemented(_) => "serial-not-implemented",
            RuntimeError::Transport(_) => "transport",
            RuntimeError::OnConnect { .. } => "on-connect",
            RuntimeError::UnknownInterface(_) => "unknown-interface",
            RuntimeError::UnknownConcept(_) => "unknown-concept",
            RuntimeError::NoMapping(_) => "no-mapping",
            RuntimeError::NotTelemetry(_) => "not-telemetry",
            RuntimeError::NotCommand(_) => "not-command",
            RuntimeError::MissingArg(_) => "missing-arg",
            RuntimeError::UnknownArg(_) => "unknown-arg",
            RuntimeError::UnknownState(_) => "unknown-state",
            RuntimeError::Eval(_) => "eval",
            RuntimeError::BadValue { .. } => "bad-value",
            RuntimeError::Codec { .. } => "codec",
            RuntimeError::ReplyTimeout(_) => "timeout",
            RuntimeError::Shutdown => "shutdown",
            RuntimeError::Closed => "closed",
        }
    }
}
