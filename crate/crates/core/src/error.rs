use thiserror::Error;

/// Static misconfiguration detected while building or stepping a component.
///
/// A schedule that passes [`crate::schedule::validate`] with zero errors never
/// produces one of these at runtime.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("signal `{found}` does not match threshold table for `{expected}`")]
    SignalMismatch { expected: String, found: String },
    #[error("event level {level} of `{one}` is outside the mapped domain 0..={max}")]
    LevelOutOfDomain { one: String, level: u8, max: u8 },
    #[error("missing input `{input}` for virtual event `{one}`")]
    MissingInput { one: String, input: String },
    #[error("virtual event `{one}` has no combiner entry for {tuple:?}")]
    CombinerGap { one: String, tuple: Vec<u8> },
    #[error("expected {expected} reaction levels, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("unknown controller `{0}`")]
    UnknownController(String),
    #[error("unknown actuator group `{0}`")]
    UnknownGroup(String),
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("duplicate request from task `{task}` on group `{group}`")]
    DuplicateRequest { task: String, group: String },
    #[error("empty waveform")]
    EmptyWaveform,
    #[error("{0}")]
    Invalid(String),
}

/// A monitored signal carried a non-finite value.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("non-finite value {value} on signal `{signal}` at t={time}")]
pub struct MonitorFault {
    pub signal: String,
    pub value: f64,
    pub time: f64,
}

/// The surrogate plant was driven with a non-finite command or step.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimFault {
    #[error("non-finite command {value} on group `{group}`")]
    NonFiniteCommand { group: String, value: f64 },
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
}

/// Top-level error for loading schedules and running the control loop.
#[derive(Debug, Error)]
pub enum PcsError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimFault),
    #[error("schedule parse error: {0}")]
    Parse(String),
    #[error("schedule has {} validation error(s)", .0.len())]
    Validation(Vec<String>),
    #[error("trace error: {0}")]
    Trace(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
