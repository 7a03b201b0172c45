use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the command pipeline, the bus, or the service.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no keywords left after normalization")]
    EmptyKeywords,

    #[error("malformed message: {0}")]
    MalformedMessage(String),

    #[error("missing field `{0}`")]
    MissingField(&'static str),

    #[error("unknown modality `{0}`")]
    BadModality(String),

    #[error("similarity is undefined for two empty token sets")]
    UndefinedSimilarity,

    #[error("ratio {0} is outside [0, 1]")]
    InvalidRatio(f64),

    #[error("unknown robot `{0}`")]
    UnknownRobot(String),

    #[error("teleop modality requires a key")]
    MissingTeleopKey,

    #[error("unknown teleop key `{0}`")]
    UnknownKey(String),

    #[error("unrecognized command: {0}")]
    UnrecognizedCommand(String),

    #[error("battery depleted")]
    BatteryDepleted,

    #[error("invalid topic `{0}`")]
    InvalidTopic(String),

    #[error("not connected to the broker")]
    NotConnected,

    #[error("broker error: {0}")]
    Broker(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("unknown session `{0}`")]
    UnknownSession(String),

    #[error("session is {actual}, expected {expected}")]
    InvalidState {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("candidate index {0} is out of range")]
    BadSelection(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario step {step}: {source}")]
    ScenarioStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
