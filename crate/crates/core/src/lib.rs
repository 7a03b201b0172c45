//! Human-swarm command and control: keyword contexts, command decisions,
//! module learning, a pub/sub bus, simulated robots and the orchestration
//! service that ties them together.

pub mod analytics;
pub mod bus;
pub mod config;
pub mod context;
pub mod decision;
pub mod domain;
pub mod error;
pub mod orchestrator;
pub mod robot;

pub use analytics::{
    AnalyticsSnapshot, InteractionRecord, LearningGraph, ModuleId, ModuleLearningState,
    SatisfactionLevel,
};
pub use config::{Config, COMMAND_TOPIC, FEEDBACK_TOPIC};
pub use context::{CandidateContext, ContextProvider, DraftContext, Similarity, TemplateTables};
pub use decision::{CommandPackager, ModalitySuggestion, PlannedCommand, SuggestionReason};
pub use domain::{
    CommandEnvelope, FeedbackEnvelope, FeedbackStatus, KeywordSet, Modality, Pose, RobotState,
};
pub use error::{Error, Result};
pub use orchestrator::{Orchestrator, ScenarioReport};
