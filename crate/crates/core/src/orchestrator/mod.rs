//! Session manager and API surface: keywords in, commands out over the bus,
//! feedback, logs and analytics back.

pub mod clock;
pub mod http;
pub mod scenario;
mod service;
pub mod session;
pub mod store;

pub use clock::{Clock, ManualClock, SystemClock};
pub use scenario::{
    load_scenario, parse_scenario, run_headless, run_scenario, HeadlessRun, LocalSwarm,
    ScenarioReport, ScenarioStep, StepReport, DEMO_SCENARIO,
};
pub use service::{
    AnalyticsReport, DispatchRequest, DispatchResult, Event, KeywordsResponse, Orchestrator,
    OrchestratorBuilder, PassThrough, SpeechToText, TrackedRobot,
};
pub use session::{CandidateView, Selection, Session, SessionStatus};
