//! The orchestrator: sessions, dispatch, feedback collection, logs and
//! analytics behind one cloneable handle.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, Weak};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, Notify};
use tracing::{debug, info, warn};

use crate::analytics::{
    AnalyticsSnapshot, InteractionRecord, LearningGraph, ModuleEvaluation, ModuleId,
    RecordedInteraction, SatisfactionLevel,
};
use crate::bus::BusClient;
use crate::config::{Config, COMMAND_TOPIC, FEEDBACK_TOPIC};
use crate::context::{score_contexts, ContextProvider, Similarity};
use crate::decision::{
    plan_custom, plan_task, recognize_intent, resolve_modality, suggest_modality, user_supplied,
    CommandPackager, IntentLabel, ModalitySuggestion, PlanWarning,
};
use crate::domain::{
    decode_feedback, encode_envelope, tokenize, CommandEnvelope, FeedbackEnvelope,
    FeedbackStatus, KeywordSet, Modality, RobotState,
};
use crate::error::{Error, Result};

use super::clock::Clock;
use super::session::{CandidateView, Selection, Session};
use super::store::{InteractionEvent, Store};

const EVENT_CAPACITY: usize = 1024;

/// Turns a voice transcript into command text.
pub trait SpeechToText: Send + Sync {
    fn transcribe(&self, transcript: &str) -> Result<String>;
}

/// Takes the transcript as already-recognised text.
#[derive(Debug, Default, Clone, Copy)]
pub struct PassThrough;

impl SpeechToText for PassThrough {
    fn transcribe(&self, transcript: &str) -> Result<String> {
        Ok(transcript.trim().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Session { session: Session },
    Published { session_id: String, envelope: CommandEnvelope },
    Feedback { session_id: Option<String>, feedback: FeedbackEnvelope },
    Analytics { snapshot: AnalyticsSnapshot },
    Warning { message: String },
}

impl Event {
    pub fn session_id(&self) -> Option<&str> {
        match self {
            Event::Session { session } => Some(&session.session_id),
            Event::Published { session_id, .. } => Some(session_id),
            Event::Feedback { session_id, .. } => session_id.as_deref(),
            Event::Analytics { .. } | Event::Warning { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordsResponse {
    pub session_id: String,
    pub keywords: KeywordSet,
    pub intent: IntentLabel,
    pub intent_message: String,
    pub candidates: Vec<CandidateView>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispatchRequest {
    /// Rank in the candidate list returned by the last keyword submission.
    #[serde(default)]
    pub candidate: Option<usize>,
    #[serde(default)]
    pub custom: Option<String>,
    /// Voice only: raw transcript, converted to a custom command.
    #[serde(default)]
    pub transcript: Option<String>,
    pub modality: Option<Modality>,
    pub robot_id: String,
    #[serde(default)]
    pub teleop_key: Option<char>,
    #[serde(default)]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub session_id: String,
    pub envelope: CommandEnvelope,
    pub selected_context: String,
    pub base_score: f64,
    pub modality: ModalitySuggestion,
    pub satisfaction: SatisfactionLevel,
    pub evaluations: Vec<ModuleEvaluation>,
    pub warnings: Vec<String>,
}

impl DispatchResult {
    pub fn evaluation(&self, module: ModuleId) -> &ModuleEvaluation {
        self.evaluations
            .iter()
            .find(|e| e.module == module)
            .expect("every module is evaluated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedRobot {
    pub state: RobotState,
    pub updated_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub snapshot: AnalyticsSnapshot,
    /// Module name to one table score per interaction.
    pub score_series: BTreeMap<String, Vec<f64>>,
    pub modality_histogram: BTreeMap<String, u64>,
    pub interactions: Vec<RecordedInteraction>,
}

#[derive(Default)]
struct Logs {
    /// Everything handed to the bus, keyed by sequence; entries are removed
    /// again if the publish fails.
    sent: HashMap<u64, (String, CommandEnvelope)>,
    published: Vec<CommandEnvelope>,
    received: BTreeMap<String, Vec<CommandEnvelope>>,
    feedback: HashMap<u64, Vec<FeedbackEnvelope>>,
}

struct Inner {
    config: Config,
    provider: ContextProvider,
    similarity: Similarity,
    packager: CommandPackager,
    bus: BusClient,
    clock: Arc<dyn Clock>,
    speech: Arc<dyn SpeechToText>,
    store: Option<Store>,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Session>>>>,
    next_session: AtomicU64,
    learning: Mutex<LearningGraph>,
    robots: Mutex<BTreeMap<String, TrackedRobot>>,
    logs: Mutex<Logs>,
    feedback_arrived: Notify,
    events: broadcast::Sender<Event>,
}

#[derive(Clone)]
pub struct Orchestrator {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator").finish_non_exhaustive()
    }
}

pub struct OrchestratorBuilder {
    config: Config,
    clock: Arc<dyn Clock>,
    data_dir: Option<std::path::PathBuf>,
    speech: Arc<dyn SpeechToText>,
}

impl OrchestratorBuilder {
    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn data_dir(mut self, dir: impl Into<std::path::PathBuf>) -> Self {
        self.data_dir = Some(dir.into());
        self
    }

    pub fn speech_to_text(mut self, stt: Arc<dyn SpeechToText>) -> Self {
        self.speech = stt;
        self
    }

    /// Loads persisted logs, subscribes to feedback and returns the handle.
    pub async fn start(self, bus: BusClient) -> Result<Orchestrator> {
        let cfg = self.config;
        cfg.validate()?;
        let provider = ContextProvider::from_config(&cfg.context)?;
        let similarity = Similarity::from_config(&cfg.context)?;
        let store = self.data_dir.map(Store::open).transpose()?;
        let replay = match &store {
            Some(s) => s.load()?,
            None => Default::default(),
        };

        let mut learning = LearningGraph::new(cfg.learning, similarity.clone());
        let mut last_sequence = replay.published.iter().map(|e| e.sequence).max().unwrap_or(0);
        for event in replay.interactions {
            match event {
                InteractionEvent::Interaction { record } => {
                    last_sequence = last_sequence.max(record.sequence);
                    if let Err(e) = learning.record_interaction(record) {
                        warn!(error = %e, "skipping invalid persisted interaction");
                    }
                }
                InteractionEvent::Comment { sequence, text } => {
                    learning.attach_comment(sequence, &text);
                }
            }
        }
        if !replay.published.is_empty() {
            info!(published = replay.published.len(), next = last_sequence + 1, "restored logs");
        }
        let logs = Logs {
            published: replay.published,
            received: replay.received,
            ..Logs::default()
        };

        let now = self.clock.now_ms();
        let robots = cfg
            .robots
            .iter()
            .map(|r| (r.id.clone(), TrackedRobot { state: r.initial_state(), updated_at: now }))
            .collect();
        let packager = CommandPackager::starting_at(cfg.robot_ids(), last_sequence + 1);
        let (events, _) = broadcast::channel(EVENT_CAPACITY);

        let inner = Arc::new(Inner {
            config: cfg,
            provider,
            similarity,
            packager,
            bus: bus.clone(),
            clock: self.clock,
            speech: self.speech,
            store,
            sessions: Mutex::default(),
            next_session: AtomicU64::new(1),
            learning: Mutex::new(learning),
            robots: Mutex::new(robots),
            logs: Mutex::new(logs),
            feedback_arrived: Notify::new(),
            events,
        });

        let mut feedback = bus.subscribe(FEEDBACK_TOPIC).await?;
        let weak: Weak<Inner> = Arc::downgrade(&inner);
        tokio::spawn(async move {
            while let Some(bytes) = feedback.recv().await {
                let Some(inner) = weak.upgrade() else { break };
                match decode_feedback(&bytes) {
                    Ok(fb) => Orchestrator { inner }.on_feedback(fb).await,
                    Err(e) => warn!(error = %e, "dropping malformed feedback"),
                }
            }
            debug!("feedback stream closed");
        });

        Ok(Orchestrator { inner })
    }
}

impl Orchestrator {
    pub fn builder(config: Config) -> OrchestratorBuilder {
        OrchestratorBuilder {
            config,
            clock: Arc::new(super::clock::SystemClock),
            data_dir: None,
            speech: Arc::new(PassThrough),
        }
    }

    pub fn config(&self) -> &Config {
        &self.inner.config
    }

    pub fn subscribe_events(&self) -> broadcast::Receiver<Event> {
        self.inner.events.subscribe()
    }

    fn emit(&self, event: Event) {
        // No receivers is fine.
        let _ = self.inner.events.send(event);
    }

    fn warn_event(&self, message: String) {
        warn!("{message}");
        self.emit(Event::Warning { message });
    }

    pub fn create_session(&self) -> Session {
        let n = self.inner.next_session.fetch_add(1, Ordering::SeqCst);
        let session = Session::new(format!("s{n}"));
        self.inner
            .sessions
            .lock()
            .unwrap()
            .insert(session.session_id.clone(), Arc::new(tokio::sync::Mutex::new(session.clone())));
        self.emit(Event::Session { session: session.clone() });
        session
    }

    fn session_handle(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<Session>>> {
        self.inner
            .sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(id.to_string()))
    }

    pub async fn session(&self, id: &str) -> Result<Session> {
        Ok(self.session_handle(id)?.lock().await.clone())
    }

    pub async fn submit_keywords(&self, session_id: &str, text: &str) -> Result<KeywordsResponse> {
        let handle = self.session_handle(session_id)?;
        let keywords = tokenize(text)?;
        let drafts = self.inner.provider.generate_contexts(&keywords).await?;
        let ranked = score_contexts(&self.inner.similarity, &keywords, &drafts);
        let intent = recognize_intent(&keywords)?;
        let candidates: Vec<CandidateView> = ranked
            .into_iter()
            .map(|c| CandidateView {
                suggestion: suggest_modality(&c.text, c.score),
                context: c,
            })
            .collect();

        let mut session = handle.lock().await;
        session.suggest(keywords.clone(), intent, candidates.clone());
        self.emit(Event::Session { session: session.clone() });
        Ok(KeywordsResponse {
            session_id: session_id.to_string(),
            keywords,
            intent,
            intent_message: intent.display().to_string(),
            candidates,
        })
    }

    fn robot_state(&self, robot_id: &str) -> Result<(RobotState, u64)> {
        let robots = self.inner.robots.lock().unwrap();
        let tracked = robots
            .get(robot_id)
            .ok_or_else(|| Error::UnknownRobot(robot_id.to_string()))?;
        let age = self.inner.clock.now_ms().saturating_sub(tracked.updated_at);
        Ok((tracked.state.clone(), age))
    }

    pub async fn dispatch(&self, session_id: &str, req: DispatchRequest) -> Result<DispatchResult> {
        let handle = self.session_handle(session_id)?;
        let mut session = handle.lock().await;
        session.ensure_suggested()?;

        let modality = req
            .modality
            .ok_or_else(|| Error::MalformedMessage("modality is required".into()))?;
        if !self.inner.packager.knows(&req.robot_id) {
            return Err(Error::UnknownRobot(req.robot_id));
        }
        let teleop_key = match (modality, req.teleop_key) {
            (Modality::Teleop, None) => return Err(Error::MissingTeleopKey),
            (Modality::Teleop, Some(k)) if !k.is_ascii_alphanumeric() => {
                return Err(Error::UnknownKey(k.to_string()))
            }
            (Modality::Teleop, key) => key,
            // Keys only travel with teleop commands.
            _ => None,
        };
        let keywords = session.keywords.clone().ok_or(Error::EmptyKeywords)?;

        let custom_text = match (&req.candidate, &req.custom, &req.transcript) {
            (Some(_), None, None) => None,
            (None, Some(text), None) => Some(text.trim().to_string()),
            (None, None, Some(transcript)) => {
                if modality != Modality::Voice {
                    return Err(Error::MalformedMessage(
                        "a transcript is only accepted with voice modality".into(),
                    ));
                }
                Some(self.inner.speech.transcribe(transcript)?)
            }
            _ => {
                return Err(Error::MalformedMessage(
                    "give exactly one of candidate, custom or transcript".into(),
                ))
            }
        };

        let (state, age_ms) = self.robot_state(&req.robot_id)?;
        let mut warnings = Vec::new();
        let (selection, selected_text, base_score, recommendation, planned) = match custom_text {
            None => {
                let rank = req.candidate.unwrap_or_default();
                let view = session.candidates.get(rank).ok_or(Error::BadSelection(rank))?;
                let (planned, warning) = plan_task(
                    &view.context.text,
                    &state,
                    age_ms,
                    self.inner.config.planner.stale_after_ms,
                );
                if let Some(w) = warning {
                    warnings.push(w);
                }
                (
                    Selection::Candidate { rank },
                    view.context.text.clone(),
                    view.context.score,
                    view.suggestion,
                    planned,
                )
            }
            Some(text) => {
                if text.is_empty() {
                    return Err(Error::EmptyKeywords);
                }
                let (_, score) = self.inner.similarity.score(&keywords, &KeywordSet::from_text(&text));
                let planned = plan_custom(&text, &state);
                (Selection::Custom { text: text.clone() }, text, score, user_supplied(modality), planned)
            }
        };
        let suggestion = resolve_modality(recommendation, modality);
        let envelope = self.inner.packager.package(
            &planned,
            modality,
            teleop_key,
            self.inner.clock.now_ms(),
        )?;
        let seq = envelope.sequence;

        self.inner
            .logs
            .lock()
            .unwrap()
            .sent
            .insert(seq, (session_id.to_string(), envelope.clone()));
        if let Err(e) = self.inner.bus.publish(COMMAND_TOPIC, encode_envelope(&envelope)).await {
            self.inner.logs.lock().unwrap().sent.remove(&seq);
            return Err(e);
        }
        info!(sequence = seq, target = %envelope.target, "Published command: {}", envelope.command);
        self.inner.logs.lock().unwrap().published.push(envelope.clone());
        if let Some(store) = &self.inner.store {
            if let Err(e) = store.append_published(&envelope) {
                self.warn_event(format!("published log append failed: {e}"));
            }
        }
        self.emit(Event::Published {
            session_id: session_id.to_string(),
            envelope: envelope.clone(),
        });

        let comment = req.comment.as_deref().map(str::trim).filter(|c| !c.is_empty());
        let record = InteractionRecord {
            sequence: seq,
            keywords,
            selected_context: selected_text.clone(),
            top_context: session
                .candidates
                .first()
                .map(|c| c.context.text.clone())
                .unwrap_or_default(),
            custom: matches!(selection, Selection::Custom { .. }),
            final_command: envelope.command.clone(),
            base_score,
            modality: suggestion,
            teleop_key,
            comment: comment.map(str::to_string),
            robot_id: envelope.target.clone(),
            timestamp: envelope.issued_at,
        };
        let (recorded, snapshot) = {
            let mut learning = self.inner.learning.lock().unwrap();
            let snapshot = learning.record_interaction(record.clone())?;
            (learning.interactions().last().cloned().expect("just recorded"), snapshot)
        };
        if let Some(store) = &self.inner.store {
            if let Err(e) = store.append_interaction(&InteractionEvent::Interaction { record }) {
                self.warn_event(format!("interaction log append failed: {e}"));
            }
        }
        self.emit(Event::Analytics { snapshot });

        session.dispatched(selection, suggestion, envelope.target.clone(), seq)?;
        session.comment = comment.map(str::to_string);
        // A Received report may already have been processed while we held the lock.
        if self.feedback_for(seq).iter().any(|f| f.status == FeedbackStatus::Received) {
            session.acknowledge(seq);
        }
        self.emit(Event::Session { session: session.clone() });

        for w in &warnings {
            self.warn_event(w.to_string());
        }
        Ok(DispatchResult {
            session_id: session_id.to_string(),
            envelope,
            selected_context: selected_text,
            base_score,
            modality: suggestion,
            satisfaction: recorded.satisfaction,
            evaluations: recorded.evaluations,
            warnings: warnings.iter().map(PlanWarning::to_string).collect(),
        })
    }

    /// Last write wins; empty text is a no-op.
    pub async fn submit_comment(&self, session_id: &str, text: &str) -> Result<Session> {
        let handle = self.session_handle(session_id)?;
        let mut session = handle.lock().await;
        let seq = session.ensure_commentable()?;
        let text = text.trim();
        if text.is_empty() {
            return Ok(session.clone());
        }
        session.comment = Some(text.to_string());
        self.inner.learning.lock().unwrap().attach_comment(seq, text);
        if let Some(store) = &self.inner.store {
            let event = InteractionEvent::Comment { sequence: seq, text: text.to_string() };
            if let Err(e) = store.append_interaction(&event) {
                self.warn_event(format!("interaction log append failed: {e}"));
            }
        }
        self.emit(Event::Session { session: session.clone() });
        Ok(session.clone())
    }

    async fn on_feedback(&self, fb: FeedbackEnvelope) {
        let now = self.inner.clock.now_ms();
        if let Some(tracked) = self.inner.robots.lock().unwrap().get_mut(&fb.robot_id) {
            tracked.state = fb.state_snapshot.clone();
            tracked.updated_at = now;
        }
        let (session_id, newly_received) = {
            let mut logs = self.inner.logs.lock().unwrap();
            logs.feedback.entry(fb.command_sequence).or_default().push(fb.clone());
            match logs.sent.get(&fb.command_sequence).cloned() {
                Some((sid, env)) if env.target == fb.robot_id => {
                    let received = (fb.status == FeedbackStatus::Received).then(|| {
                        logs.received.entry(env.target.clone()).or_default().push(env.clone());
                        env
                    });
                    (Some(sid), received)
                }
                _ => {
                    debug!(sequence = fb.command_sequence, "feedback for an unknown command");
                    (None, None)
                }
            }
        };
        if let (Some(env), Some(store)) = (&newly_received, &self.inner.store) {
            if let Err(e) = store.append_received(env) {
                self.warn_event(format!("received log append failed: {e}"));
            }
        }
        if let (Some(sid), Some(_)) = (&session_id, &newly_received) {
            if let Ok(handle) = self.session_handle(sid) {
                let mut session = handle.lock().await;
                if session.acknowledge(fb.command_sequence) {
                    self.emit(Event::Session { session: session.clone() });
                }
            }
        }
        self.emit(Event::Feedback { session_id, feedback: fb });
        self.inner.feedback_arrived.notify_waiters();
    }

    pub fn feedback_for(&self, sequence: u64) -> Vec<FeedbackEnvelope> {
        self.inner
            .logs
            .lock()
            .unwrap()
            .feedback
            .get(&sequence)
            .cloned()
            .unwrap_or_default()
    }

    /// Waits until a Completed or Failed report for `sequence` has been processed.
    pub async fn wait_for_terminal(&self, sequence: u64, timeout: Duration) -> Result<FeedbackEnvelope> {
        let wait = async {
            loop {
                let notified = self.inner.feedback_arrived.notified();
                tokio::pin!(notified);
                notified.as_mut().enable();
                if let Some(fb) = self.feedback_for(sequence).into_iter().find(|f| f.status.is_terminal()) {
                    return fb;
                }
                notified.await;
            }
        };
        tokio::time::timeout(timeout, wait)
            .await
            .map_err(|_| Error::Broker(format!("no terminal feedback for command {sequence}")))
    }

    pub fn published_log(&self) -> Vec<CommandEnvelope> {
        self.inner.logs.lock().unwrap().published.clone()
    }

    pub fn received_log(&self) -> BTreeMap<String, Vec<CommandEnvelope>> {
        self.inner.logs.lock().unwrap().received.clone()
    }

    pub fn robots(&self) -> BTreeMap<String, TrackedRobot> {
        self.inner.robots.lock().unwrap().clone()
    }

    pub fn analytics(&self) -> AnalyticsReport {
        let learning = self.inner.learning.lock().unwrap();
        let snapshot = learning.snapshot();
        let score_series = snapshot
            .modules
            .iter()
            .map(|m| (m.module.to_string(), m.interaction_scores.clone()))
            .collect();
        let modality_histogram = snapshot
            .modality_counts
            .iter()
            .map(|(m, n)| (m.to_string(), *n))
            .collect();
        AnalyticsReport {
            snapshot,
            score_series,
            modality_histogram,
            interactions: learning.interactions().to_vec(),
        }
    }

    pub fn data_dir(&self) -> Option<&std::path::Path> {
        self.inner.store.as_ref().map(Store::dir)
    }
}
