//! Headless scenario runs: JSON-lines scripts, a local broker and robots, and
//! a report laid out like the interaction performance table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::task::JoinHandle;

use crate::analytics::{ModuleId, SatisfactionLevel};
use crate::bus::{Broker, BusClient};
use crate::config::{Config, COMMAND_TOPIC};
use crate::domain::{encode_envelope, CommandEnvelope, FeedbackStatus, Modality};
use crate::error::{Error, Result};
use crate::robot::RobotNode;

use super::clock::ManualClock;
use super::service::{DispatchRequest, Orchestrator};

pub const DEMO_SCENARIO: &str = include_str!("../../scenarios/patrol_demo.jsonl");

/// Simulated milliseconds between steps.
pub const STEP_INTERVAL_MS: u64 = 1_000;
const FEEDBACK_TIMEOUT: Duration = Duration::from_secs(20);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioStep {
    pub keywords: String,
    #[serde(default)]
    pub candidate: Option<usize>,
    #[serde(default)]
    pub custom: Option<String>,
    #[serde(default)]
    pub transcript: Option<String>,
    pub modality: Modality,
    #[serde(default)]
    pub key: Option<char>,
    pub robot: String,
    #[serde(default)]
    pub comment: Option<String>,
}

impl ScenarioStep {
    fn request(&self) -> DispatchRequest {
        DispatchRequest {
            candidate: self.candidate,
            custom: self.custom.clone(),
            transcript: self.transcript.clone(),
            modality: Some(self.modality),
            robot_id: self.robot.clone(),
            teleop_key: self.key,
            comment: self.comment.clone(),
        }
    }
}

/// One step per nonblank line. Errors name the 1-based step.
pub fn parse_scenario(text: &str) -> Result<Vec<ScenarioStep>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::ScenarioStep {
                step: i + 1,
                source: Box::new(Error::MalformedMessage(e.to_string())),
            })
        })
        .collect()
}

pub fn load_scenario(path: &Path) -> Result<Vec<ScenarioStep>> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub keywords: String,
    pub robot: String,
    pub context: String,
    pub top_context: String,
    pub intent: String,
    pub sequence: u64,
    pub final_command: String,
    pub base_score: f64,
    pub scores: BTreeMap<ModuleId, f64>,
    pub suggested: Modality,
    pub selected: Modality,
    pub teleop_key: Option<char>,
    pub satisfaction: SatisfactionLevel,
    pub comment: Option<String>,
    pub outcome: FeedbackStatus,
}

impl StepReport {
    pub fn user_label(&self) -> String {
        match self.teleop_key {
            Some(k) => format!("{} ({k})", self.selected),
            None => self.selected.to_string(),
        }
    }

    fn decision(&self, module: ModuleId) -> String {
        match module {
            ModuleId::TP => format!("Execute \"{}\"", self.context),
            ModuleId::IR => self.intent.clone(),
            ModuleId::MS => self.selected.to_string(),
            ModuleId::CG => self.top_context.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub steps: Vec<StepReport>,
}

impl ScenarioReport {
    pub fn score(&self, step: usize, module: ModuleId) -> f64 {
        self.steps[step - 1].scores[&module]
    }

    /// Rows grouped by module, one per step.
    pub fn table(&self) -> String {
        let mut out = String::from("| LLM | Context | Score | Sug. | User | Sat. | Decision | Com. |\n");
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for module in ModuleId::ALL {
            for s in &self.steps {
                let _ = writeln!(
                    out,
                    "| {module} | {} | {:.2} | {} | {} | {} | {} | {} |",
                    s.context,
                    s.scores[&module],
                    s.suggested,
                    s.user_label(),
                    s.satisfaction,
                    s.decision(module),
                    s.comment.as_deref().unwrap_or(""),
                );
            }
        }
        out
    }
}

/// Runs every step in one session, waiting for each command to finish
/// before the next so robot states, and so the published log, repeat
/// exactly across runs.
pub async fn run_scenario(
    orch: &Orchestrator,
    clock: &ManualClock,
    steps: &[ScenarioStep],
) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::default();
    if steps.is_empty() {
        return Ok(report);
    }
    let session = orch.create_session();
    for (i, step) in steps.iter().enumerate() {
        let n = i + 1;
        let wrap = |e: Error| Error::ScenarioStep { step: n, source: Box::new(e) };
        clock.set(n as u64 * STEP_INTERVAL_MS);
        let suggested = orch.submit_keywords(&session.session_id, &step.keywords).await.map_err(wrap)?;
        let result = orch.dispatch(&session.session_id, step.request()).await.map_err(wrap)?;
        let terminal = orch
            .wait_for_terminal(result.envelope.sequence, FEEDBACK_TIMEOUT)
            .await
            .map_err(wrap)?;
        report.steps.push(StepReport {
            step: n,
            keywords: step.keywords.clone(),
            robot: step.robot.clone(),
            context: result.selected_context.clone(),
            top_context: suggested.candidates[0].context.text.clone(),
            intent: suggested.intent_message.clone(),
            sequence: result.envelope.sequence,
            final_command: result.envelope.command.clone(),
            base_score: result.base_score,
            scores: result
                .evaluations
                .iter()
                .map(|e| (e.module, e.interaction_score))
                .collect(),
            suggested: result.modality.suggested,
            selected: result.modality.user_selected,
            teleop_key: result.envelope_key(),
            satisfaction: result.satisfaction,
            comment: step.comment.clone().filter(|c| !c.trim().is_empty()),
            outcome: terminal.status,
        });
    }
    Ok(report)
}

impl super::service::DispatchResult {
    fn envelope_key(&self) -> Option<char> {
        crate::decision::trailing_key(&self.envelope.command)
            .filter(|_| self.envelope.modality == Modality::Teleop)
            .and_then(|k| k.chars().next())
    }
}

/// A broker and one task per configured robot, all in-process. Everything is
/// torn down on drop.
pub struct LocalSwarm {
    broker_addr: SocketAddr,
    tasks: Vec<JoinHandle<Result<()>>>,
}

impl LocalSwarm {
    /// Robots are subscribed to the command topic before this returns.
    pub async fn start(cfg: &Config, received_dir: Option<&Path>) -> Result<Self> {
        let (broker_addr, broker) = Broker::spawn("127.0.0.1:0").await?;
        let mut tasks = vec![broker];
        for spec in &cfg.robots {
            let bus = BusClient::connect(&broker_addr.to_string()).await?;
            let commands = bus.subscribe(COMMAND_TOPIC).await?;
            let mut node = RobotNode::new(spec, cfg.robot);
            if let Some(dir) = received_dir {
                let file = format!("received-{}.jsonl", spec.id.replace(' ', "_"));
                node = node.with_received_log(dir.join(file));
            }
            tasks.push(tokio::spawn(node.run_subscribed(bus, commands)));
        }
        Ok(Self { broker_addr, tasks })
    }

    pub fn broker_addr(&self) -> SocketAddr {
        self.broker_addr
    }
}

impl Drop for LocalSwarm {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeadlessRun {
    pub report: ScenarioReport,
    pub published: Vec<CommandEnvelope>,
    pub analytics: super::service::AnalyticsReport,
}

impl HeadlessRun {
    /// The published log as written to disk: one JSON envelope per line.
    pub fn published_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for env in &self.published {
            out.extend(encode_envelope(env));
            out.push(b'\n');
        }
        out
    }
}

/// Starts a local swarm with robots running as fast as possible, an
/// orchestrator on a manual clock, and runs the steps.
pub async fn run_headless(
    mut cfg: Config,
    steps: &[ScenarioStep],
    data_dir: Option<&Path>,
) -> Result<HeadlessRun> {
    cfg.robot.time_scale = 0.0;
    let swarm = LocalSwarm::start(&cfg, None).await?;
    let bus = BusClient::connect(&swarm.broker_addr().to_string()).await?;
    let clock = Arc::new(ManualClock::new(0));
    let mut builder = Orchestrator::builder(cfg).clock(clock.clone());
    if let Some(dir) = data_dir {
        builder = builder.data_dir(dir);
    }
    let orch = builder.start(bus).await?;
    let report = run_scenario(&orch, &clock, steps).await?;
    Ok(HeadlessRun {
        report,
        published: orch.published_log(),
        analytics: orch.analytics(),
    })
}
