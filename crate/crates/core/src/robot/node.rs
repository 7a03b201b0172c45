//! A simulated robot on the bus.

use std::collections::VecDeque;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use tracing::{debug, info, warn};

use crate::bus::{BusClient, Subscription};
use crate::config::{RobotConfig, RobotSpec, COMMAND_TOPIC, FEEDBACK_TOPIC};
use crate::domain::{
    decode_envelope, encode_envelope, encode_feedback, CommandEnvelope, FeedbackEnvelope,
    FeedbackStatus, RobotState,
};
use crate::error::{Error, Result};

use super::interpret::interpret_command;
use super::kinematics::{
    limit, slices, step_kinematics, to_velocity, STATUS_DEPLETED, STATUS_IDLE,
};

pub const OUTBOX_CAPACITY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceptance {
    Accept,
    Ignore,
}

/// Exact, case-sensitive match on the target field.
pub fn accept_envelope(env: &CommandEnvelope, my_id: &str) -> Acceptance {
    if env.target == my_id {
        Acceptance::Accept
    } else {
        Acceptance::Ignore
    }
}

/// Feedback waiting for the bus. Full outbox drops the oldest entry.
#[derive(Debug, Default)]
pub struct FeedbackOutbox {
    queue: VecDeque<FeedbackEnvelope>,
    dropped: u64,
}

impl FeedbackOutbox {
    pub fn push(&mut self, fb: FeedbackEnvelope) {
        if self.queue.len() == OUTBOX_CAPACITY {
            self.queue.pop_front();
            self.dropped += 1;
        }
        self.queue.push_back(fb);
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn drain(&mut self) -> Vec<FeedbackEnvelope> {
        self.queue.drain(..).collect()
    }

    async fn flush(&mut self, bus: &BusClient) {
        while let Some(fb) = self.queue.front() {
            if let Err(e) = bus.publish(FEEDBACK_TOPIC, encode_feedback(fb)).await {
                debug!(error = %e, pending = self.queue.len(), "feedback buffered");
                return;
            }
            self.queue.pop_front();
        }
    }
}

pub struct RobotNode {
    id: String,
    state: RobotState,
    cfg: RobotConfig,
    received: Vec<CommandEnvelope>,
    received_log: Option<PathBuf>,
    outbox: FeedbackOutbox,
    bus: Option<BusClient>,
}

impl RobotNode {
    pub fn new(spec: &RobotSpec, cfg: RobotConfig) -> Self {
        Self::from_state(spec.initial_state(), cfg)
    }

    pub fn from_state(state: RobotState, cfg: RobotConfig) -> Self {
        Self {
            id: state.robot_id.clone(),
            state,
            cfg,
            received: Vec::new(),
            received_log: None,
            outbox: FeedbackOutbox::default(),
            bus: None,
        }
    }

    /// Appends every accepted envelope to `path` as one JSON line.
    pub fn with_received_log(mut self, path: impl AsRef<Path>) -> Self {
        self.received_log = Some(path.as_ref().to_path_buf());
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn received(&self) -> &[CommandEnvelope] {
        &self.received
    }

    pub fn outbox_mut(&mut self) -> &mut FeedbackOutbox {
        &mut self.outbox
    }

    async fn emit(&mut self, status: FeedbackStatus, sequence: u64, detail: String) {
        self.outbox.push(FeedbackEnvelope {
            robot_id: self.id.clone(),
            command_sequence: sequence,
            status,
            detail,
            state_snapshot: self.state.clone(),
        });
        if let Some(bus) = &self.bus {
            self.outbox.flush(bus).await;
        }
    }

    fn log_received(&self, env: &CommandEnvelope) {
        let Some(path) = &self.received_log else { return };
        let write = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| {
                let mut line = encode_envelope(env);
                line.push(b'\n');
                f.write_all(&line)
            });
        if let Err(e) = write {
            warn!(path = %path.display(), error = %e, "could not append to received log");
        }
    }

    /// Processes one envelope. Returns whether it was addressed to this robot.
    pub async fn handle(&mut self, env: &CommandEnvelope) -> Acceptance {
        if accept_envelope(env, &self.id) == Acceptance::Ignore {
            return Acceptance::Ignore;
        }
        let seq = env.sequence;
        self.received.push(env.clone());
        self.log_received(env);
        self.emit(FeedbackStatus::Received, seq, env.command.clone()).await;

        let primitive = match interpret_command(&env.command, env.modality) {
            Ok(p) => p,
            Err(e) => {
                self.emit(FeedbackStatus::Failed, seq, e.to_string()).await;
                return Acceptance::Accept;
            }
        };
        if self.state.battery <= 0.0 {
            self.state.status = STATUS_DEPLETED.to_string();
            self.emit(FeedbackStatus::Failed, seq, Error::BatteryDepleted.to_string()).await;
            return Acceptance::Accept;
        }

        let plan = to_velocity(primitive, &self.cfg);
        self.emit(FeedbackStatus::Executing, seq, plan.label.clone()).await;
        for cmd in &plan.steps {
            let cmd = limit(*cmd, &self.cfg);
            for dt in slices(cmd.duration, self.cfg.dt_s) {
                match step_kinematics(&self.state, &cmd, dt, self.cfg.drain_rate) {
                    Ok(next) => self.state = next,
                    Err(e) => {
                        self.state.status = STATUS_DEPLETED.to_string();
                        self.emit(FeedbackStatus::Failed, seq, e.to_string()).await;
                        return Acceptance::Accept;
                    }
                }
                if self.cfg.time_scale > 0.0 {
                    tokio::time::sleep(Duration::from_secs_f64(dt * self.cfg.time_scale)).await;
                }
            }
        }
        self.state.status = STATUS_IDLE.to_string();
        self.emit(FeedbackStatus::Completed, seq, format!("completed {}", plan.label)).await;
        Acceptance::Accept
    }

    /// Subscribes to the command topic and executes addressed commands one at
    /// a time until the connection closes.
    pub async fn run(self, bus: BusClient) -> Result<()> {
        let commands = bus.subscribe(COMMAND_TOPIC).await?;
        self.run_subscribed(bus, commands).await
    }

    /// Like [`RobotNode::run`] with the command subscription already in
    /// place, so a caller can be sure no command is missed.
    pub async fn run_subscribed(mut self, bus: BusClient, mut commands: Subscription) -> Result<()> {
        self.bus = Some(bus);
        info!(robot = %self.id, "robot listening");
        while let Some(bytes) = commands.recv().await {
            match decode_envelope(&bytes) {
                Ok(env) => {
                    if self.handle(&env).await == Acceptance::Ignore {
                        debug!(robot = %self.id, target = %env.target, "ignored");
                    }
                }
                Err(e) => warn!(robot = %self.id, error = %e, "dropping malformed command"),
            }
        }
        info!(robot = %self.id, "bus closed");
        Ok(())
    }
}
