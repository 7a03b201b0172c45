//! Shared vocabulary types and the canonical envelope codec.
//!
//! Envelopes travel over the bus and land in the JSON-lines logs in one
//! canonical form: compact JSON, keys in declaration order. Because the byte
//! form is fixed, published and received logs can be diffed directly.

use std::collections::HashSet;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Normalized operator keywords: lowercase, trimmed, unique, in entry order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct KeywordSet {
    tokens: Vec<String>,
}

impl KeywordSet {
    /// Builds a set from raw tokens, normalizing each one. Empty tokens are
    /// dropped and later duplicates are discarded.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for token in tokens {
            let token = token.as_ref().trim().to_lowercase();
            if !token.is_empty() && seen.insert(token.clone()) {
                out.push(token);
            }
        }
        Self { tokens: out }
    }

    /// Splits free text into a set without failing on empty input.
    pub fn from_text(text: &str) -> Self {
        let lowered = text.to_lowercase();
        Self::from_tokens(lowered.split(|c: char| !c.is_alphanumeric()))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.iter().any(|t| t == token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Returns a copy without any token from `stopwords`.
    pub fn without<F: Fn(&str) -> bool>(&self, is_stopword: F) -> Self {
        Self {
            tokens: self
                .tokens
                .iter()
                .filter(|t| !is_stopword(t))
                .cloned()
                .collect(),
        }
    }
}

impl fmt::Display for KeywordSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

impl TryFrom<Vec<String>> for KeywordSet {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        let set = Self::from_tokens(&tokens);
        if set.len() != tokens.len() || set.tokens != tokens {
            return Err(Error::MalformedMessage(
                "keyword tokens must be lowercase, trimmed and unique".into(),
            ));
        }
        Ok(set)
    }
}

impl From<KeywordSet> for Vec<String> {
    fn from(set: KeywordSet) -> Self {
        set.tokens
    }
}

/// Splits on whitespace and punctuation, lowercases, and deduplicates while
/// keeping the first occurrence.
pub fn tokenize(text: &str) -> Result<KeywordSet> {
    let set = KeywordSet::from_text(text);
    if set.is_empty() {
        return Err(Error::EmptyKeywords);
    }
    Ok(set)
}

/// Channel an operator uses to issue a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Text,
    Voice,
    Teleop,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Voice, Modality::Teleop];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "Text",
            Modality::Voice => "Voice",
            Modality::Teleop => "Teleop",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Text" => Ok(Modality::Text),
            "Voice" => Ok(Modality::Voice),
            "Teleop" => Ok(Modality::Teleop),
            other => Err(Error::BadModality(other.to_string())),
        }
    }
}

/// Command message published to the swarm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandEnvelope {
    pub target: String,
    pub command: String,
    pub modality: Modality,
    pub sequence: u64,
    pub issued_at: u64,
}

impl CommandEnvelope {
    pub fn new(
        target: impl Into<String>,
        command: impl Into<String>,
        modality: Modality,
        sequence: u64,
        issued_at: u64,
    ) -> Result<Self> {
        let env = Self {
            target: target.into(),
            command: command.into(),
            modality,
            sequence,
            issued_at,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.is_empty() {
            return Err(Error::MalformedMessage("target is empty".into()));
        }
        if self.command.is_empty() {
            return Err(Error::MalformedMessage("command is empty".into()));
        }
        Ok(())
    }
}

/// Canonical JSON bytes: UTF-8, no insignificant whitespace, keys ordered
/// target, command, modality, sequence, issued_at.
pub fn encode_envelope(env: &CommandEnvelope) -> Vec<u8> {
    debug_assert!(env.validate().is_ok(), "encoding an invalid envelope");
    serde_json::to_vec(env).expect("envelope serialization is infallible")
}

pub fn decode_envelope(bytes: &[u8]) -> Result<CommandEnvelope> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| Error::MalformedMessage(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::MalformedMessage("expected a JSON object".into()))?;

    let target = string_field(obj, "target")?;
    let command = string_field(obj, "command")?;
    let modality = string_field(obj, "modality")?.parse::<Modality>()?;
    let sequence = u64_field(obj, "sequence")?;
    let issued_at = u64_field(obj, "issued_at")?;

    CommandEnvelope::new(target, command, modality, sequence, issued_at)
}

fn string_field(obj: &Map<String, Value>, name: &'static str) -> Result<String> {
    match obj.get(name) {
        None => Err(Error::MissingField(name)),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(Error::MalformedMessage(format!(
            "`{name}` must be a string, got {other}"
        ))),
    }
}

fn u64_field(obj: &Map<String, Value>, name: &'static str) -> Result<u64> {
    match obj.get(name) {
        None => Err(Error::MissingField(name)),
        Some(v) => v.as_u64().ok_or_else(|| {
            Error::MalformedMessage(format!("`{name}` must be a non-negative integer, got {v}"))
        }),
    }
}

/// Planar pose: meters and radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub const fn origin() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        }
    }
}

/// Wraps an angle into (-π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let wrapped = theta.rem_euclid(TAU);
    if wrapped > PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

/// Snapshot of one simulated robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub robot_id: String,
    pub pose: Pose,
    /// Percent, clamped to [0, 100].
    pub battery: f64,
    pub status: String,
}

impl RobotState {
    pub fn new(robot_id: impl Into<String>, pose: Pose, battery: f64) -> Self {
        Self {
            robot_id: robot_id.into(),
            pose: Pose::new(pose.x, pose.y, pose.heading),
            battery: battery.clamp(0.0, 100.0),
            status: "idle".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackStatus {
    Received,
    Executing,
    Completed,
    Failed,
}

impl FeedbackStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, FeedbackStatus::Completed | FeedbackStatus::Failed)
    }
}

/// Robot-to-orchestrator status report for one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEnvelope {
    pub robot_id: String,
    pub command_sequence: u64,
    pub status: FeedbackStatus,
    pub detail: String,
    pub state_snapshot: RobotState,
}

pub fn encode_feedback(fb: &FeedbackEnvelope) -> Vec<u8> {
    serde_json::to_vec(fb).expect("feedback serialization is infallible")
}

pub fn decode_feedback(bytes: &[u8]) -> Result<FeedbackEnvelope> {
    serde_json::from_slice(bytes).map_err(|e| Error::MalformedMessage(e.to_string()))
}
