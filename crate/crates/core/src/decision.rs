//! From a selected context to a publishable envelope: intent rules, state
//! enrichment, modality suggestion and packaging.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::domain::{CommandEnvelope, KeywordSet, Modality, RobotState};
use crate::error::{Error, Result};

pub const TELEOP_THRESHOLD: f64 = 0.85;

/// Marker that opens the state-enrichment suffix.
pub const ENRICHMENT_OPEN: &str = " [from (";
/// Prefix of the trailing key token on teleop commands.
pub const KEY_TOKEN_PREFIX: &str = "key:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntentLabel {
    PatrolMode,
    NavigationMode,
    GeneralOperation,
}

impl IntentLabel {
    pub fn display(self) -> &'static str {
        match self {
            IntentLabel::PatrolMode => "Patrol mode activated.",
            IntentLabel::NavigationMode => "Navigation mode activated.",
            IntentLabel::GeneralOperation => "General operation.",
        }
    }
}

impl fmt::Display for IntentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display())
    }
}

/// "patrol" wins over "go"; anything else is a general operation.
pub fn recognize_intent(k: &KeywordSet) -> Result<IntentLabel> {
    if k.is_empty() {
        return Err(Error::EmptyKeywords);
    }
    Ok(if k.contains("patrol") {
        IntentLabel::PatrolMode
    } else if k.contains("go") {
        IntentLabel::NavigationMode
    } else {
        IntentLabel::GeneralOperation
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedCommand {
    pub base_context: String,
    pub enriched_text: String,
    pub robot_id: String,
    pub state_used: RobotState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanWarning {
    StaleState { robot_id: String, age_ms: u64 },
}

impl fmt::Display for PlanWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanWarning::StaleState { robot_id, age_ms } => {
                write!(f, "state of {robot_id} is {age_ms} ms old")
            }
        }
    }
}

fn fixed2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Appends the robot's position and battery to the context text. A state
/// older than `stale_after_ms` still plans but yields a warning.
pub fn plan_task(
    context_text: &str,
    state: &RobotState,
    state_age_ms: u64,
    stale_after_ms: u64,
) -> (PlannedCommand, Option<PlanWarning>) {
    let enriched_text = format!(
        "{context_text}{ENRICHMENT_OPEN}{},{}); battery {}%]",
        fixed2(state.pose.x),
        fixed2(state.pose.y),
        state.battery.round() as i64
    );
    let warning = (state_age_ms > stale_after_ms).then(|| PlanWarning::StaleState {
        robot_id: state.robot_id.clone(),
        age_ms: state_age_ms,
    });
    (
        PlannedCommand {
            base_context: context_text.to_string(),
            enriched_text,
            robot_id: state.robot_id.clone(),
            state_used: state.clone(),
        },
        warning,
    )
}

/// Custom commands go out verbatim.
pub fn plan_custom(text: &str, state: &RobotState) -> PlannedCommand {
    PlannedCommand {
        base_context: text.to_string(),
        enriched_text: text.to_string(),
        robot_id: state.robot_id.clone(),
        state_used: state.clone(),
    }
}

/// Removes a trailing teleop key token and the enrichment suffix, leaving the
/// operator-facing command text.
pub fn strip_enrichment(command: &str) -> &str {
    let mut text = command.trim_end();
    if let Some((head, last)) = text.rsplit_once(' ') {
        if last.starts_with(KEY_TOKEN_PREFIX) {
            text = head.trim_end();
        }
    }
    match text.find(ENRICHMENT_OPEN) {
        Some(pos) if text.ends_with(']') => &text[..pos],
        _ => text,
    }
}

/// The teleop key carried as the last token of a command, if any.
pub fn trailing_key(command: &str) -> Option<&str> {
    command
        .trim_end()
        .rsplit(' ')
        .next()
        .and_then(|t| t.strip_prefix(KEY_TOKEN_PREFIX))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SuggestionReason {
    HighSimilarity,
    SpeakKeyword,
    Default,
    /// Custom commands: the operator's own modality stands as the suggestion.
    UserSupplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityRecommendation {
    pub suggested: Modality,
    pub reason: SuggestionReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySuggestion {
    pub suggested: Modality,
    pub reason: SuggestionReason,
    pub user_selected: Modality,
    pub overridden: bool,
}

/// Score ≥ 0.85 → Teleop; else "speak" in the text → Voice; else Text.
pub fn suggest_modality(context_text: &str, score: f64) -> ModalityRecommendation {
    if score >= TELEOP_THRESHOLD {
        ModalityRecommendation {
            suggested: Modality::Teleop,
            reason: SuggestionReason::HighSimilarity,
        }
    } else if KeywordSet::from_text(context_text).contains("speak") {
        ModalityRecommendation {
            suggested: Modality::Voice,
            reason: SuggestionReason::SpeakKeyword,
        }
    } else {
        ModalityRecommendation {
            suggested: Modality::Text,
            reason: SuggestionReason::Default,
        }
    }
}

pub fn user_supplied(modality: Modality) -> ModalityRecommendation {
    ModalityRecommendation {
        suggested: modality,
        reason: SuggestionReason::UserSupplied,
    }
}

/// The operator always has the last word.
pub fn resolve_modality(rec: ModalityRecommendation, user_choice: Modality) -> ModalitySuggestion {
    ModalitySuggestion {
        suggested: rec.suggested,
        reason: rec.reason,
        user_selected: user_choice,
        overridden: rec.suggested != user_choice,
    }
}

/// Turns planned commands into envelopes for the known fleet, numbering them
/// from one shared counter.
#[derive(Debug)]
pub struct CommandPackager {
    robots: Vec<String>,
    next_sequence: AtomicU64,
}

impl CommandPackager {
    pub fn new(robots: Vec<String>) -> Self {
        Self::starting_at(robots, 1)
    }

    pub fn starting_at(robots: Vec<String>, first_sequence: u64) -> Self {
        Self {
            robots,
            next_sequence: AtomicU64::new(first_sequence),
        }
    }

    pub fn knows(&self, robot_id: &str) -> bool {
        self.robots.iter().any(|r| r == robot_id)
    }

    pub fn package(
        &self,
        planned: &PlannedCommand,
        modality: Modality,
        teleop_key: Option<char>,
        issued_at: u64,
    ) -> Result<CommandEnvelope> {
        if !self.knows(&planned.robot_id) {
            return Err(Error::UnknownRobot(planned.robot_id.clone()));
        }
        let command = match (modality, teleop_key) {
            (Modality::Teleop, Some(key)) => {
                format!("{} {KEY_TOKEN_PREFIX}{}", planned.enriched_text, key.to_ascii_uppercase())
            }
            (Modality::Teleop, None) => return Err(Error::MissingTeleopKey),
            _ => planned.enriched_text.clone(),
        };
        if command.trim().is_empty() {
            return Err(Error::MalformedMessage("command is empty".into()));
        }
        let sequence = self.next_sequence.fetch_add(1, Ordering::SeqCst);
        CommandEnvelope::new(planned.robot_id.clone(), command, modality, sequence, issued_at)
    }
}
