//! Per-operator session state.

use serde::{Deserialize, Serialize};

use crate::context::CandidateContext;
use crate::decision::{IntentLabel, ModalityRecommendation, ModalitySuggestion};
use crate::domain::KeywordSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Drafting,
    Suggested,
    Dispatched,
    Acknowledged,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Drafting => "Drafting",
            SessionStatus::Suggested => "Suggested",
            SessionStatus::Dispatched => "Dispatched",
            SessionStatus::Acknowledged => "Acknowledged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    #[serde(flatten)]
    pub context: CandidateContext,
    pub suggestion: ModalityRecommendation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    /// Position in the ranked candidate list.
    Candidate { rank: usize },
    Custom { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub status: SessionStatus,
    pub keywords: Option<KeywordSet>,
    pub intent: Option<IntentLabel>,
    pub candidates: Vec<CandidateView>,
    pub selection: Option<Selection>,
    pub modality: Option<ModalitySuggestion>,
    pub target: Option<String>,
    pub dispatched_sequence: Option<u64>,
    pub comment: Option<String>,
}

impl Session {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            status: SessionStatus::Drafting,
            keywords: None,
            intent: None,
            candidates: Vec::new(),
            selection: None,
            modality: None,
            target: None,
            dispatched_sequence: None,
            comment: None,
        }
    }

    fn expect(&self, expected: SessionStatus) -> Result<()> {
        if self.status == expected {
            Ok(())
        } else {
            Err(Error::InvalidState {
                expected: expected.as_str(),
                actual: self.status.as_str(),
            })
        }
    }

    /// New keywords restart the session from any state.
    pub fn suggest(&mut self, keywords: KeywordSet, intent: IntentLabel, candidates: Vec<CandidateView>) {
        *self = Session {
            session_id: std::mem::take(&mut self.session_id),
            status: SessionStatus::Drafting,
            ..Session::new("")
        };
        self.keywords = Some(keywords);
        self.intent = Some(intent);
        self.candidates = candidates;
        self.status = SessionStatus::Suggested;
    }

    pub fn ensure_suggested(&self) -> Result<()> {
        self.expect(SessionStatus::Suggested)
    }

    pub fn dispatched(
        &mut self,
        selection: Selection,
        modality: ModalitySuggestion,
        target: String,
        sequence: u64,
    ) -> Result<()> {
        self.expect(SessionStatus::Suggested)?;
        self.selection = Some(selection);
        self.modality = Some(modality);
        self.target = Some(target);
        self.dispatched_sequence = Some(sequence);
        self.status = SessionStatus::Dispatched;
        Ok(())
    }

    /// Applies a Received report; returns whether the status changed.
    pub fn acknowledge(&mut self, sequence: u64) -> bool {
        if self.status == SessionStatus::Dispatched && self.dispatched_sequence == Some(sequence) {
            self.status = SessionStatus::Acknowledged;
            true
        } else {
            false
        }
    }

    pub fn ensure_commentable(&self) -> Result<u64> {
        match (self.status, self.dispatched_sequence) {
            (SessionStatus::Dispatched | SessionStatus::Acknowledged, Some(seq)) => Ok(seq),
            _ => Err(Error::InvalidState {
                expected: SessionStatus::Dispatched.as_str(),
                actual: self.status.as_str(),
            }),
        }
    }
}
