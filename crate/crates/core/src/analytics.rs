//! Learning analytics for the four pipeline modules.
//!
//! Each dispatched command becomes an [`InteractionRecord`]. For every module
//! the record yields a keyword/agreement bonus, a new score `B + bonus`, a
//! blended score `(B + bonus + w) / 2` and a weight step `w += η (S − w)`.
//! The graph also keeps modality counts and satisfaction tallies.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::LearningConfig;
use crate::context::{scale_similarity, Similarity};
use crate::decision::{strip_enrichment, ModalitySuggestion};
use crate::domain::{KeywordSet, Modality};
use crate::error::{Error, Result};

pub const TP_BONUS: f64 = 0.1;
pub const IR_BONUS: f64 = 0.15;
pub const MS_MATCH_BONUS: f64 = 0.1;
pub const MS_MISMATCH_BONUS: f64 = -0.05;
pub const CG_BONUS_SCALE: f64 = 0.1;
pub const SATISFACTION_SCORE_THRESHOLD: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModuleId {
    /// Task planner.
    TP,
    /// Intent recognition.
    IR,
    /// Modality selection.
    MS,
    /// Context generator.
    CG,
}

impl ModuleId {
    pub const ALL: [ModuleId; 4] = [ModuleId::TP, ModuleId::IR, ModuleId::MS, ModuleId::CG];

    pub fn as_str(self) -> &'static str {
        match self {
            ModuleId::TP => "TP",
            ModuleId::IR => "IR",
            ModuleId::MS => "MS",
            ModuleId::CG => "CG",
        }
    }
}

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    /// Sequence number of the dispatched command.
    pub sequence: u64,
    pub keywords: KeywordSet,
    pub selected_context: String,
    /// Best-ranked generated context at dispatch time.
    pub top_context: String,
    pub custom: bool,
    pub final_command: String,
    pub base_score: f64,
    pub modality: ModalitySuggestion,
    pub teleop_key: Option<char>,
    pub comment: Option<String>,
    pub robot_id: String,
    pub timestamp: u64,
}

impl InteractionRecord {
    pub fn validate(&self) -> Result<()> {
        if !(0.6..=1.0).contains(&self.base_score) {
            return Err(Error::InvalidRatio(self.base_score));
        }
        if self.teleop_key.is_some() && self.modality.user_selected != Modality::Teleop {
            return Err(Error::MalformedMessage(
                "teleop key given for a non-teleop command".into(),
            ));
        }
        Ok(())
    }

    fn command_tokens(&self) -> KeywordSet {
        KeywordSet::from_text(strip_enrichment(&self.final_command))
    }
}

/// Context/command agreement: overlap of the stopword-free token sets, with
/// the enrichment suffix and teleop key removed from both texts.
pub fn alignment(similarity: &Similarity, context: &str, command: &str) -> Result<f64> {
    let context_tokens = KeywordSet::from_text(strip_enrichment(context));
    let command_tokens = KeywordSet::from_text(strip_enrichment(command));
    similarity.ratio(&context_tokens, &command_tokens)
}

fn alignment_or_zero(similarity: &Similarity, context: &str, command: &str) -> f64 {
    alignment(similarity, context, command).unwrap_or(0.0)
}

pub fn compute_bonus(similarity: &Similarity, module: ModuleId, rec: &InteractionRecord) -> f64 {
    match module {
        ModuleId::TP => {
            let tokens = similarity.strip(&rec.command_tokens());
            if tokens.contains("go") || tokens.contains("execute") {
                TP_BONUS
            } else {
                0.0
            }
        }
        ModuleId::IR => {
            if similarity.strip(&rec.keywords).contains("patrol") {
                IR_BONUS
            } else {
                0.0
            }
        }
        ModuleId::MS => {
            if rec.modality.suggested == rec.modality.user_selected {
                MS_MATCH_BONUS
            } else {
                MS_MISMATCH_BONUS
            }
        }
        ModuleId::CG => {
            CG_BONUS_SCALE
                * alignment_or_zero(similarity, &rec.selected_context, &rec.final_command)
        }
    }
}

/// `(B + bonus + w) / 2`, clamped to [0, 1].
pub fn blend_score(base: f64, bonus: f64, weight: f64) -> f64 {
    ((base + bonus + weight) / 2.0).clamp(0.0, 1.0)
}

/// Score a module earns for one interaction, as shown in the performance
/// table. TP, IR and MS report `B + bonus` clamped to [0, 1]. CG reports how
/// well its best-ranked context anticipated the dispatched command, on the
/// same [0.6, 1.0] scale as context scores.
pub fn interaction_score(similarity: &Similarity, module: ModuleId, rec: &InteractionRecord) -> f64 {
    match module {
        ModuleId::CG => {
            let f = alignment_or_zero(similarity, &rec.top_context, &rec.final_command);
            scale_similarity(f).expect("alignment is within [0, 1]")
        }
        _ => (rec.base_score + compute_bonus(similarity, module, rec)).clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleLearningState {
    pub module: ModuleId,
    pub weight: f64,
    pub learning_rate: f64,
    pub score_history: Vec<f64>,
}

impl ModuleLearningState {
    pub fn new(module: ModuleId, cfg: LearningConfig) -> Self {
        Self {
            module,
            weight: cfg.initial_weight,
            learning_rate: cfg.learning_rate,
            score_history: Vec::new(),
        }
    }

    /// `w ← w + η (S − w)`, clamped to [0, 1]; S is appended to the history.
    pub fn update_weight(&mut self, score: f64) {
        let w = self.weight + self.learning_rate * (score - self.weight);
        self.weight = w.clamp(0.0, 1.0);
        self.score_history.push(score);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SatisfactionLevel {
    Low,
    Medium,
    High,
    VeryHigh,
}

impl SatisfactionLevel {
    pub fn from_count(c: u8) -> Self {
        match c {
            0 => SatisfactionLevel::Low,
            1 => SatisfactionLevel::Medium,
            2 => SatisfactionLevel::High,
            _ => SatisfactionLevel::VeryHigh,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SatisfactionLevel::Low => "Low",
            SatisfactionLevel::Medium => "Medium",
            SatisfactionLevel::High => "High",
            SatisfactionLevel::VeryHigh => "Very High",
        }
    }
}

impl fmt::Display for SatisfactionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Counts three criteria: base score ≥ 0.85, suggestion accepted, teleop key
/// confirmed.
pub fn satisfaction_criteria(rec: &InteractionRecord) -> u8 {
    let teleop_confirmed =
        rec.modality.user_selected == Modality::Teleop && rec.teleop_key.is_some();
    [
        rec.base_score >= SATISFACTION_SCORE_THRESHOLD,
        !rec.modality.overridden,
        teleop_confirmed,
    ]
    .into_iter()
    .filter(|&ok| ok)
    .count() as u8
}

pub fn classify_satisfaction(rec: &InteractionRecord) -> SatisfactionLevel {
    SatisfactionLevel::from_count(satisfaction_criteria(rec))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModuleEvaluation {
    pub module: ModuleId,
    pub bonus: f64,
    /// `B + bonus`, unclamped.
    pub new_score: f64,
    pub interaction_score: f64,
    /// Blended score S that drives the weight update.
    pub blended_score: f64,
    pub weight_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedInteraction {
    pub record: InteractionRecord,
    pub satisfaction: SatisfactionLevel,
    pub criteria: u8,
    pub evaluations: Vec<ModuleEvaluation>,
}

impl RecordedInteraction {
    pub fn evaluation(&self, module: ModuleId) -> &ModuleEvaluation {
        self.evaluations
            .iter()
            .find(|e| e.module == module)
            .expect("every module is evaluated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSnapshot {
    pub module: ModuleId,
    pub weight: f64,
    pub latest_score: Option<f64>,
    /// Blended scores, one per interaction.
    pub score_history: Vec<f64>,
    /// Table scores, one per interaction.
    pub interaction_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsSnapshot {
    pub interactions: u64,
    pub modules: Vec<ModuleSnapshot>,
    pub modality_counts: BTreeMap<Modality, u64>,
    pub satisfaction: BTreeMap<SatisfactionLevel, u64>,
}

impl AnalyticsSnapshot {
    pub fn module(&self, id: ModuleId) -> &ModuleSnapshot {
        self.modules
            .iter()
            .find(|m| m.module == id)
            .expect("snapshot covers every module")
    }
}

/// Single-writer owner of all learning state.
#[derive(Debug, Clone)]
pub struct LearningGraph {
    similarity: Similarity,
    modules: Vec<ModuleLearningState>,
    modality_counts: BTreeMap<Modality, u64>,
    satisfaction: BTreeMap<SatisfactionLevel, u64>,
    interactions: Vec<RecordedInteraction>,
}

impl LearningGraph {
    pub fn new(cfg: LearningConfig, similarity: Similarity) -> Self {
        Self {
            similarity,
            modules: ModuleId::ALL
                .iter()
                .map(|&m| ModuleLearningState::new(m, cfg))
                .collect(),
            modality_counts: Modality::ALL.iter().map(|&m| (m, 0)).collect(),
            satisfaction: BTreeMap::new(),
            interactions: Vec::new(),
        }
    }

    pub fn module_state(&self, id: ModuleId) -> &ModuleLearningState {
        &self.modules[id as usize]
    }

    pub fn interactions(&self) -> &[RecordedInteraction] {
        &self.interactions
    }

    /// Updates every module independently from the same record.
    pub fn record_interaction(&mut self, rec: InteractionRecord) -> Result<AnalyticsSnapshot> {
        rec.validate()?;
        let mut evaluations = Vec::with_capacity(ModuleId::ALL.len());
        for state in &mut self.modules {
            let bonus = compute_bonus(&self.similarity, state.module, &rec);
            let blended = blend_score(rec.base_score, bonus, state.weight);
            state.update_weight(blended);
            evaluations.push(ModuleEvaluation {
                module: state.module,
                bonus,
                new_score: rec.base_score + bonus,
                interaction_score: interaction_score(&self.similarity, state.module, &rec),
                blended_score: blended,
                weight_after: state.weight,
            });
        }
        let criteria = satisfaction_criteria(&rec);
        let satisfaction = SatisfactionLevel::from_count(criteria);
        *self
            .modality_counts
            .entry(rec.modality.user_selected)
            .or_default() += 1;
        *self.satisfaction.entry(satisfaction).or_default() += 1;
        self.interactions.push(RecordedInteraction {
            record: rec,
            satisfaction,
            criteria,
            evaluations,
        });
        Ok(self.snapshot())
    }

    /// Last write wins; empty text is ignored. Returns false when no
    /// interaction has that sequence.
    pub fn attach_comment(&mut self, sequence: u64, text: &str) -> bool {
        let Some(found) = self
            .interactions
            .iter_mut()
            .find(|i| i.record.sequence == sequence)
        else {
            return false;
        };
        if !text.trim().is_empty() {
            found.record.comment = Some(text.trim().to_string());
        }
        true
    }

    pub fn snapshot(&self) -> AnalyticsSnapshot {
        let modules = self
            .modules
            .iter()
            .map(|state| ModuleSnapshot {
                module: state.module,
                weight: state.weight,
                latest_score: state.score_history.last().copied(),
                score_history: state.score_history.clone(),
                interaction_scores: self
                    .interactions
                    .iter()
                    .map(|i| i.evaluation(state.module).interaction_score)
                    .collect(),
            })
            .collect();
        AnalyticsSnapshot {
            interactions: self.interactions.len() as u64,
            modules,
            modality_counts: self.modality_counts.clone(),
            satisfaction: self.satisfaction.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{resolve_modality, suggest_modality, user_supplied};
    use crate::domain::tokenize;
    use proptest::prelude::*;

    fn record(
        keywords: &str,
        selected: &str,
        command: &str,
        base: f64,
        suggestion: ModalitySuggestion,
        key: Option<char>,
    ) -> InteractionRecord {
        InteractionRecord {
            sequence: 1,
            keywords: tokenize(keywords).unwrap(),
            selected_context: selected.into(),
            top_context: selected.into(),
            custom: false,
            final_command: command.into(),
            base_score: base,
            modality: suggestion,
            teleop_key: key,
            comment: None,
            robot_id: "TurtleBot 1".into(),
            timestamp: 0,
        }
    }

    fn accepted(m: Modality) -> ModalitySuggestion {
        resolve_modality(user_supplied(m), m)
    }

    #[test]
    fn alignment_examples() {
        let sim = Similarity::default();
        assert_eq!(alignment(&sim, "patrol zone", "patrol zone").unwrap(), 1.0);
        assert_eq!(alignment(&sim, "patrol", "run right").unwrap(), 0.0);
        let enriched = "patrol area [from (0.00,0.00); battery 100%]";
        assert_eq!(alignment(&sim, "patrol area", enriched).unwrap(), 1.0);
        // Without enrichment stripping the suffix tokens dilute the overlap:
        // {patrol} vs {patrol, from, 0, 00, battery, 100}.
        let raw = sim
            .ratio(&KeywordSet::from_text("patrol area"), &KeywordSet::from_text(enriched))
            .unwrap();
        assert_eq!(raw, 1.0 / 6.0);
    }

    #[test]
    fn bonus_examples() {
        let sim = Similarity::default();
        let go = record("go patrol", "go patrol the area", "go patrol the area", 1.0, accepted(Modality::Text), None);
        assert_eq!(compute_bonus(&sim, ModuleId::TP, &go), 0.1);
        let mf = record("move forward", "Move forward", "Move forward", 1.0, accepted(Modality::Text), None);
        assert_eq!(compute_bonus(&sim, ModuleId::IR, &mf), 0.0);
        assert_eq!(compute_bonus(&sim, ModuleId::IR, &go), 0.15);
        let mismatch = resolve_modality(user_supplied(Modality::Voice), Modality::Text);
        let ms = record("move", "Move", "Move", 0.6, mismatch, None);
        assert_eq!(compute_bonus(&sim, ModuleId::MS, &ms), -0.05);
        assert_eq!(compute_bonus(&sim, ModuleId::MS, &mf), 0.1);
        assert_eq!(compute_bonus(&sim, ModuleId::CG, &mf), 0.1);
    }

    #[test]
    fn blend_examples() {
        assert_eq!(blend_score(1.0, 0.15, 1.0), 1.0);
        assert_eq!(blend_score(0.6, 0.0, 0.6), 0.6);
        assert!((blend_score(0.6, -0.05, 0.8) - 0.675).abs() < 1e-12);
    }

    #[test]
    fn weight_update_examples() {
        let mut s = ModuleLearningState::new(ModuleId::TP, LearningConfig::default());
        s.update_weight(1.0);
        assert!((s.weight - 0.82).abs() < 1e-12);
        s.weight = 0.5;
        s.update_weight(0.5);
        assert_eq!(s.weight, 0.5);
        assert_eq!(s.score_history, [1.0, 0.5]);
    }

    #[test]
    fn repeated_interaction_follows_closed_form() {
        let (base, bonus, eta) = (0.7, 0.1, 0.1);
        let mut s = ModuleLearningState::new(
            ModuleId::TP,
            LearningConfig {
                learning_rate: eta,
                initial_weight: 0.2,
            },
        );
        let mut closed = 0.2;
        for _ in 0..50 {
            s.update_weight(blend_score(base, bonus, s.weight));
            closed = closed * (1.0 - eta / 2.0) + (eta / 2.0) * (base + bonus);
            assert!((s.weight - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn satisfaction_examples() {
        let teleop = resolve_modality(suggest_modality("Patrol area", 1.0), Modality::Teleop);
        let r = record("patrol area", "Patrol area", "Patrol area", 1.0, teleop, Some('P'));
        assert_eq!(classify_satisfaction(&r), SatisfactionLevel::VeryHigh);

        let r = record("patrol perimeter", "Patrol perimeter", "Patrol perimeter", 1.0, accepted(Modality::Text), None);
        assert_eq!(classify_satisfaction(&r), SatisfactionLevel::High);

        let r = record("move forward", "run right", "run right", 0.6, accepted(Modality::Voice), None);
        assert_eq!(classify_satisfaction(&r), SatisfactionLevel::Medium);

        let over = resolve_modality(suggest_modality("run right", 0.6), Modality::Voice);
        let r = record("move forward", "run right", "run right", 0.6, over, None);
        assert_eq!(classify_satisfaction(&r), SatisfactionLevel::Low);
    }

    #[test]
    fn record_validation() {
        let r = record("go", "Go", "Go", 0.5, accepted(Modality::Text), None);
        assert!(r.validate().is_err());
        let r = record("go", "Go", "Go", 0.8, accepted(Modality::Text), Some('F'));
        assert!(r.validate().is_err());
    }

    #[test]
    fn graph_counts_and_histories() {
        let mut g = LearningGraph::new(LearningConfig::default(), Similarity::default());
        let first = g
            .record_interaction(record("patrol", "Patrol", "Patrol", 1.0, accepted(Modality::Teleop), Some('P')))
            .unwrap();
        // First interaction blends against the initial weight 0.8.
        let tp = first.module(ModuleId::TP);
        assert!((tp.score_history[0] - 0.9).abs() < 1e-12);
        assert!((tp.weight - 0.81).abs() < 1e-12);

        for m in [Modality::Teleop, Modality::Teleop, Modality::Voice] {
            let key = (m == Modality::Teleop).then_some('F');
            g.record_interaction(record("go", "Go", "Go", 0.8, accepted(m), key)).unwrap();
        }
        let snap = g.snapshot();
        assert_eq!(snap.modality_counts[&Modality::Teleop], 3);
        assert_eq!(snap.modality_counts[&Modality::Voice], 1);
        assert_eq!(snap.modality_counts[&Modality::Text], 0);
        assert_eq!(snap.modality_counts.values().sum::<u64>(), snap.interactions);
        for m in &snap.modules {
            assert_eq!(m.score_history.len(), 4);
            assert_eq!(m.interaction_scores.len(), 4);
        }
    }

    #[test]
    fn comments_last_write_wins() {
        let mut g = LearningGraph::new(LearningConfig::default(), Similarity::default());
        g.record_interaction(record("go", "Go", "Go", 0.8, accepted(Modality::Voice), None)).unwrap();
        assert!(g.attach_comment(1, "good"));
        assert!(g.attach_comment(1, ""));
        assert_eq!(g.interactions()[0].record.comment.as_deref(), Some("good"));
        assert!(g.attach_comment(1, "better"));
        assert_eq!(g.interactions()[0].record.comment.as_deref(), Some("better"));
        assert!(!g.attach_comment(99, "lost"));
    }

    proptest! {
        #[test]
        fn blend_monotone_and_bounded(
            b in 0.6f64..=1.0, bonus in -0.05f64..=0.15, w in 0.0f64..=1.0, d in 0.0f64..0.2,
        ) {
            let s = blend_score(b, bonus, w);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!(blend_score(b + d, bonus, w) >= s);
            prop_assert!(blend_score(b, bonus + d, w) >= s);
            prop_assert!(blend_score(b, bonus, w + d) >= s);
        }

        #[test]
        fn update_is_a_contraction(w in 0.0f64..=1.0, s in 0.0f64..=1.0, eta in 0.001f64..=1.0) {
            let mut st = ModuleLearningState::new(ModuleId::MS, LearningConfig { learning_rate: eta, initial_weight: w });
            st.update_weight(s);
            prop_assert!(((st.weight - s).abs() - (1.0 - eta) * (w - s).abs()).abs() <= 1e-12);
        }
    }
}
