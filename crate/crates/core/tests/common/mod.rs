//! Independent reference implementations and expected values.
//!
//! Nothing here calls into the crate's scoring code: sets are plain
//! `BTreeSet`s and every formula is written out again from its definition.

#![allow(dead_code)]

use std::collections::BTreeSet;

pub const STOPWORDS: [&str; 12] = [
    "a", "an", "and", "area", "at", "for", "in", "of", "on", "the", "to", "with",
];

pub type Words = BTreeSet<String>;

pub fn words(text: &str) -> Words {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn content(set: &Words) -> Words {
    set.iter().filter(|w| !STOPWORDS.contains(&w.as_str())).cloned().collect()
}

/// Plain set overlap of the stopword-free sets; `None` when both are empty.
pub fn overlap(a: &Words, b: &Words) -> Option<f64> {
    let (a, b) = (content(a), content(b));
    let inter = a.intersection(&b).count();
    let union = a.union(&b).count();
    (union > 0).then(|| inter as f64 / union as f64)
}

pub fn base_score(j: f64) -> f64 {
    0.6 + 0.4 * j
}

/// Removes a trailing ` key:X` token and a ` [from (...)]` suffix.
pub fn operator_text(command: &str) -> String {
    let mut parts: Vec<&str> = command.split(' ').collect();
    if parts.last().is_some_and(|p| p.starts_with("key:")) {
        parts.pop();
    }
    let joined = parts.join(" ");
    match (joined.find(" [from ("), joined.ends_with(']')) {
        (Some(i), true) => joined[..i].to_string(),
        _ => joined,
    }
}

pub fn tp_bonus(final_command: &str) -> f64 {
    let w = content(&words(&operator_text(final_command)));
    if w.contains("go") || w.contains("execute") { 0.1 } else { 0.0 }
}

pub fn ir_bonus(keywords: &Words) -> f64 {
    if content(keywords).contains("patrol") { 0.15 } else { 0.0 }
}

pub fn ms_bonus(suggested: &str, selected: &str) -> f64 {
    if suggested == selected { 0.1 } else { -0.05 }
}

pub fn cg_alignment(context: &str, final_command: &str) -> f64 {
    overlap(&words(&operator_text(context)), &words(&operator_text(final_command))).unwrap_or(0.0)
}

pub fn cg_bonus(selected_context: &str, final_command: &str) -> f64 {
    0.1 * cg_alignment(selected_context, final_command)
}

pub fn blend(base: f64, bonus: f64, w: f64) -> f64 {
    ((base + bonus + w) / 2.0).clamp(0.0, 1.0)
}

pub fn update(w: f64, s: f64, eta: f64) -> f64 {
    (w + eta * (s - w)).clamp(0.0, 1.0)
}

pub fn satisfaction(base: f64, overridden: bool, teleop_with_key: bool) -> &'static str {
    let c = [base >= 0.85, !overridden, teleop_with_key].iter().filter(|b| **b).count();
    ["Low", "Medium", "High", "Very High"][c]
}

/// One row of the reference performance table.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceRow {
    pub module: &'static str,
    pub step: usize,
    pub context: &'static str,
    pub score: f64,
    pub sug: &'static str,
    pub user: &'static str,
    pub sat: &'static str,
    pub com: &'static str,
}

#[allow(clippy::too_many_arguments)]
const fn row(
    module: &'static str,
    step: usize,
    context: &'static str,
    score: f64,
    sug: &'static str,
    user: &'static str,
    sat: &'static str,
    com: &'static str,
) -> ReferenceRow {
    ReferenceRow { module, step, context, score, sug, user, sat, com }
}

pub const REFERENCE_TABLE: [ReferenceRow; 16] = [
    row("TP", 1, "Patrol area", 1.00, "Teleop", "Teleop (P)", "Very High", ""),
    row("TP", 2, "Patrol zone", 1.00, "Teleop", "Teleop (F)", "Very High", ""),
    row("TP", 3, "run right", 0.60, "Voice", "Voice", "Medium", "good"),
    row("TP", 4, "Patrol perimeter", 1.00, "Text", "Text", "High", ""),
    row("IR", 1, "Patrol area", 1.00, "Teleop", "Teleop (P)", "Very High", ""),
    row("IR", 2, "Patrol zone", 1.00, "Teleop", "Teleop (F)", "Very High", ""),
    row("IR", 3, "run right", 0.60, "Voice", "Voice", "Medium", "good"),
    row("IR", 4, "Patrol perimeter", 1.00, "Text", "Text", "High", ""),
    row("MS", 1, "Patrol area", 1.00, "Teleop", "Teleop (P)", "Very High", ""),
    row("MS", 2, "Patrol zone", 1.00, "Teleop", "Teleop (F)", "Very High", ""),
    row("MS", 3, "run right", 0.80, "Voice", "Voice", "Medium", "good"),
    row("MS", 4, "Patrol perimeter", 1.00, "Text", "Text", "High", ""),
    row("CG", 1, "Patrol area", 1.00, "Teleop", "Teleop (P)", "Very High", ""),
    row("CG", 2, "Patrol zone", 0.90, "Teleop", "Teleop (F)", "Very High", ""),
    row("CG", 3, "run right", 0.60, "Voice", "Voice", "Medium", "good"),
    row("CG", 4, "Patrol perimeter", 0.80, "Text", "Text", "High", ""),
];

pub const SCORE_TOLERANCE: f64 = 0.005;

pub const VOCABULARY: [&str; 12] = [
    "go", "move", "run", "execute", "patrol", "search", "forward", "backward", "left", "right",
    "area", "zone",
];
