//! Command text and teleop keys to motion primitives.

use crate::decision::{strip_enrichment, trailing_key};
use crate::domain::{KeywordSet, Modality};
use crate::error::{Error, Result};

use super::kinematics::Primitive;

/// Scan order for free text; the first keyword present wins.
pub const KEYWORD_PRECEDENCE: [(&str, Primitive); 6] = [
    ("patrol", Primitive::Patrol),
    ("forward", Primitive::Forward),
    ("backward", Primitive::Backward),
    ("left", Primitive::TurnLeft),
    ("right", Primitive::TurnRight),
    ("stop", Primitive::Halt),
];

pub fn map_teleop_key(key: char) -> Result<Primitive> {
    Ok(match key.to_ascii_uppercase() {
        'P' => Primitive::Patrol,
        'F' | 'W' => Primitive::Forward,
        'B' | 'S' => Primitive::Backward,
        'L' | 'A' => Primitive::TurnLeft,
        'R' | 'D' => Primitive::TurnRight,
        _ => return Err(Error::UnknownKey(key.to_string())),
    })
}

pub fn interpret_command(text: &str, modality: Modality) -> Result<Primitive> {
    match modality {
        Modality::Teleop => {
            let key = trailing_key(text).ok_or(Error::MissingTeleopKey)?;
            let mut chars = key.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => map_teleop_key(c),
                _ => Err(Error::UnknownKey(key.to_string())),
            }
        }
        Modality::Text | Modality::Voice => {
            let tokens = KeywordSet::from_text(strip_enrichment(text));
            KEYWORD_PRECEDENCE
                .iter()
                .find(|(word, _)| tokens.contains(word))
                .map(|&(_, p)| p)
                .ok_or_else(|| Error::UnrecognizedCommand(text.to_string()))
        }
    }
}
