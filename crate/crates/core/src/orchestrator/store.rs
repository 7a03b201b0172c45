//! Append-only JSON-lines files under the data directory.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::analytics::InteractionRecord;
use crate::domain::{decode_envelope, encode_envelope, CommandEnvelope};
use crate::error::Result;

pub const INTERACTIONS_FILE: &str = "interactions.jsonl";
pub const PUBLISHED_FILE: &str = "published.jsonl";
pub const RECEIVED_FILE: &str = "received.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum InteractionEvent {
    Interaction { record: InteractionRecord },
    Comment { sequence: u64, text: String },
}

#[derive(Debug, Default)]
pub struct Replay {
    pub interactions: Vec<InteractionEvent>,
    pub published: Vec<CommandEnvelope>,
    pub received: BTreeMap<String, Vec<CommandEnvelope>>,
}

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn append(&self, file: &str, mut line: Vec<u8>) -> Result<()> {
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(file))?;
        f.write_all(&line)?;
        Ok(())
    }

    pub fn append_interaction(&self, event: &InteractionEvent) -> Result<()> {
        self.append(INTERACTIONS_FILE, serde_json::to_vec(event).expect("serializable"))
    }

    pub fn append_published(&self, env: &CommandEnvelope) -> Result<()> {
        self.append(PUBLISHED_FILE, encode_envelope(env))
    }

    pub fn append_received(&self, env: &CommandEnvelope) -> Result<()> {
        self.append(RECEIVED_FILE, encode_envelope(env))
    }

    /// Reads everything back. A line that fails to parse (for example a torn
    /// final write) is skipped with a warning.
    pub fn load(&self) -> Result<Replay> {
        let mut replay = Replay::default();
        for_each_line(&self.path(INTERACTIONS_FILE), |line| {
            serde_json::from_str(line).map(|e| replay.interactions.push(e)).map_err(|e| e.to_string())
        })?;
        for_each_line(&self.path(PUBLISHED_FILE), |line| {
            decode_envelope(line.as_bytes()).map(|e| replay.published.push(e)).map_err(|e| e.to_string())
        })?;
        for_each_line(&self.path(RECEIVED_FILE), |line| {
            decode_envelope(line.as_bytes())
                .map(|e| replay.received.entry(e.target.clone()).or_default().push(e))
                .map_err(|e| e.to_string())
        })?;
        Ok(replay)
    }
}

fn for_each_line(path: &Path, mut f: impl FnMut(&str) -> std::result::Result<(), String>) -> Result<()> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e.into()),
    };
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if let Err(reason) = f(line) {
            warn!(path = %path.display(), line = n + 1, %reason, "skipping unreadable log line");
        }
    }
    Ok(())
}
