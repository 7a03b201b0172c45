//! Runtime configuration, loaded from TOML.
//!
//! Every field has a default, so a partial file only overrides what it names.
//! The shipped `config/swarmchat.toml` spells out the defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{Pose, RobotState};
use crate::error::{Error, Result};

pub const COMMAND_TOPIC: &str = "swarmchat/commands";
pub const FEEDBACK_TOPIC: &str = "swarmchat/feedback";
pub const DEFAULT_BROKER_PORT: u16 = 7447;

pub const DEFAULT_CONFIG_TOML: &str = include_str!("../config/swarmchat.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub robots: Vec<RobotSpec>,
    pub bus: BusConfig,
    pub learning: LearningConfig,
    pub planner: PlannerConfig,
    pub robot: RobotConfig,
    pub context: ContextConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            robots: (1..=3)
                .map(|i| RobotSpec {
                    id: format!("TurtleBot {i}"),
                    start_pose: [(i as f64 - 2.0) * 1.0, 0.0, 0.0],
                    battery: 100.0,
                })
                .collect(),
            bus: BusConfig::default(),
            learning: LearningConfig::default(),
            planner: PlannerConfig::default(),
            robot: RobotConfig::default(),
            context: ContextConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative file references resolve against the config file's directory.
        if let Some(dir) = path.parent() {
            for file in [
                &mut cfg.context.stopwords_file,
                &mut cfg.context.templates_file,
            ]
            .into_iter()
            .flatten()
            {
                if file.is_relative() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.robots.is_empty() {
            return Err(Error::Config("at least one robot is required".into()));
        }
        let mut ids: Vec<_> = self.robots.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.robots.len() || ids.iter().any(|id| id.is_empty()) {
            return Err(Error::Config("robot ids must be unique and nonempty".into()));
        }
        let eta = self.learning.learning_rate;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Config(format!("learning_rate {eta} not in (0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.learning.initial_weight) {
            return Err(Error::Config("initial_weight must be in [0, 1]".into()));
        }
        let r = &self.robot;
        if r.dt_s <= 0.0 || r.move_duration_s <= 0.0 || r.angular_speed <= 0.0 {
            return Err(Error::Config("robot timings and speeds must be positive".into()));
        }
        if r.linear_speed > r.max_linear || r.angular_speed > r.max_angular {
            return Err(Error::Config("robot speeds exceed their limits".into()));
        }
        if r.time_scale < 0.0 {
            return Err(Error::Config("time_scale must be non-negative".into()));
        }
        Ok(())
    }

    pub fn robot_ids(&self) -> Vec<String> {
        self.robots.iter().map(|r| r.id.clone()).collect()
    }

    pub fn robot(&self, id: &str) -> Option<&RobotSpec> {
        self.robots.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub id: String,
    /// x (m), y (m), heading (rad).
    pub start_pose: [f64; 3],
    #[serde(default = "full_battery")]
    pub battery: f64,
}

fn full_battery() -> f64 {
    100.0
}

impl RobotSpec {
    pub fn initial_state(&self) -> RobotState {
        let [x, y, heading] = self.start_pose;
        RobotState::new(self.id.clone(), Pose::new(x, y, heading), self.battery)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BusConfig {
    pub broker: String,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            broker: format!("127.0.0.1:{DEFAULT_BROKER_PORT}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub learning_rate: f64,
    pub initial_weight: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            initial_weight: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub stale_after_ms: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            stale_after_ms: 5_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    /// m/s
    pub max_linear: f64,
    /// rad/s
    pub max_angular: f64,
    pub linear_speed: f64,
    pub angular_speed: f64,
    pub move_duration_s: f64,
    /// Integration step.
    pub dt_s: f64,
    /// Percent per second while moving.
    pub drain_rate: f64,
    /// Wall-clock seconds per simulated second; 0 runs as fast as possible.
    pub time_scale: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            max_linear: 0.5,
            max_angular: 1.5,
            linear_speed: 0.2,
            angular_speed: 0.8,
            move_duration_s: 2.0,
            dt_s: 0.05,
            drain_rate: 0.05,
            time_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    #[default]
    Template,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextConfig {
    pub provider: ProviderMode,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub synonyms_enabled: bool,
    pub synonyms: Vec<SynonymSpec>,
    pub stopwords_file: Option<PathBuf>,
    pub templates_file: Option<PathBuf>,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            provider: ProviderMode::Template,
            endpoint: None,
            timeout_ms: 2_000,
            synonyms_enabled: false,
            synonyms: vec![SynonymSpec {
                token: "zone".into(),
                canonical: "area".into(),
                credit: 0.5,
            }],
            stopwords_file: None,
            templates_file: None,
        }
    }
}

/// Two tokens treated as a partial match when synonyms are enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynonymSpec {
    pub token: String,
    pub canonical: String,
    /// Intersection credit for the matched pair, in [0, 1].
    pub credit: f64,
}
