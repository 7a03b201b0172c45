//! Motion primitives and unicycle integration.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::config::RobotConfig;
use crate::domain::{normalize_angle, Pose, RobotState};
use crate::error::{Error, Result};

pub const STATUS_IDLE: &str = "idle";
pub const STATUS_MOVING: &str = "moving";
pub const STATUS_DEPLETED: &str = "battery depleted";

/// Linear m/s, angular rad/s, duration s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub linear: f64,
    pub angular: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Primitive {
    Patrol,
    Forward,
    Backward,
    TurnLeft,
    TurnRight,
    Halt,
}

impl Primitive {
    pub fn label(self) -> &'static str {
        match self {
            Primitive::Patrol => "patrol",
            Primitive::Forward => "forward",
            Primitive::Backward => "backward",
            Primitive::TurnLeft => "turn-left",
            Primitive::TurnRight => "turn-right",
            Primitive::Halt => "halt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPlan {
    pub label: String,
    pub steps: Vec<VelocityCommand>,
}

impl MotionPlan {
    pub fn total_duration(&self) -> f64 {
        self.steps.iter().map(|s| s.duration).sum()
    }
}

pub fn to_velocity(primitive: Primitive, cfg: &RobotConfig) -> MotionPlan {
    let v = cfg.linear_speed;
    let w = cfg.angular_speed;
    let t = cfg.move_duration_s;
    let t_turn = FRAC_PI_2 / w;
    let forward = VelocityCommand { linear: v, angular: 0.0, duration: t };
    let left = VelocityCommand { linear: 0.0, angular: w, duration: t_turn };
    let steps = match primitive {
        Primitive::Forward => vec![forward],
        Primitive::Backward => vec![VelocityCommand { linear: -v, ..forward }],
        Primitive::TurnLeft => vec![left],
        Primitive::TurnRight => vec![VelocityCommand { angular: -w, ..left }],
        Primitive::Patrol => [forward, left].repeat(4),
        Primitive::Halt => vec![VelocityCommand { linear: 0.0, angular: 0.0, duration: cfg.dt_s }],
    };
    MotionPlan { label: primitive.label().to_string(), steps }
}

/// Splits `duration` into steps of `dt`; the last step takes the remainder
/// so the slices sum to the duration exactly.
pub fn slices(duration: f64, dt: f64) -> impl Iterator<Item = f64> {
    let n = ((duration / dt) - 1e-9).ceil().max(1.0) as usize;
    let last = duration - (n - 1) as f64 * dt;
    (0..n).map(move |i| if i + 1 == n { last } else { dt })
}

/// One unicycle step. Refuses to move on an empty battery.
pub fn step_kinematics(
    state: &RobotState,
    v: &VelocityCommand,
    dt: f64,
    drain_rate: f64,
) -> Result<RobotState> {
    debug_assert!(dt > 0.0);
    if state.battery <= 0.0 {
        return Err(Error::BatteryDepleted);
    }
    let Pose { x, y, heading } = state.pose;
    let mut next = state.clone();
    next.pose = Pose {
        x: x + v.linear * heading.cos() * dt,
        y: y + v.linear * heading.sin() * dt,
        heading: normalize_angle(heading + v.angular * dt),
    };
    next.battery = (state.battery - drain_rate * dt).max(0.0);
    next.status = STATUS_MOVING.to_string();
    Ok(next)
}

/// Clamps a command to the configured speed limits.
pub fn limit(v: VelocityCommand, cfg: &RobotConfig) -> VelocityCommand {
    VelocityCommand {
        linear: v.linear.clamp(-cfg.max_linear, cfg.max_linear),
        angular: v.angular.clamp(-cfg.max_angular, cfg.max_angular),
        duration: v.duration,
    }
}

/// Runs a plan to completion without pacing. On a depleted battery the state
/// reached so far is returned alongside the error.
pub fn execute_plan(
    state: &RobotState,
    plan: &MotionPlan,
    cfg: &RobotConfig,
) -> std::result::Result<RobotState, (RobotState, Error)> {
    let mut s = state.clone();
    for cmd in &plan.steps {
        let cmd = limit(*cmd, cfg);
        for dt in slices(cmd.duration, cfg.dt_s) {
            match step_kinematics(&s, &cmd, dt, cfg.drain_rate) {
                Ok(next) => s = next,
                Err(e) => {
                    s.status = STATUS_DEPLETED.to_string();
                    return Err((s, e));
                }
            }
        }
    }
    s.status = STATUS_IDLE.to_string();
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn state(x: f64, y: f64, h: f64) -> RobotState {
        RobotState::new("r", Pose::new(x, y, h), 100.0)
    }

    #[test]
    fn axis_aligned_step() {
        let v = VelocityCommand { linear: 0.2, angular: 0.0, duration: 1.0 };
        let s = step_kinematics(&state(0.0, 0.0, 0.0), &v, 1.0, 0.05).unwrap();
        assert_eq!((s.pose.x, s.pose.y, s.pose.heading), (0.2, 0.0, 0.0));
        assert_eq!(s.battery, 99.95);
    }

    #[test]
    fn quarter_turn_in_place() {
        let v = VelocityCommand { linear: 0.0, angular: PI / 2.0, duration: 1.0 };
        let s = step_kinematics(&state(1.0, 2.0, 0.0), &v, 1.0, 0.0).unwrap();
        assert_eq!((s.pose.x, s.pose.y), (1.0, 2.0));
        assert_eq!(s.pose.heading, PI / 2.0);
    }

    #[test]
    fn depleted_battery_refuses() {
        let mut s = state(0.0, 0.0, 0.0);
        s.battery = 0.0;
        let v = VelocityCommand { linear: 0.2, angular: 0.0, duration: 1.0 };
        assert!(matches!(step_kinematics(&s, &v, 0.05, 0.05), Err(Error::BatteryDepleted)));
    }

    #[test]
    fn slicing_is_exact() {
        let parts: Vec<f64> = slices(FRAC_PI_2 / 0.8, 0.05).collect();
        assert_eq!(parts.len(), 40);
        assert!((parts.iter().sum::<f64>() - FRAC_PI_2 / 0.8).abs() < 1e-12);
        assert_eq!(slices(2.0, 0.05).count(), 40);
        assert_eq!(slices(0.01, 0.05).collect::<Vec<_>>(), [0.01]);
    }

    #[test]
    fn primitive_signs() {
        let cfg = RobotConfig::default();
        let f = to_velocity(Primitive::Forward, &cfg).steps[0];
        assert!(f.linear > 0.0 && f.angular == 0.0);
        assert!(to_velocity(Primitive::Backward, &cfg).steps[0].linear < 0.0);
        assert!(to_velocity(Primitive::TurnLeft, &cfg).steps[0].angular > 0.0);
        assert!(to_velocity(Primitive::TurnRight, &cfg).steps[0].angular < 0.0);
        assert_eq!(to_velocity(Primitive::Patrol, &cfg).steps.len(), 8);
    }

    #[test]
    fn limits_clamp_speeds() {
        let cfg = RobotConfig::default();
        let v = limit(VelocityCommand { linear: 3.0, angular: -9.0, duration: 1.0 }, &cfg);
        assert_eq!((v.linear, v.angular), (0.5, -1.5));
    }

    #[test]
    fn patrol_closes_the_square() {
        let cfg = RobotConfig::default();
        let start = state(-1.0, 0.0, 0.0);
        let end = execute_plan(&start, &to_velocity(Primitive::Patrol, &cfg), &cfg).unwrap();
        assert!((end.pose.x - start.pose.x).abs() < 1e-6);
        assert!((end.pose.y - start.pose.y).abs() < 1e-6);
        assert!(normalize_angle(end.pose.heading - start.pose.heading).abs() < 1e-6);
        assert!(end.battery < start.battery);
        assert_eq!(end.status, STATUS_IDLE);
    }
}
