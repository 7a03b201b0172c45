//! Simulated swarm robot: target filtering, interpretation, motion, feedback.

pub mod interpret;
pub mod kinematics;
mod node;

pub use interpret::{interpret_command, map_teleop_key};
pub use kinematics::{
    execute_plan, step_kinematics, to_velocity, MotionPlan, Primitive, VelocityCommand,
};
pub use node::{accept_envelope, Acceptance, FeedbackOutbox, RobotNode, OUTBOX_CAPACITY};
