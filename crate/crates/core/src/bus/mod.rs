//! Topic-based publish/subscribe over length-prefixed TCP frames.

mod broker;
mod client;
pub mod frame;

pub use broker::{broker_serve, Broker};
pub use client::{BusClient, Subscription};
pub use frame::{validate_topic, Frame, FrameKind};
