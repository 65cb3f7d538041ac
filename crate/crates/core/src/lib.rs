//! Desk-scale simulator for multi-UAV collaborative perception with
//! late-intermediate fusion.
//!
//! Agents hover over a ground plane, detect boxes through pinhole cameras,
//! exchange gated detection results over a byte-accounted channel and fuse
//! them into a bird's-eye-view feature grid decoded by a small trainable head.

pub mod boxes;
pub mod comms;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod head;
pub mod metrics;
pub mod scenario;
pub mod scene;
pub mod sim;

pub use error::{Error, Result};
pub use scenario::SimConfig;
pub use sim::{Strategy, StrategyKind};
