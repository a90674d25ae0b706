//! Data layer and hand-engineered cognitive features for highway trajectory
//! prediction.
//!
//! The crate covers everything that runs before a neural network sees a
//! sample:
//!
//! - ingestion of trajectory logs and construction of [`SceneWindow`]s,
//! - the missing-frame and limited-data evaluation protocols,
//! - a seeded synthetic multi-lane highway generator,
//! - quantitative safety indices (TTC, TET, TIT, SPR, DRV),
//! - dynamic geometric graphs, six centrality measures and the
//!   behavior-aware criteria derived from them.

pub mod criteria;
pub mod error;
pub mod graph;
pub mod io;
pub mod labels;
pub mod protocol;
pub mod safety;
pub mod synth;
pub mod types;
pub mod window;

pub use error::{DataError, Result};
pub use types::{AgentState, Lateral, Longitudinal, ManeuverLabel, SceneWindow, TrajectoryTable, Vec2};
