//! Object-goal navigation in a small 2.5D grid world, used to compare a
//! sparse binary reward with three partial-reward schemes: fixed-scale,
//! depth-scaled and bounding-box-area-scaled.
//!
//! The pieces, bottom up:
//!
//! * [`scene`]: seeded scene generation, kinematics, goal predicate and BFS path lengths.
//! * [`sensor`]: column raycaster producing depth maps and per-object boxes.
//! * [`closeness`]: the Pr(target | parent) table fitted from a scene corpus.
//! * [`shaping`]: the four reward functions and the per-episode credit ledger.
//! * [`agent`]: tabular Q-learning and the episode loop.
//! * [`eval`]: success rate, SPL, aggregation and the comparison table.
//! * [`pipeline`]: the gen / closeness / train / eval / report stages.

pub mod agent;
pub mod closeness;
pub mod config;
pub mod eval;
pub mod pipeline;
pub mod scene;
pub mod sensor;
pub mod shaping;

pub use agent::{EpisodeResult, QTable, TrainConfig};
pub use closeness::ClosenessTable;
pub use config::ExperimentConfig;
pub use scene::{Action, AgentPose, Heading, Scene};
pub use sensor::{Camera, Detection, Observation};
pub use shaping::{RewardMode, RewardSpec, ShapingState, Terminal};
