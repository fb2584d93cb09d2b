//! Constrained soft actor-critic training stack.

pub mod agent;
pub mod checkpoint;
pub mod mlp;
pub mod optim;
pub mod policy;
pub mod replay;
pub mod trainer;

pub use agent::{Agent, Algorithm, TrainerConfig};
pub use mlp::Mlp;
pub use trainer::{evaluate, train, Evaluation, MetricsRow, TrainOutcome};
