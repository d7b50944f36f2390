//! DTN simulation, relay-quality features and classifiers for gating
//! Spray-and-Wait replication.

pub mod features;
pub mod metrics;
pub mod ml;
pub mod mobility;
pub mod node;
pub mod reports;
pub mod routing;
pub mod scenario;
pub mod sim;

pub use node::{NodeClass, NodeId};
pub use routing::RouterKind;
pub use scenario::{ConfigError, ScenarioSpec};
pub use sim::{run_simulation, SimOutput, Simulation};
