//! Network simulator: torus topology, traffic, the cycle kernel and
//! scenario files.

pub mod kernel;
pub mod scenario;
pub mod stats;
pub mod topology;
pub mod traffic;

pub use kernel::{run, HostConfig, SimConfig, SimError, Simulation};
pub use scenario::{Scenario, ScenarioError};
pub use stats::SimStats;
pub use topology::{build_topology, Network, TableAssignment, TopologySpec, TorusCoord};
pub use traffic::{SourceSelection, TraceRecord, TrafficKind, TrafficSpec};
