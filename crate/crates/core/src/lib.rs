//! Energy and link-quality aware collection-tree routing, together with the
//! deterministic discrete-event simulator used to compare it against a
//! minimum-ETX baseline.
//!
//! The crate is organised bottom-up:
//!
//! - [`link_estimation`]: four-bit style per-neighbor ETX estimation.
//! - [`energy`]: linear software energy accounting per node.
//! - [`routing`]: neighbor tables, beacons and the two parent selectors.
//! - [`netsim`]: topology, channel, MAC abstraction and the event loop.
//! - [`metrics`]: PRR, forwarded-load, lifetime and comparison reports.
//! - [`config`]: the scenario file format shared by the simulator and CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod energy;
pub mod link_estimation;
pub mod metrics;
pub mod netsim;
pub mod routing;
pub mod runlog;
mod types;

pub use config::{ConfigError, Protocol, ScenarioConfig};
pub use energy::{EnergyAccount, EnergyBudget, EnergyError, PowerState};
pub use link_estimation::{Admission, EstimatorError, EstimatorParams, LinkEstimator};
pub use metrics::{ComparisonReport, NodeReport, RunSummary};
pub use netsim::{run, run_on, SimError, Topology};
pub use routing::{
    Beacon, DataPacket, DecisionReason, ParentDecision, RoutingEngine, RoutingTable,
};
pub use runlog::{DropReason, Record, RunLog};
pub use types::{Etx, NodeId, SimTime};
