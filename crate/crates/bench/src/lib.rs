//! Fixtures shared by the benchmarks.

use elqr_core::routing::NeighborEntry;
use elqr_core::{Etx, NodeId, RoutingTable, ScenarioConfig};

/// A full ten-entry table with spread-out costs and energies.
pub fn sample_table() -> RoutingTable {
    RoutingTable::from_entries(
        (1..=10u16)
            .map(|i| {
                let path = Etx(20 * (i % 4));
                let link = Etx(10 + 3 * i);
                NeighborEntry::new(NodeId(i), path, link, 1_000.0 * f64::from((i * 7) % 11))
            })
            .collect(),
    )
}

/// Nine-node scenario shortened to `duration_s`.
pub fn nine_node(duration_s: f64) -> ScenarioConfig {
    ScenarioConfig::parse(&format!(
        "[scenario]\nnodes = 9\narea_w = 50.0\narea_h = 50.0\nduration_s = {duration_s}\n\n[energy]\ncapacity_j = 100.0\n\n[routing]\nalpha_j = 60.0\n"
    ))
    .expect("fixture config is valid")
}
