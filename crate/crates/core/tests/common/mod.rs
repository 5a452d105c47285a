//! Reference implementations shared by the integration targets.
#![allow(dead_code)]

use std::path::PathBuf;

use elqr_core::link_estimation::EstimatorParams;
use elqr_core::routing::NeighborEntry;
use elqr_core::{DecisionReason, NodeId, ScenarioConfig};
use rand::Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

pub fn load_config(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// One input to a single-neighbor link estimate.
#[derive(Clone, Copy, Debug)]
pub enum LinkEvent {
    /// Beacon whose sequence number is `step` past the previous one.
    Beacon {
        step: u16,
    },
    Unicast {
        attempts: u32,
        acked: bool,
    },
}

pub fn random_link_events(rng: &mut impl Rng, max_len: usize) -> Vec<LinkEvent> {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.55) {
                let step = match rng.random_range(0..10) {
                    0 => 0,
                    1 => rng.random_range(4..40),
                    _ => rng.random_range(1..4),
                };
                LinkEvent::Beacon { step }
            } else {
                let attempts = rng.random_range(1..=6);
                LinkEvent::Unicast {
                    attempts,
                    acked: rng.random_bool(0.7),
                }
            }
        })
        .collect()
}

fn round_div(num: u128, den: u128) -> u128 {
    // Half-up rounding of a non-negative quotient.
    let q = num / den;
    if (num % den) * 2 >= den {
        q + 1
    } else {
        q
    }
}

/// Combined ETX in milli-transmissions, recomputed from the full history.
///
/// The beacon history is flattened into reception slots and cut into
/// windows; the unicast history is cut into batches. Each completed window
/// or batch yields one estimate, and the estimates are mixed into the
/// initial value in the order they completed.
pub fn replay_combined_milli(events: &[LinkEvent], p: &EstimatorParams) -> u64 {
    let cap = u128::from(p.etx_max.0) * 100;
    let window = usize::from(p.window);
    let batch = usize::from(p.unicast_fold);

    let mut estimates: Vec<u128> = Vec::new();
    let mut slots: Vec<bool> = Vec::new();
    let mut inbound: u128 = 1_000_000;
    let mut unicast: Vec<(u32, bool)> = Vec::new();
    let mut seen_beacon = false;

    for (k, ev) in events.iter().enumerate() {
        match *ev {
            LinkEvent::Beacon { step } => {
                if seen_beacon && (step == 0 || step > u16::MAX / 2) {
                    continue;
                }
                let misses = if seen_beacon {
                    usize::from(step) - 1
                } else {
                    0
                };
                seen_beacon = true;
                for i in 0..=misses {
                    slots.push(i == misses);
                    if slots.len().is_multiple_of(window) {
                        let hits =
                            slots[slots.len() - window..].iter().filter(|h| **h).count() as u128;
                        let p_win = round_div(hits * 1_000_000, window as u128);
                        let lambda = u128::from(p.lambda_permille);
                        inbound = round_div(lambda * inbound + (1000 - lambda) * p_win, 1000);
                        let est = if inbound == 0 {
                            cap
                        } else {
                            round_div(1_000_000_000, inbound).min(cap)
                        };
                        estimates.push(est);
                    }
                }
            }
            LinkEvent::Unicast { attempts, acked } => {
                unicast.push((attempts, acked));
                if unicast.len().is_multiple_of(batch) {
                    let chunk = &unicast[unicast.len() - batch..];
                    let tx: u128 = chunk.iter().map(|&(a, _)| u128::from(a)).sum();
                    let acks = chunk.iter().filter(|&&(_, ok)| ok).count() as u128;
                    let est = if acks > 0 {
                        round_div(tx * 1000, acks)
                    } else {
                        // Attempts since the most recent acknowledged packet,
                        // looking back over the whole history.
                        let failed: u128 = events[..=k]
                            .iter()
                            .rev()
                            .filter_map(|e| match *e {
                                LinkEvent::Unicast { attempts, acked } => Some((attempts, acked)),
                                LinkEvent::Beacon { .. } => None,
                            })
                            .take_while(|&(_, ok)| !ok)
                            .map(|(a, _)| u128::from(a))
                            .sum();
                        failed * 1000
                    };
                    estimates.push(est.min(cap));
                }
            }
        }
    }

    let mu = u128::from(p.mu_permille);
    let start = u128::from(p.initial_etx.0) * 100;
    estimates.into_iter().fold(start, |acc, est| {
        round_div(mu * acc + (1000 - mu) * est, 1000).min(cap)
    }) as u64
}

/// Minimal table row for the selection interpreter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Row {
    pub id: u16,
    pub etx: u32,
    pub energy: f64,
    pub valid: bool,
}

/// Naive restatement of the selection procedure: search, then the
/// branch ladder, then invalidate both candidates and search again.
/// Returns the chosen id (if any), its reason, and the final row state.
pub fn interpret_selection(
    rows: &[Row],
    alpha: f64,
    beta: u32,
) -> (Option<u16>, DecisionReason, Vec<Row>) {
    let mut table = rows.to_vec();
    loop {
        let mut max_energy = 0.0;
        let mut min_etx = u32::from(u16::MAX);
        let mut best_energy: Option<usize> = None;
        let mut best_etx: Option<usize> = None;
        for (i, r) in table.iter().enumerate() {
            if max_energy < r.energy && r.valid {
                max_energy = r.energy;
                best_energy = Some(i);
            }
            if min_etx > r.etx && r.valid {
                min_etx = r.etx;
                best_etx = Some(i);
            }
        }
        if best_energy.is_none() && best_etx.is_none() {
            return (None, DecisionReason::Exhausted, table);
        }
        if best_etx == best_energy {
            return (
                Some(table[best_etx.unwrap()].id),
                DecisionReason::JointBest,
                table,
            );
        }
        if let Some(i) = best_etx {
            if table[i].energy > alpha {
                return (Some(table[i].id), DecisionReason::BestEtxEnergyOk, table);
            }
        }
        if let Some(i) = best_energy {
            if table[i].etx < min_etx + beta {
                return (Some(table[i].id), DecisionReason::BestEnergyEtxOk, table);
            }
        }
        for i in [best_energy, best_etx].into_iter().flatten() {
            table[i].valid = false;
        }
    }
}

/// Routing-table entry carrying `cost` as link 1.0 plus the remainder as path.
pub fn entry_for(row: &Row) -> NeighborEntry {
    let link = 10u16.min(row.etx as u16);
    let mut e = NeighborEntry::new(
        NodeId(row.id),
        elqr_core::Etx(row.etx as u16 - link),
        elqr_core::Etx(link),
        row.energy,
    );
    e.valid = row.valid;
    e
}

/// Every table of up to `max_len` rows drawn from the given costs and energies.
pub fn table_family(max_len: usize, costs: &[u32], energies: &[f64]) -> Vec<Vec<Row>> {
    let cells: Vec<(u32, f64)> = costs
        .iter()
        .flat_map(|&c| energies.iter().map(move |&e| (c, e)))
        .collect();
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for len in 1..=max_len {
        let mut next = Vec::new();
        for prefix in &frontier {
            for &(etx, energy) in &cells {
                let mut t: Vec<Row> = prefix.clone();
                t.push(Row {
                    id: len as u16,
                    etx,
                    energy,
                    valid: true,
                });
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}
