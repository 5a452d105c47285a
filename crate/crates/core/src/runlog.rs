//! Append-only record of a simulation run.
//!
//! Every metric is derived from a [`RunLog`]. Packet records follow copies:
//! an origin `Send` creates one copy, a lost acknowledgement after the
//! receiver already took the frame creates a second (`Dup`), and every copy
//! ends as exactly one of `SinkRx`, `Drop` or `InFlight`. Hence
//!
//! ```text
//! sends + dups = sink_rx + drops + in_flight
//! ```
//!
//! holds exactly for any run.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::energy::{EnergyBudget, PowerState};
use crate::routing::{DecisionReason, Protocol};
use crate::types::{NodeId, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropReason {
    /// A copy the receiver had already seen.
    Duplicate,
    /// Queue full on arrival.
    Overflow,
    /// Retransmission budget exhausted.
    Retries,
    /// Held by a node when it died.
    Dead,
}

impl DropReason {
    pub const ALL: [DropReason; 4] = [
        DropReason::Duplicate,
        DropReason::Overflow,
        DropReason::Retries,
        DropReason::Dead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DropReason::Duplicate => "duplicate",
            DropReason::Overflow => "overflow",
            DropReason::Retries => "retries",
            DropReason::Dead => "dead",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Record {
    Send {
        t: SimTime,
        origin: NodeId,
        seqno: u32,
    },
    /// A relay queued a copy of someone else's packet.
    Forward {
        t: SimTime,
        node: NodeId,
        origin: NodeId,
        seqno: u32,
    },
    SinkRx {
        t: SimTime,
        origin: NodeId,
        seqno: u32,
    },
    /// `node` still holds a copy its next hop already accepted.
    Dup {
        t: SimTime,
        node: NodeId,
        origin: NodeId,
        seqno: u32,
    },
    Drop {
        t: SimTime,
        node: NodeId,
        origin: NodeId,
        seqno: u32,
        reason: DropReason,
    },
    Death {
        t: SimTime,
        node: NodeId,
    },
    Decision {
        t: SimTime,
        node: NodeId,
        parent: Option<NodeId>,
        reason: DecisionReason,
        cost: u32,
        min_cost: u32,
        energy: f64,
        alpha: f64,
        beta: u32,
    },
    /// Still queued when the run ended.
    InFlight {
        t: SimTime,
        node: NodeId,
        origin: NodeId,
        seqno: u32,
    },
}

impl Record {
    pub fn time(&self) -> SimTime {
        match *self {
            Record::Send { t, .. }
            | Record::Forward { t, .. }
            | Record::SinkRx { t, .. }
            | Record::Dup { t, .. }
            | Record::Drop { t, .. }
            | Record::Death { t, .. }
            | Record::Decision { t, .. }
            | Record::InFlight { t, .. } => t,
        }
    }

    fn write_line(&self, out: &mut String) {
        let r = match self {
            Record::Send { t, origin, seqno } => writeln!(out, "{t} send origin={origin} seqno={seqno}"),
            Record::Forward { t, node, origin, seqno } => {
                writeln!(out, "{t} forward node={node} origin={origin} seqno={seqno}")
            }
            Record::SinkRx { t, origin, seqno } => writeln!(out, "{t} sink_rx origin={origin} seqno={seqno}"),
            Record::Dup { t, node, origin, seqno } => writeln!(out, "{t} dup node={node} origin={origin} seqno={seqno}"),
            Record::Drop { t, node, origin, seqno, reason } => writeln!(
                out,
                "{t} drop node={node} origin={origin} seqno={seqno} reason={}",
                reason.name()
            ),
            Record::Death { t, node } => writeln!(out, "{t} death node={node}"),
            Record::Decision { t, node, parent, reason, cost, min_cost, energy, alpha, beta } => writeln!(
                out,
                "{t} decision node={node} parent={} reason={} cost={cost} min_cost={min_cost} energy={energy:.6} alpha={alpha} beta={beta}",
                parent.map_or_else(|| "-".to_string(), |p| p.to_string()),
                reason.name()
            ),
            Record::InFlight { t, node, origin, seqno } => {
                writeln!(out, "{t} in_flight node={node} origin={origin} seqno={seqno}")
            }
        };
        r.expect("writing to a String cannot fail");
    }
}

/// Per-node state at a snapshot instant.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: SimTime,
    pub residual_j: Vec<f64>,
    pub alive: Vec<bool>,
    /// Next hop of each node; `None` for the sink, dead and parentless nodes.
    pub parent: Vec<Option<NodeId>>,
}

impl Snapshot {
    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    /// Nodes lying on a cycle of the parent graph restricted to alive nodes.
    pub fn cycle_members(&self) -> Vec<NodeId> {
        let n = self.parent.len();
        // 0 unvisited, 1 on the current walk, 2 finished.
        let mut state = vec![0u8; n];
        let mut on_cycle = vec![false; n];
        for start in 0..n {
            let mut walk = Vec::new();
            let mut cur = Some(start);
            while let Some(i) = cur {
                if state[i] == 2 {
                    break;
                }
                if state[i] == 1 {
                    let from = walk
                        .iter()
                        .position(|&w| w == i)
                        .expect("node on current walk");
                    for &w in &walk[from..] {
                        on_cycle[w] = true;
                    }
                    break;
                }
                state[i] = 1;
                walk.push(i);
                cur = self.parent[i]
                    .map(NodeId::index)
                    .filter(|&p| p < n && self.alive[i] && self.alive[p]);
            }
            for w in walk {
                state[w] = 2;
            }
        }
        (0..n)
            .filter(|&i| on_cycle[i])
            .map(|i| NodeId(i as u16))
            .collect()
    }
}

/// Final energy ledger of one node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeEnergy {
    pub node: NodeId,
    pub drawn_fj: u128,
    pub per_state_us: [u64; 5],
    pub tx_frames: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Accounting {
    pub sends: u64,
    pub dups: u64,
    pub sink_rx: u64,
    pub in_flight: u64,
    pub drops: [u64; 4],
}

impl Accounting {
    pub fn drops_total(&self) -> u64 {
        self.drops.iter().sum()
    }

    pub fn drops_for(&self, reason: DropReason) -> u64 {
        self.drops[reason as usize]
    }

    pub fn balanced(&self) -> bool {
        self.sends + self.dups == self.sink_rx + self.in_flight + self.drops_total()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub nodes: u16,
    pub protocol: Protocol,
    pub seed: u64,
    pub duration: SimTime,
    pub airtime: SimTime,
    pub budget: EnergyBudget,
    pub records: Vec<Record>,
    pub snapshots: Vec<Snapshot>,
    pub energy: Vec<NodeEnergy>,
}

impl RunLog {
    pub fn new(
        nodes: u16,
        protocol: Protocol,
        seed: u64,
        duration: SimTime,
        airtime: SimTime,
        budget: EnergyBudget,
    ) -> Self {
        RunLog {
            nodes,
            protocol,
            seed,
            duration,
            airtime,
            budget,
            records: Vec::new(),
            snapshots: Vec::new(),
            energy: Vec::new(),
        }
    }

    pub fn push(&mut self, record: Record) {
        debug_assert!(self
            .records
            .last()
            .is_none_or(|last| last.time() <= record.time()));
        self.records.push(record);
    }

    pub fn accounting(&self) -> Accounting {
        let mut a = Accounting::default();
        for r in &self.records {
            match r {
                Record::Send { .. } => a.sends += 1,
                Record::Dup { .. } => a.dups += 1,
                Record::SinkRx { .. } => a.sink_rx += 1,
                Record::InFlight { .. } => a.in_flight += 1,
                Record::Drop { reason, .. } => a.drops[*reason as usize] += 1,
                _ => {}
            }
        }
        a
    }

    pub fn timestamps_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[0].time() <= w[1].time())
            && self.snapshots.windows(2).all(|w| w[0].t <= w[1].t)
    }

    pub fn sink_pairs_unique(&self) -> bool {
        let mut seen = HashSet::new();
        self.records.iter().all(|r| match r {
            Record::SinkRx { origin, seqno, .. } => seen.insert((*origin, *seqno)),
            _ => true,
        })
    }

    /// Nodes whose energy ledger does not balance: drawn energy must equal
    /// Σ voltage · current(state) · time(state), and radio transmit time must
    /// equal frames · airtime.
    pub fn energy_violations(&self) -> Vec<NodeId> {
        self.energy
            .iter()
            .filter(|e| {
                let recomputed: u128 = PowerState::ALL
                    .iter()
                    .zip(e.per_state_us)
                    .map(|(&s, us)| self.budget.femtojoules(s, us))
                    .sum();
                let tx_us = e.per_state_us[PowerState::RadioTx as usize];
                recomputed != e.drawn_fj || tx_us != e.tx_frames * self.airtime.micros()
            })
            .map(|e| e.node)
            .collect()
    }

    pub fn deaths(&self) -> impl Iterator<Item = (SimTime, NodeId)> + '_ {
        self.records.iter().filter_map(|r| match *r {
            Record::Death { t, node } => Some((t, node)),
            _ => None,
        })
    }

    pub fn decisions(&self) -> impl Iterator<Item = &Record> + '_ {
        self.records
            .iter()
            .filter(|r| matches!(r, Record::Decision { .. }))
    }

    /// Decision records that break the α gate or the β window.
    pub fn decision_violations(&self) -> Vec<&Record> {
        self.decisions()
            .filter(|r| match **r {
                Record::Decision {
                    reason: DecisionReason::BestEtxEnergyOk,
                    energy,
                    alpha,
                    parent,
                    ..
                } => parent.is_none() || energy <= alpha,
                Record::Decision {
                    reason: DecisionReason::BestEnergyEtxOk,
                    cost,
                    min_cost,
                    beta,
                    parent,
                    ..
                } => parent.is_none() || u64::from(cost) >= u64::from(min_cost) + u64::from(beta),
                _ => false,
            })
            .collect()
    }

    /// `(snapshot time, nodes on a cycle)` for every snapshot with a cycle.
    pub fn loops(&self) -> Vec<(SimTime, Vec<NodeId>)> {
        self.snapshots
            .iter()
            .map(|s| (s.t, s.cycle_members()))
            .filter(|(_, c)| !c.is_empty())
            .collect()
    }

    /// The event file: one line per record.
    pub fn events_text(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 48);
        writeln!(
            out,
            "# protocol={} seed={} nodes={} duration={}",
            self.protocol.name(),
            self.seed,
            self.nodes,
            self.duration
        )
        .expect("writing to a String cannot fail");
        for r in &self.records {
            r.write_line(&mut out);
        }
        out
    }

    /// Long-format snapshot table.
    pub fn snapshots_csv(&self) -> String {
        let mut out = String::from("t,node_id,residual_j,alive,parent\n");
        for s in &self.snapshots {
            for i in 0..s.alive.len() {
                let parent = s.parent[i].map_or_else(String::new, |p| p.to_string());
                writeln!(
                    out,
                    "{},{},{:.6},{},{}",
                    s.t,
                    i,
                    s.residual_j[i],
                    u8::from(s.alive[i]),
                    parent
                )
                .expect("writing to a String cannot fail");
            }
        }
        out
    }
}
