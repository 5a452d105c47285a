use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Node identifier. Node 0 is the sink in every generated topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u16);

impl NodeId {
    pub const SINK: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Expected transmission count in deci-transmissions: `Etx(10)` is one
/// transmission. `Etx::ZERO` is reserved for the root's path cost.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Etx(pub u16);

impl Etx {
    pub const ZERO: Etx = Etx(0);
    /// One transmission, the minimum for any real link.
    pub const ONE: Etx = Etx(10);

    pub fn deci(self) -> u16 {
        self.0
    }

    pub fn transmissions(self) -> f64 {
        f64::from(self.0) / 10.0
    }

    /// Sum of two costs saturating at `ceiling`.
    pub fn saturating_add(self, other: Etx, ceiling: Etx) -> Etx {
        let sum = u32::from(self.0) + u32::from(other.0);
        Etx(sum.min(u32::from(ceiling.0)) as u16)
    }
}

impl fmt::Display for Etx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.0 / 10, self.0 % 10)
    }
}

/// Simulated time with microsecond resolution.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(secs: u64) -> SimTime {
        SimTime(secs * 1_000_000)
    }

    pub fn from_millis(ms: u64) -> SimTime {
        SimTime(ms * 1_000)
    }

    /// Rounds to the nearest microsecond.
    pub fn from_secs_f64(secs: f64) -> SimTime {
        SimTime((secs * 1e6).round() as u64)
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

/// `num / den` rounded half up; both operands non-negative.
pub(crate) fn div_round_half_up(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}
