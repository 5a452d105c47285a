//! Four-bit style link estimation.
//!
//! Each neighbor gets a bidirectional ETX built from two sources: a windowed
//! EWMA over beacon reception probabilities (inbound quality) and the ratio of
//! unicast transmissions to acknowledgements. Every time either source folds a
//! new estimate, it is mixed into the combined ETX by a second EWMA.
//!
//! All arithmetic is fixed point so independent implementations agree bit for
//! bit: delivery probabilities are stored in parts per million, the combined
//! estimate in milli-transmissions, and every fold rounds half up. The public
//! [`Etx`] view rounds the milli value to deci-transmissions.
//!
//! The estimator also owns the neighbor table admission policy: a full table
//! only accepts a newcomer whose last packet arrived over a clean channel
//! (white bit) and whose route the network layer considers an improvement
//! (compare bit), and then only by evicting the worst unpinned entry.

use thiserror::Error;

use crate::types::{div_round_half_up, Etx, NodeId};

const PPM: u64 = 1_000_000;
const MILLI_PER_DECI: u64 = 100;
const PERMILLE: u64 = 1_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EstimatorError {
    #[error("no link estimate for neighbor {0}")]
    NoEstimate(NodeId),
    #[error("unicast result for neighbor {0} reported zero attempts")]
    ZeroAttempts(NodeId),
}

/// Estimator constants. EWMA weights are expressed in per-mille of the old
/// value: `lambda_permille = 900` means `0.9 * old + 0.1 * new`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EstimatorParams {
    /// Beacon window size W.
    pub window: u8,
    pub lambda_permille: u16,
    pub mu_permille: u16,
    /// Unicast fold period U, in data packets.
    pub unicast_fold: u16,
    pub etx_max: Etx,
    pub initial_etx: Etx,
    /// Neighbor table capacity T.
    pub table_size: usize,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        EstimatorParams {
            window: 5,
            lambda_permille: 900,
            mu_permille: 900,
            unicast_fold: 5,
            etx_max: Etx(500),
            initial_etx: Etx(30),
            table_size: 10,
        }
    }
}

impl EstimatorParams {
    fn etx_max_milli(&self) -> u64 {
        u64::from(self.etx_max.0) * MILLI_PER_DECI
    }
}

/// Which estimator last moved the combined ETX.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoldSource {
    Broadcast,
    Unicast,
}

/// Per-neighbor estimator record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkEntry {
    pub neighbor: NodeId,
    /// Reception bitmask of the current window, newest slot in bit 0.
    pub window_mask: u32,
    pub window_slots: u8,
    pub window_hits: u8,
    pub inbound_ppm: u32,
    pub unicast_tx: u32,
    pub unicast_ack: u32,
    unicast_results: u16,
    failures_since_ack: u32,
    pub combined_milli: u32,
    pub last_unicast_milli: Option<u32>,
    pub last_broadcast_milli: Option<u32>,
    pub folds: u32,
    pub white_bit: bool,
    pub pinned: bool,
    pub last_seqno: Option<u16>,
    pub losses_charged: u64,
    pub receptions: u64,
}

impl LinkEntry {
    fn new(neighbor: NodeId, params: &EstimatorParams) -> Self {
        LinkEntry {
            neighbor,
            window_mask: 0,
            window_slots: 0,
            window_hits: 0,
            inbound_ppm: PPM as u32,
            unicast_tx: 0,
            unicast_ack: 0,
            unicast_results: 0,
            failures_since_ack: 0,
            combined_milli: u32::from(params.initial_etx.0) * MILLI_PER_DECI as u32,
            last_unicast_milli: None,
            last_broadcast_milli: None,
            folds: 0,
            white_bit: false,
            pinned: false,
            last_seqno: None,
            losses_charged: 0,
            receptions: 0,
        }
    }

    /// Smoothed beacon delivery probability in `[0, 1]`.
    pub fn inbound_ewma(&self) -> f64 {
        f64::from(self.inbound_ppm) / PPM as f64
    }

    pub fn combined_etx(&self) -> Etx {
        milli_to_etx(u64::from(self.combined_milli))
    }

    fn push_slot(&mut self, hit: bool, params: &EstimatorParams) -> Option<FoldSource> {
        self.window_mask = (self.window_mask << 1) | u32::from(hit);
        self.window_slots += 1;
        if hit {
            self.window_hits += 1;
            self.receptions += 1;
        } else {
            self.losses_charged += 1;
        }
        if self.window_slots < params.window {
            return None;
        }
        let p_win = div_round_half_up(u64::from(self.window_hits) * PPM, u64::from(params.window));
        self.inbound_ppm = ewma(params.lambda_permille, u64::from(self.inbound_ppm), p_win) as u32;
        let estimate = broadcast_estimate_milli(self.inbound_ppm, params);
        self.last_broadcast_milli = Some(estimate as u32);
        self.fold(estimate, params);
        self.window_mask = 0;
        self.window_slots = 0;
        self.window_hits = 0;
        Some(FoldSource::Broadcast)
    }

    fn fold(&mut self, estimate_milli: u64, params: &EstimatorParams) {
        let mixed = ewma(
            params.mu_permille,
            u64::from(self.combined_milli),
            estimate_milli,
        );
        self.combined_milli = mixed.min(params.etx_max_milli()) as u32;
        self.folds += 1;
    }
}

/// `w * old + (1 - w) * new` with `w` in per-mille, rounded half up.
pub(crate) fn ewma(weight_permille: u16, old: u64, new: u64) -> u64 {
    let w = u64::from(weight_permille);
    div_round_half_up(w * old + (PERMILLE - w) * new, PERMILLE)
}

/// `1 / p` in milli-transmissions, clamped to the ETX ceiling.
pub(crate) fn broadcast_estimate_milli(inbound_ppm: u32, params: &EstimatorParams) -> u64 {
    if inbound_ppm == 0 {
        return params.etx_max_milli();
    }
    div_round_half_up(PPM * 1_000, u64::from(inbound_ppm)).min(params.etx_max_milli())
}

pub(crate) fn milli_to_etx(milli: u64) -> Etx {
    Etx(div_round_half_up(milli, MILLI_PER_DECI) as u16)
}

/// Outcome of [`LinkEstimator::apply_white_bit`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Admission {
    /// Already in the table; only the white bit was updated.
    Existing,
    /// Inserted into free space.
    Inserted,
    /// Inserted after evicting the given neighbor.
    Evicted(NodeId),
    /// Table full and the newcomer did not qualify (or nothing was evictable).
    Refused,
}

/// Result of recording one beacon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeaconReception {
    pub losses: u32,
    pub folds: u32,
    pub duplicate: bool,
}

/// Neighbor table with per-neighbor link estimates.
#[derive(Clone, Debug)]
pub struct LinkEstimator {
    params: EstimatorParams,
    entries: Vec<LinkEntry>,
}

impl LinkEstimator {
    pub fn new(params: EstimatorParams) -> Self {
        LinkEstimator {
            params,
            entries: Vec::with_capacity(params.table_size),
        }
    }

    pub fn params(&self) -> &EstimatorParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.params.table_size
    }

    pub fn entries(&self) -> &[LinkEntry] {
        &self.entries
    }

    pub fn entry(&self, neighbor: NodeId) -> Option<&LinkEntry> {
        self.position(neighbor).ok().map(|i| &self.entries[i])
    }

    pub fn contains(&self, neighbor: NodeId) -> bool {
        self.position(neighbor).is_ok()
    }

    fn position(&self, neighbor: NodeId) -> Result<usize, usize> {
        self.entries.binary_search_by_key(&neighbor, |e| e.neighbor)
    }

    fn entry_mut(&mut self, neighbor: NodeId) -> Result<&mut LinkEntry, EstimatorError> {
        match self.position(neighbor) {
            Ok(i) => Ok(&mut self.entries[i]),
            Err(_) => Err(EstimatorError::NoEstimate(neighbor)),
        }
    }

    /// Sets the white bit for `neighbor`, inserting it if absent.
    ///
    /// Insertion into free space is unconditional. Into a full table it needs
    /// both `channel_clean` and `compare` and evicts the unpinned entry with
    /// the worst combined ETX (highest id on ties).
    pub fn apply_white_bit(
        &mut self,
        neighbor: NodeId,
        channel_clean: bool,
        compare: bool,
    ) -> Admission {
        if let Ok(i) = self.position(neighbor) {
            self.entries[i].white_bit = channel_clean;
            return Admission::Existing;
        }
        let mut outcome = Admission::Inserted;
        if self.is_full() {
            if !(channel_clean && compare) {
                return Admission::Refused;
            }
            let Some(victim) = self.eviction_candidate() else {
                return Admission::Refused;
            };
            self.remove(victim);
            outcome = Admission::Evicted(victim);
        }
        let mut entry = LinkEntry::new(neighbor, &self.params);
        entry.white_bit = channel_clean;
        let at = self.position(neighbor).unwrap_err();
        self.entries.insert(at, entry);
        outcome
    }

    /// The entry a full table would give up for a white-bit newcomer.
    pub fn eviction_candidate(&self) -> Option<NodeId> {
        self.entries
            .iter()
            .filter(|e| !e.pinned)
            .max_by_key(|e| (e.combined_milli, e.neighbor))
            .map(|e| e.neighbor)
    }

    pub fn remove(&mut self, neighbor: NodeId) -> bool {
        match self.position(neighbor) {
            Ok(i) => {
                self.entries.remove(i);
                true
            }
            Err(_) => false,
        }
    }

    pub fn pin(&mut self, neighbor: NodeId) -> Result<(), EstimatorError> {
        self.entry_mut(neighbor)?.pinned = true;
        Ok(())
    }

    pub fn unpin(&mut self, neighbor: NodeId) {
        if let Ok(e) = self.entry_mut(neighbor) {
            e.pinned = false;
        }
    }

    /// Records a beacon with sequence number `seqno`.
    ///
    /// Sequence numbers skipped since the last beacon are charged as losses
    /// to the window; every completed window folds into the inbound EWMA and
    /// then into the combined ETX. A repeated sequence number is ignored.
    pub fn record_beacon_reception(
        &mut self,
        neighbor: NodeId,
        seqno: u16,
    ) -> Result<BeaconReception, EstimatorError> {
        let params = self.params;
        let entry = self.entry_mut(neighbor)?;
        let missed = match entry.last_seqno {
            None => 0,
            Some(last) => {
                let step = seqno.wrapping_sub(last);
                if step == 0 || step > u16::MAX / 2 {
                    return Ok(BeaconReception {
                        losses: 0,
                        folds: 0,
                        duplicate: true,
                    });
                }
                u32::from(step - 1)
            }
        };
        let mut folds = 0;
        for _ in 0..missed {
            folds += u32::from(entry.push_slot(false, &params).is_some());
        }
        folds += u32::from(entry.push_slot(true, &params).is_some());
        entry.last_seqno = Some(seqno);
        Ok(BeaconReception {
            losses: missed,
            folds,
            duplicate: false,
        })
    }

    /// Records the outcome of one data packet sent to `neighbor`.
    ///
    /// Every `unicast_fold` packets the ratio of attempts to acknowledgements
    /// is folded into the combined ETX. A window without any acknowledgement
    /// folds the number of attempts since the last successful delivery.
    pub fn record_unicast_result(
        &mut self,
        neighbor: NodeId,
        attempts: u32,
        acked: bool,
    ) -> Result<Option<FoldSource>, EstimatorError> {
        if attempts == 0 {
            return Err(EstimatorError::ZeroAttempts(neighbor));
        }
        let params = self.params;
        let entry = self.entry_mut(neighbor)?;
        entry.unicast_tx += attempts;
        if acked {
            entry.unicast_ack += 1;
            entry.failures_since_ack = 0;
        } else {
            entry.failures_since_ack += attempts;
        }
        entry.unicast_results += 1;
        if entry.unicast_results < params.unicast_fold {
            return Ok(None);
        }
        let estimate = if entry.unicast_ack > 0 {
            div_round_half_up(
                u64::from(entry.unicast_tx) * 1_000,
                u64::from(entry.unicast_ack),
            )
        } else {
            u64::from(entry.failures_since_ack) * 1_000
        }
        .min(params.etx_max_milli());
        entry.last_unicast_milli = Some(estimate as u32);
        entry.fold(estimate, &params);
        entry.unicast_tx = 0;
        entry.unicast_ack = 0;
        entry.unicast_results = 0;
        Ok(Some(FoldSource::Unicast))
    }

    /// Current combined link ETX, clamped to `[1.0, etx_max]`.
    pub fn combined_link_etx(&self, neighbor: NodeId) -> Result<Etx, EstimatorError> {
        let entry = self
            .entry(neighbor)
            .ok_or(EstimatorError::NoEstimate(neighbor))?;
        Ok(entry.combined_etx().clamp(Etx::ONE, self.params.etx_max))
    }
}
