//! Evaluation quantities derived from a [`RunLog`].
//!
//! A reception counts toward the window its packet was sent in, so window
//! PRRs recombine exactly into the whole-run PRR.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::routing::Protocol;
use crate::runlog::{Record, RunLog};
use crate::types::{NodeId, SimTime};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cannot compare runs with {ctp} and {elqr} nodes")]
    NodeCountMismatch { ctp: u16, elqr: u16 },
    #[error("window width must be positive")]
    EmptyWindow,
}

/// Send times of every origin packet.
fn send_times(log: &RunLog) -> HashMap<(NodeId, u32), SimTime> {
    log.records
        .iter()
        .filter_map(|r| match *r {
            Record::Send { t, origin, seqno } => Some(((origin, seqno), t)),
            _ => None,
        })
        .collect()
}

/// `(distinct receptions, sends)` for packets sent in `[from, to)`.
fn prr_counts(log: &RunLog, from: SimTime, to: SimTime) -> (u64, u64) {
    let sent = send_times(log);
    let in_window = |t: SimTime| t >= from && t < to;
    let sends = sent.values().filter(|&&t| in_window(t)).count() as u64;
    let mut received = HashSet::new();
    for r in &log.records {
        if let Record::SinkRx { origin, seqno, .. } = *r {
            if sent.get(&(origin, seqno)).is_some_and(|&t| in_window(t)) {
                received.insert((origin, seqno));
            }
        }
    }
    (received.len() as u64, sends)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Distinct receptions over sends, for packets sent in `window`
/// (`[from, to)`) or over the whole run.
pub fn prr(log: &RunLog, window: Option<(SimTime, SimTime)>) -> f64 {
    let (from, to) = window.unwrap_or((SimTime::ZERO, SimTime(u64::MAX)));
    let (rx, sends) = prr_counts(log, from, to);
    ratio(rx, sends)
}

/// PRR over consecutive windows of `width`, keyed by window end.
pub fn windowed_prr(
    log: &RunLog,
    width: SimTime,
) -> Result<Vec<(SimTime, f64, u64)>, MetricsError> {
    if width == SimTime::ZERO {
        return Err(MetricsError::EmptyWindow);
    }
    let sent = send_times(log);
    let windows = log.duration.micros().div_ceil(width.micros()).max(1) as usize;
    let mut sends = vec![0u64; windows];
    let mut rx = vec![0u64; windows];
    let slot = |t: SimTime| ((t.micros() / width.micros()) as usize).min(windows - 1);
    for t in sent.values() {
        sends[slot(*t)] += 1;
    }
    let mut seen = HashSet::new();
    for r in &log.records {
        if let Record::SinkRx { origin, seqno, .. } = *r {
            if let Some(t) = sent.get(&(origin, seqno)) {
                if seen.insert((origin, seqno)) {
                    rx[slot(*t)] += 1;
                }
            }
        }
    }
    Ok((0..windows)
        .map(|w| {
            let end = SimTime((w as u64 + 1) * width.micros()).min(log.duration.max(width));
            (end, ratio(rx[w], sends[w]), sends[w])
        })
        .collect())
}

/// Forward records per node.
pub fn load_distribution(log: &RunLog) -> Vec<u64> {
    let mut load = vec![0u64; usize::from(log.nodes)];
    for r in &log.records {
        if let Record::Forward { node, .. } = r {
            load[node.index()] += 1;
        }
    }
    load
}

/// Origin sends per node.
pub fn sent_counts(log: &RunLog) -> Vec<u64> {
    let mut sent = vec![0u64; usize::from(log.nodes)];
    for r in &log.records {
        if let Record::Send { origin, .. } = r {
            sent[origin.index()] += 1;
        }
    }
    sent
}

/// Packets taken in per node: forwarded copies for relays, distinct
/// receptions for the sink.
pub fn received_counts(log: &RunLog) -> Vec<u64> {
    let mut received = load_distribution(log);
    received[NodeId::SINK.index()] = log
        .records
        .iter()
        .filter(|r| matches!(r, Record::SinkRx { .. }))
        .count() as u64;
    received
}

/// Population standard deviation over nodes with at least one forward.
pub fn relay_std_dev(load: &[u64]) -> f64 {
    let relays: Vec<f64> = load.iter().filter(|&&f| f > 0).map(|&f| f as f64).collect();
    if relays.is_empty() {
        return 0.0;
    }
    let mean = relays.iter().sum::<f64>() / relays.len() as f64;
    (relays.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / relays.len() as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lifetime {
    pub alive_curve: Vec<(SimTime, usize)>,
    pub first_death: Option<SimTime>,
}

pub fn lifetime(log: &RunLog) -> Lifetime {
    Lifetime {
        alive_curve: log
            .snapshots
            .iter()
            .map(|s| (s.t, s.alive_count()))
            .collect(),
        first_death: log.deaths().map(|(t, _)| t).min(),
    }
}

/// One row of the per-node table (Node ID, Sent, Forwarded, Received, Parent).
#[derive(Clone, Debug, PartialEq)]
pub struct NodeReport {
    pub node_id: NodeId,
    pub sent: u64,
    pub forwarded: u64,
    pub received: u64,
    /// Next hop in the final snapshot.
    pub parent: Option<NodeId>,
}

pub fn node_reports(log: &RunLog) -> Vec<NodeReport> {
    let sent = sent_counts(log);
    let forwarded = load_distribution(log);
    let received = received_counts(log);
    let last = log.snapshots.last();
    (0..usize::from(log.nodes))
        .map(|i| NodeReport {
            node_id: NodeId(i as u16),
            sent: sent[i],
            forwarded: forwarded[i],
            received: received[i],
            parent: last.and_then(|s| s.parent[i]),
        })
        .collect()
}

/// Headline numbers of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub protocol: Protocol,
    pub seed: u64,
    pub duration: SimTime,
    pub sends: u64,
    pub sink_received: u64,
    pub prr: f64,
    pub max_forwarded: u64,
    pub relay_std_dev: f64,
    pub first_death: Option<SimTime>,
}

impl RunSummary {
    pub fn from_log(log: &RunLog) -> Self {
        let load = load_distribution(log);
        let (rx, sends) = prr_counts(log, SimTime::ZERO, SimTime(u64::MAX));
        RunSummary {
            protocol: log.protocol,
            seed: log.seed,
            duration: log.duration,
            sends,
            sink_received: rx,
            prr: ratio(rx, sends),
            max_forwarded: load.iter().copied().max().unwrap_or(0),
            relay_std_dev: relay_std_dev(&load),
            first_death: lifetime(log).first_death,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} seed={} prr={:.4} first_death={} max_forwarded={}",
            self.protocol.name(),
            self.seed,
            self.prr,
            self.first_death
                .map_or_else(|| "none".to_string(), |t| format!("{:.1}", t.as_secs_f64())),
            self.max_forwarded
        )
    }
}

/// Percent change from `base` to `new`; `None` when `base` is zero and
/// `new` is not.
pub fn delta_pct(base: u64, new: u64) -> Option<f64> {
    match (base, new) {
        (0, 0) => Some(0.0),
        (0, _) => None,
        _ => Some((new as f64 - base as f64) / base as f64 * 100.0),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub node_id: NodeId,
    pub ctp_sent: u64,
    pub elqr_sent: u64,
    pub ctp_forwarded: u64,
    pub elqr_forwarded: u64,
}

impl CompareRow {
    pub fn sent_delta_pct(&self) -> Option<f64> {
        delta_pct(self.ctp_sent, self.elqr_sent)
    }

    pub fn forwarded_delta_pct(&self) -> Option<f64> {
        delta_pct(self.ctp_forwarded, self.elqr_forwarded)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub seed: u64,
    pub rows: Vec<CompareRow>,
    pub ctp: RunSummary,
    pub elqr: RunSummary,
}

pub fn compare_report(ctp: &RunLog, elqr: &RunLog) -> Result<ComparisonReport, MetricsError> {
    if ctp.nodes != elqr.nodes {
        return Err(MetricsError::NodeCountMismatch {
            ctp: ctp.nodes,
            elqr: elqr.nodes,
        });
    }
    let (cs, es) = (sent_counts(ctp), sent_counts(elqr));
    let (cf, ef) = (load_distribution(ctp), load_distribution(elqr));
    let rows = (0..usize::from(ctp.nodes))
        .map(|i| CompareRow {
            node_id: NodeId(i as u16),
            ctp_sent: cs[i],
            elqr_sent: es[i],
            ctp_forwarded: cf[i],
            elqr_forwarded: ef[i],
        })
        .collect();
    Ok(ComparisonReport {
        seed: ctp.seed,
        rows,
        ctp: RunSummary::from_log(ctp),
        elqr: RunSummary::from_log(elqr),
    })
}

impl ComparisonReport {
    /// ELQR first death over CTP first death. A run in which ELQR loses no
    /// node counts its death at the end of the run, which underestimates the
    /// ratio; without a CTP death the ratio is undefined.
    pub fn first_death_ratio(&self) -> Option<f64> {
        let ctp = self.ctp.first_death?.as_secs_f64();
        let elqr = self
            .elqr
            .first_death
            .unwrap_or(self.elqr.duration)
            .as_secs_f64();
        (ctp > 0.0).then(|| elqr / ctp)
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("node_id,ctp_sent,elqr_sent,sent_delta_pct,ctp_forwarded,elqr_forwarded,forwarded_delta_pct\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.node_id,
                r.ctp_sent,
                r.elqr_sent,
                fmt_opt(r.sent_delta_pct(), 2),
                r.ctp_forwarded,
                r.elqr_forwarded,
                fmt_opt(r.forwarded_delta_pct(), 2)
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    /// Both protocols' headline numbers, one row each.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        for s in [&self.ctp, &self.elqr] {
            write_summary_row(&mut out, &s.seed.to_string(), s);
        }
        out
    }
}

const SUMMARY_HEADER: &str =
    "seed,protocol,prr,sink_received,sends,max_forwarded,relay_std_dev,first_death_s\n";

fn write_summary_row(out: &mut String, seed: &str, s: &RunSummary) {
    writeln!(
        out,
        "{seed},{},{:.6},{},{},{},{:.3},{}",
        s.protocol.name(),
        s.prr,
        s.sink_received,
        s.sends,
        s.max_forwarded,
        s.relay_std_dev,
        fmt_opt(s.first_death.map(SimTime::as_secs_f64), 3)
    )
    .expect("writing to a String cannot fail");
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(String::new, |x| format!("{x:.digits$}"))
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Cross-seed table: one row per seed and a final `median` row.
pub fn cross_seed_summary_csv(reports: &[ComparisonReport]) -> String {
    let mut out = String::from(
        "seed,ctp_prr,elqr_prr,ctp_max_forwarded,elqr_max_forwarded,ctp_relay_std_dev,elqr_relay_std_dev,ctp_first_death_s,elqr_first_death_s,first_death_ratio\n",
    );
    let fd = |t: Option<SimTime>| t.map(SimTime::as_secs_f64);
    let row = |out: &mut String, label: &str, vals: [Option<f64>; 9]| {
        let digits = [6, 6, 0, 0, 3, 3, 3, 3, 4];
        let cells: Vec<String> = vals
            .iter()
            .zip(digits)
            .map(|(v, d)| fmt_opt(*v, d))
            .collect();
        writeln!(out, "{label},{}", cells.join(",")).expect("writing to a String cannot fail");
    };
    let mut columns: [Vec<f64>; 9] = Default::default();
    for r in reports {
        let vals = [
            Some(r.ctp.prr),
            Some(r.elqr.prr),
            Some(r.ctp.max_forwarded as f64),
            Some(r.elqr.max_forwarded as f64),
            Some(r.ctp.relay_std_dev),
            Some(r.elqr.relay_std_dev),
            fd(r.ctp.first_death),
            fd(r.elqr.first_death),
            r.first_death_ratio(),
        ];
        for (col, v) in columns.iter_mut().zip(vals) {
            col.extend(v);
        }
        row(&mut out, &r.seed.to_string(), vals);
    }
    let medians = columns.map(|c| median(&c));
    row(&mut out, "median", medians);
    out
}

pub fn load_csv(log: &RunLog) -> String {
    let mut out = String::from("node_id,sent,forwarded\n");
    for (i, (s, f)) in sent_counts(log)
        .into_iter()
        .zip(load_distribution(log))
        .enumerate()
    {
        writeln!(out, "{i},{s},{f}").expect("writing to a String cannot fail");
    }
    out
}

pub fn prr_csv(log: &RunLog, width: SimTime) -> Result<String, MetricsError> {
    let mut out = String::from("t,prr\n");
    for (t, p, _) in windowed_prr(log, width)? {
        writeln!(out, "{t},{p:.6}").expect("writing to a String cannot fail");
    }
    Ok(out)
}

pub fn alive_csv(log: &RunLog) -> String {
    let mut out = String::from("t,alive\n");
    for (t, n) in lifetime(log).alive_curve {
        writeln!(out, "{t},{n}").expect("writing to a String cannot fail");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyBudget;
    use crate::runlog::{DropReason, Snapshot};

    fn empty_log(nodes: u16) -> RunLog {
        RunLog::new(
            nodes,
            Protocol::Ctp,
            1,
            SimTime::from_secs(100),
            SimTime::from_millis(4),
            EnergyBudget::iris(),
        )
    }

    fn sends_and_receptions(sends: u32, received: u32) -> RunLog {
        let mut log = empty_log(9);
        for k in 0..sends {
            let origin = NodeId(1 + (k % 8) as u16);
            log.push(Record::Send {
                t: SimTime(u64::from(k)),
                origin,
                seqno: k,
            });
        }
        for k in 0..received {
            let origin = NodeId(1 + (k % 8) as u16);
            log.push(Record::SinkRx {
                t: SimTime(u64::from(sends + k)),
                origin,
                seqno: k,
            });
        }
        log
    }

    #[test]
    fn prr_examples() {
        assert_eq!(prr(&sends_and_receptions(8000, 8000), None), 1.0);
        assert!((prr(&sends_and_receptions(8000, 7200), None) - 0.9).abs() < 1e-12);
        assert_eq!(prr(&empty_log(3), None), 0.0);
        assert_eq!(
            prr(
                &sends_and_receptions(10, 10),
                Some((SimTime(50), SimTime(60)))
            ),
            0.0
        );
    }

    #[test]
    fn whole_run_prr_is_send_weighted_mean_of_windows() {
        let mut log = sends_and_receptions(1000, 0);
        log.duration = SimTime(1000);
        for k in (0..1000u32).filter(|k| k % 3 != 0) {
            let origin = NodeId(1 + (k % 8) as u16);
            log.push(Record::SinkRx {
                t: SimTime(2000),
                origin,
                seqno: k,
            });
        }
        let windows = windowed_prr(&log, SimTime(70)).unwrap();
        let sends: u64 = windows.iter().map(|w| w.2).sum();
        let weighted: f64 = windows.iter().map(|w| w.1 * w.2 as f64).sum::<f64>() / sends as f64;
        assert!((weighted - prr(&log, None)).abs() < 1e-12);
    }

    #[test]
    fn chain_load_counts() {
        // 3 -> 2 -> 1 -> sink, 100 packets each.
        let mut log = empty_log(4);
        let mut t = 0;
        for origin in 1..=3u16 {
            for seqno in 0..100 {
                log.push(Record::Send {
                    t: SimTime(t),
                    origin: NodeId(origin),
                    seqno,
                });
                for relay in (1..origin).rev() {
                    log.push(Record::Forward {
                        t: SimTime(t),
                        node: NodeId(relay),
                        origin: NodeId(origin),
                        seqno,
                    });
                }
                log.push(Record::SinkRx {
                    t: SimTime(t),
                    origin: NodeId(origin),
                    seqno,
                });
                t += 1;
            }
        }
        assert_eq!(load_distribution(&log), vec![0, 200, 100, 0]);
        let reports = node_reports(&log);
        assert_eq!(reports[0].received, 300);
        assert_eq!(reports[3].forwarded, 0);
        assert_eq!(relay_std_dev(&load_distribution(&log)), 50.0);
    }

    #[test]
    fn lifetime_curve_and_first_death() {
        let mut log = empty_log(3);
        for (k, alive) in [[true, true, true], [true, true, true], [true, false, true]]
            .into_iter()
            .enumerate()
        {
            log.snapshots.push(Snapshot {
                t: SimTime::from_secs(10 * k as u64),
                residual_j: vec![1.0; 3],
                alive: alive.to_vec(),
                parent: vec![None; 3],
            });
        }
        let l = lifetime(&log);
        assert_eq!(l.first_death, None);
        log.push(Record::Death {
            t: SimTime::from_secs(15),
            node: NodeId(1),
        });
        let l = lifetime(&log);
        assert_eq!(l.first_death, Some(SimTime::from_secs(15)));
        assert_eq!(
            l.alive_curve.iter().map(|p| p.1).collect::<Vec<_>>(),
            vec![3, 3, 2]
        );
    }

    #[test]
    fn comparison_deltas() {
        assert_eq!(delta_pct(5481, 3509).map(|d| d.round()), Some(-36.0));
        assert_eq!(delta_pct(0, 0), Some(0.0));
        assert_eq!(delta_pct(0, 4), None);
        let log = sends_and_receptions(100, 90);
        let r = compare_report(&log, &log).unwrap();
        assert!(
            r.rows
                .iter()
                .all(|row| row.sent_delta_pct() == Some(0.0)
                    && row.forwarded_delta_pct() == Some(0.0))
        );
        assert!(r.to_csv().starts_with("node_id,ctp_sent,elqr_sent,sent_delta_pct,ctp_forwarded,elqr_forwarded,forwarded_delta_pct\n"));
        assert_eq!(
            compare_report(&empty_log(3), &empty_log(4)).unwrap_err(),
            MetricsError::NodeCountMismatch { ctp: 3, elqr: 4 }
        );
    }

    #[test]
    fn duplicate_receptions_count_once() {
        let mut log = sends_and_receptions(2, 2);
        log.push(Record::Drop {
            t: SimTime(10),
            node: NodeId::SINK,
            origin: NodeId(1),
            seqno: 0,
            reason: DropReason::Duplicate,
        });
        log.push(Record::SinkRx {
            t: SimTime(11),
            origin: NodeId(1),
            seqno: 0,
        });
        assert_eq!(prr(&log, None), 1.0);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0]), Some(3.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }

    #[test]
    fn singleton_summary_median_equals_the_seed() {
        let log = sends_and_receptions(100, 90);
        let r = compare_report(&log, &log).unwrap();
        let csv = cross_seed_summary_csv(std::slice::from_ref(&r));
        let lines: Vec<Vec<&str>> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect())
            .collect();
        assert_eq!(lines[0][1..], lines[1][1..]);
        assert_eq!(lines[1][0], "median");
    }
}
