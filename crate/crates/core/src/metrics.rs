//! Post-run measurement: latencies, effective bandwidth, channel load.

use std::collections::{BTreeMap, HashMap};

use crate::axi::{AxiTransaction, DeliveryTrace, TxnKind};
use crate::kernel::{Cycle, KernelReport};
use crate::link::{AxiBus, ChannelKind, Coord, TxnId, Variant};
use crate::ni::PortOccupancy;
use crate::topology::Network;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TxnRecord {
    /// `issue_cycle` is the cycle the transaction was presented.
    pub txn: AxiTransaction,
    pub completion: Option<Cycle>,
}

impl TxnRecord {
    pub fn latency(&self) -> Option<Cycle> {
        self.completion.map(|c| c - self.txn.issue_cycle)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LatencyStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
    pub min: Cycle,
    pub max: Cycle,
}

impl LatencyStats {
    pub fn from_samples(samples: &[Cycle]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_unstable();
        let n = s.len();
        let mean = s.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
        let median = if n % 2 == 1 { s[n / 2] as f64 } else { (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0 };
        // nearest rank
        let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
        Self { count: n, mean, median, p99: s[rank - 1] as f64, min: s[0], max: s[n - 1] }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelLoad {
    pub channel: ChannelKind,
    /// Sum over all links of cycles carrying a flit.
    pub busy_link_cycles: u64,
    /// User data bytes ejected at endpoints.
    pub payload_bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    pub variant: Variant,
    pub cycles: Cycle,
    pub drained: bool,
    pub records: Vec<TxnRecord>,
    /// Scheduled or presented transactions without a completion.
    pub timeouts: usize,
    pub narrow_read: LatencyStats,
    pub wide_read: LatencyStats,
    /// Mean over wide-read initiators, 0 without wide reads.
    pub wide_bw_percent: f64,
    pub wide_bw_by_initiator: BTreeMap<Coord, f64>,
    pub channels: Vec<ChannelLoad>,
    pub link_transfers: u64,
    /// Every link moved as many flits as its consumer took.
    pub links_conserved: bool,
    pub rob_stall_cycles: u64,
    pub table_stall_cycles: u64,
    pub direct_beats: u64,
    pub buffered_beats: u64,
    pub occupancy: Vec<(Coord, Vec<PortOccupancy>)>,
    pub deliveries: DeliveryTrace,
    pub trace_digest: u64,
}

impl SimReport {
    pub fn flagged(&self) -> bool {
        self.timeouts > 0 || !self.drained
    }

    /// Requests in issue order across all initiators.
    pub fn issued(&self) -> Vec<AxiTransaction> {
        self.records.iter().map(|r| r.txn).collect()
    }
}

/// Collect the report of a finished run. `scheduled` is the number of
/// transactions that were meant to be issued.
pub fn measure(net: &Network, run: &KernelReport, scheduled: usize) -> SimReport {
    let mut records = Vec::new();
    let mut deliveries = DeliveryTrace::default();
    let mut first_r_out: BTreeMap<Coord, Cycle> = BTreeMap::new();
    let mut occupancy = Vec::new();
    let (mut rob_stall, mut table_stall, mut direct, mut buffered) = (0, 0, 0, 0);
    let mut payload = [0u64; 3];

    for &id in &net.tiles {
        let tile = net.tile(id);
        let done: HashMap<TxnId, Cycle> = tile.completions().iter().map(|c| (c.txn, c.cycle)).collect();
        records.extend(tile.issued().iter().map(|t| TxnRecord { txn: *t, completion: done.get(&t.id).copied() }));
        deliveries.deliveries.extend(tile.deliveries().deliveries.iter().copied());
        let st = tile.ni().stats();
        for (&dst, &c) in &st.first_wide_r_out {
            let e = first_r_out.entry(dst).or_insert(c);
            *e = (*e).min(c);
        }
        rob_stall += st.rob_stall_cycles;
        table_stall += st.table_stall_cycles;
        for (p, b) in payload.iter_mut().zip(st.ejected_bytes) {
            *p += b;
        }
        for r in tile.ni().reorder_stats() {
            direct += r.direct_beats;
            buffered += r.buffered_beats;
        }
        occupancy.push((tile.coord(), tile.ni().occupancy()));
    }
    records.sort_by_key(|r| (r.txn.issue_cycle, r.txn.id));
    deliveries.deliveries.sort_by_key(|d| (d.cycle, d.key));

    let samples = |bus| -> Vec<Cycle> {
        records
            .iter()
            .filter(|r| r.txn.bus == bus && r.txn.kind == TxnKind::Read)
            .filter_map(TxnRecord::latency)
            .collect()
    };
    let narrow_read = LatencyStats::from_samples(&samples(AxiBus::Narrow));
    let wide_read = LatencyStats::from_samples(&samples(AxiBus::Wide));

    // window per initiator: first wide R beat injected to last one delivered
    let mut per_init: BTreeMap<Coord, (u64, Cycle)> = BTreeMap::new();
    for r in &records {
        if let (AxiBus::Wide, TxnKind::Read, Some(done)) = (r.txn.bus, r.txn.kind, r.completion) {
            let e = per_init.entry(r.txn.initiator).or_insert((0, 0));
            e.0 += u64::from(r.txn.bytes());
            e.1 = e.1.max(done);
        }
    }
    let mut wide_bw_by_initiator = BTreeMap::new();
    for (init, (bytes, last)) in per_init {
        let Some(&first) = first_r_out.get(&init) else { continue };
        let window = last.saturating_sub(first).max(1);
        let pct = bytes as f64 / (window as f64 * f64::from(AxiBus::Wide.beat_bytes())) * 100.0;
        wide_bw_by_initiator.insert(init, pct.min(100.0));
    }
    let wide_bw_percent = if wide_bw_by_initiator.is_empty() {
        0.0
    } else {
        wide_bw_by_initiator.values().sum::<f64>() / wide_bw_by_initiator.len() as f64
    };

    let channels = ChannelKind::ALL
        .iter()
        .filter(|ch| net.variant.channels().contains(ch))
        .map(|&ch| ChannelLoad {
            channel: ch,
            busy_link_cycles: run.links.iter().filter(|l| l.tag == ch.name()).map(|l| l.sent).sum(),
            payload_bytes: payload[ch.index()],
        })
        .collect();
    let completed = records.iter().filter(|r| r.completion.is_some()).count();

    SimReport {
        variant: net.variant,
        cycles: run.cycles,
        drained: run.drained,
        timeouts: scheduled.saturating_sub(completed),
        records,
        narrow_read,
        wide_read,
        wide_bw_percent,
        wide_bw_by_initiator,
        channels,
        link_transfers: run.transfers,
        links_conserved: run.links.iter().all(|l| l.sent == l.received),
        rob_stall_cycles: rob_stall,
        table_stall_cycles: table_stall,
        direct_beats: direct,
        buffered_beats: buffered,
        occupancy,
        deliveries,
        trace_digest: run.trace_digest,
    }
}
