//! Traffic generation, the issuing side of an endpoint and the target memory.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axi::{AxiError, AxiTransaction, TxnKind};
use crate::kernel::Cycle;
use crate::link::{AxiBus, AxiClass, Coord, Flit, TxnId};
use crate::ni::{port_index, response_flits, Completion, NetworkInterface, NiError, PORTS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficDirection {
    #[default]
    Unidirectional,
    /// Mirror every transaction from target back to source.
    Bidirectional,
}

/// Narrow single-word reads competing with wide burst reads between two
/// tiles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSpec {
    pub narrow_txn_count: u32,
    pub wide_txn_count: u32,
    pub narrow_burst_len: u16,
    pub wide_burst_len: u16,
    pub interference_levels: Vec<u32>,
    pub direction: TrafficDirection,
    pub source: Coord,
    pub target: Coord,
    /// Narrow requests in flight per initiator port; the issuing cores
    /// block on loads.
    pub narrow_max_outstanding: Option<usize>,
    pub wide_max_outstanding: Option<usize>,
    pub id_width: u8,
    pub seed: u64,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        Self {
            narrow_txn_count: 100,
            wide_txn_count: 16,
            narrow_burst_len: 1,
            wide_burst_len: 16,
            interference_levels: vec![0, 2, 4, 8, 16, 32, 64],
            direction: TrafficDirection::Unidirectional,
            source: Coord::new(1, 1),
            target: Coord::new(2, 1),
            narrow_max_outstanding: Some(8),
            wide_max_outstanding: None,
            id_width: 4,
            seed: 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrafficError {
    #[error("source and target are both {0}")]
    SameEndpoint(Coord),
    #[error("interference levels must be sorted ascending")]
    UnsortedLevels,
    #[error("AXI ID width {0} outside 1..=16")]
    IdWidth(u8),
    #[error(transparent)]
    Axi(#[from] AxiError),
}

/// Issue-ordered transactions plus per-port outstanding limits.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schedule {
    /// `issue_cycle` holds the earliest cycle a transaction may be presented.
    pub txns: Vec<AxiTransaction>,
    /// Indexed by [`port_index`].
    pub max_outstanding: [Option<usize>; 4],
}

impl Schedule {
    pub fn is_empty(&self) -> bool {
        self.txns.is_empty()
    }

    pub fn for_initiator(&self, c: Coord) -> Vec<AxiTransaction> {
        self.txns.iter().filter(|t| t.initiator == c).copied().collect()
    }

    pub fn initiators(&self) -> Vec<Coord> {
        let mut v: Vec<Coord> = self.txns.iter().map(|t| t.initiator).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

impl TrafficSpec {
    pub fn validate(&self) -> Result<(), TrafficError> {
        if self.source == self.target {
            return Err(TrafficError::SameEndpoint(self.source));
        }
        if self.interference_levels.windows(2).any(|w| w[0] > w[1]) {
            return Err(TrafficError::UnsortedLevels);
        }
        if !(1..=16).contains(&self.id_width) {
            return Err(TrafficError::IdWidth(self.id_width));
        }
        Ok(())
    }
}

/// Build the issue schedule. Narrow transactions are reads of
/// `narrow_burst_len` beats, wide ones reads of `wide_burst_len` beats; AXI
/// IDs are drawn uniformly from the ID space.
pub fn generate(spec: &TrafficSpec) -> Result<Schedule, TrafficError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = vec![(spec.source, spec.target)];
    if spec.direction == TrafficDirection::Bidirectional {
        pairs.push((spec.target, spec.source));
    }
    let mut txns = Vec::new();
    let ids = 1u32 << spec.id_width;
    for (from, to) in pairs {
        let classes = [
            (AxiBus::Narrow, spec.narrow_txn_count, spec.narrow_burst_len),
            (AxiBus::Wide, spec.wide_txn_count, spec.wide_burst_len),
        ];
        for (bus, count, burst_len) in classes {
            for _ in 0..count {
                let t = AxiTransaction {
                    id: TxnId(txns.len() as u64),
                    initiator: from,
                    axi_id: rng.gen_range(0..ids) as u16,
                    kind: TxnKind::Read,
                    bus,
                    dst: to,
                    burst_len,
                    issue_cycle: 0,
                };
                t.validate()?;
                txns.push(t);
            }
        }
    }
    let mut max_outstanding = [None; 4];
    for (bus, kind) in PORTS {
        max_outstanding[port_index(bus, kind)] = match bus {
            AxiBus::Narrow => spec.narrow_max_outstanding,
            AxiBus::Wide => spec.wide_max_outstanding,
        };
    }
    Ok(Schedule { txns, max_outstanding })
}

/// Presents an endpoint's scheduled transactions on its AXI ports, in order,
/// subject to the outstanding limits.
#[derive(Clone, Debug, Default)]
pub struct TrafficSource {
    queues: [VecDeque<AxiTransaction>; 4],
    limits: [Option<usize>; 4],
    outstanding: [usize; 4],
    issued: Vec<AxiTransaction>,
}

impl TrafficSource {
    pub fn new(txns: impl IntoIterator<Item = AxiTransaction>, limits: [Option<usize>; 4]) -> Self {
        let mut queues: [VecDeque<AxiTransaction>; 4] = Default::default();
        for t in txns {
            queues[port_index(t.bus, t.kind)].push_back(t);
        }
        Self { queues, limits, outstanding: [0; 4], issued: Vec::new() }
    }

    /// Transactions presented so far, stamped with the cycle they were
    /// presented.
    pub fn issued(&self) -> &[AxiTransaction] {
        &self.issued
    }

    pub fn is_done(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty)
    }

    pub fn present(&mut self, cycle: Cycle, ni: &mut NetworkInterface) -> Result<(), NiError> {
        for p in 0..4 {
            let Some(front) = self.queues[p].front() else { continue };
            if front.issue_cycle > cycle || self.limits[p].is_some_and(|l| self.outstanding[p] >= l) {
                continue;
            }
            if !ni.can_present(front.bus, front.kind) {
                continue;
            }
            let mut t = self.queues[p].pop_front().expect("front checked");
            t.issue_cycle = cycle;
            ni.present(t)?;
            self.outstanding[p] += 1;
            self.issued.push(t);
        }
        Ok(())
    }

    pub fn on_complete(&mut self, c: &Completion) {
        let p = port_index(c.bus, c.kind);
        self.outstanding[p] = self.outstanding[p].saturating_sub(1);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct WriteProgress {
    aw: Option<Flit>,
    data_done: bool,
}

/// Target memory behind an endpoint: one FIFO service queue per AXI port,
/// fixed latency, unbounded request buffering.
#[derive(Clone, Debug)]
pub struct MemoryEndpoint {
    coord: Coord,
    latency: Cycle,
    queues: [VecDeque<(Cycle, Flit)>; 4],
    writes: BTreeMap<(Coord, AxiBus, u32), WriteProgress>,
    served: u64,
}

impl MemoryEndpoint {
    pub fn new(coord: Coord, latency: Cycle) -> Self {
        Self { coord, latency, queues: Default::default(), writes: BTreeMap::new(), served: 0 }
    }

    pub fn served(&self) -> u64 {
        self.served
    }

    pub fn is_idle(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty) && self.writes.is_empty()
    }

    /// A request beat arrived in `cycle`. Reads are queued right away,
    /// writes once the address and the last data beat are both in.
    pub fn on_request(&mut self, flit: Flit, cycle: Cycle) {
        let m = flit.header.msg_type;
        let ready = cycle + self.latency;
        match m.class() {
            AxiClass::Ar => self.queues[port_index(m.bus(), TxnKind::Read)].push_back((ready, flit)),
            AxiClass::Aw | AxiClass::W => {
                let key = (flit.header.src, m.bus(), flit.header.rob_idx);
                let w = self.writes.entry(key).or_default();
                if m.class() == AxiClass::Aw {
                    w.aw = Some(flit);
                } else if flit.header.last {
                    w.data_done = true;
                }
                if let (Some(aw), true) = (w.aw, w.data_done) {
                    self.writes.remove(&key);
                    self.queues[port_index(m.bus(), TxnKind::Write)].push_back((ready, aw));
                }
            }
            AxiClass::R | AxiClass::B => unreachable!("responses never reach the target"),
        }
    }

    /// Responses due in `cycle`, in service order per port.
    pub fn tick(&mut self, cycle: Cycle) -> Vec<Flit> {
        let mut out = Vec::new();
        for q in &mut self.queues {
            while q.front().is_some_and(|(at, _)| *at <= cycle) {
                let (_, req) = q.pop_front().expect("front checked");
                out.extend(response_flits(&req, self.coord));
                self.served += 1;
            }
        }
        out
    }
}
