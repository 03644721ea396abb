//! Network interface between an endpoint's AXI ports and the link networks.
//!
//! Requests are only injected once response storage is reserved, so the
//! initiator side never has to backpressure a response. The reserved range
//! base travels in every request header as `rob_idx` and comes back in the
//! response.

mod reorder;
mod rob;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use reorder::{OutBeat, ReorderError, ReorderStats, ReorderUnit, ResponseAction};
pub use rob::{RobAllocator, RobError};

use crate::axi::{AxiTransaction, TxnKind};
use crate::kernel::{Cycle, LinkId, Wires};
use crate::link::{AxiBus, AxiClass, ChannelKind, Coord, Flit, FlitHeader, MsgType, TxnId, Variant};
use crate::router::OutputArbiter;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NiConfig {
    pub narrow_rob_bytes: u32,
    pub wide_rob_bytes: u32,
    /// Write responses are one slot each.
    pub b_table_entries: u32,
    pub reorder_table_entries: usize,
    /// Endpoint-internal cycles between request arrival and response
    /// injection (memory access and pipeline cuts).
    pub internal_latency_cycles: u64,
    pub bypass: bool,
}

impl Default for NiConfig {
    fn default() -> Self {
        Self {
            narrow_rob_bytes: 2048,
            wide_rob_bytes: 8192,
            b_table_entries: 64,
            reorder_table_entries: 64,
            internal_latency_cycles: 9,
            bypass: true,
        }
    }
}

impl NiConfig {
    pub fn validate(&self) -> Result<(), NiError> {
        for (bus, kind) in PORTS {
            self.allocator(bus, kind)?;
        }
        if self.reorder_table_entries == 0 {
            return Err(NiError::Config("reorder table needs at least one entry".into()));
        }
        Ok(())
    }

    fn allocator(&self, bus: AxiBus, kind: TxnKind) -> Result<RobAllocator, NiError> {
        let r = match (bus, kind) {
            (AxiBus::Narrow, TxnKind::Read) => RobAllocator::new(self.narrow_rob_bytes, bus.beat_bytes()),
            (AxiBus::Wide, TxnKind::Read) => RobAllocator::new(self.wide_rob_bytes, bus.beat_bytes()),
            (_, TxnKind::Write) => RobAllocator::new(self.b_table_entries, 1),
        };
        r.map_err(NiError::Rob)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NiError {
    #[error("invalid NI configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Rob(#[from] RobError),
    #[error("{port}: {source}")]
    Reorder {
        port: &'static str,
        #[source]
        source: ReorderError,
    },
    #[error("{txn} needs {need} response slots but the {port} storage only has {capacity}")]
    TooLarge { txn: TxnId, port: &'static str, need: u32, capacity: u32 },
    #[error("{txn} was presented at {at} but addressed from {from}")]
    WrongInitiator { txn: TxnId, at: Coord, from: Coord },
    #[error("response beat {beat} for rob_idx {rob_idx} falls outside its reserved slots")]
    NoSlot { rob_idx: u32, beat: u16 },
    #[error("{port}: {held} response beats held in {reserved} reserved slots")]
    Overcommitted { port: &'static str, held: u64, reserved: u32 },
    #[error("flit for {dst} arrived at {at}")]
    Misrouted { dst: Coord, at: Coord },
    #[error("{0} arrived on a channel it is not mapped to")]
    WrongChannel(&'static str),
}

/// The four initiator ports, in index order.
pub const PORTS: [(AxiBus, TxnKind); 4] = [
    (AxiBus::Narrow, TxnKind::Read),
    (AxiBus::Narrow, TxnKind::Write),
    (AxiBus::Wide, TxnKind::Read),
    (AxiBus::Wide, TxnKind::Write),
];

pub fn port_index(bus: AxiBus, kind: TxnKind) -> usize {
    bus.index() * 2 + kind as usize
}

pub fn port_name(bus: AxiBus, kind: TxnKind) -> &'static str {
    match (bus, kind) {
        (AxiBus::Narrow, TxnKind::Read) => "narrow read",
        (AxiBus::Narrow, TxnKind::Write) => "narrow write",
        (AxiBus::Wide, TxnKind::Read) => "wide read",
        (AxiBus::Wide, TxnKind::Write) => "wide write",
    }
}

/// Injection queues. Narrow AW and W share one queue so W follows its AW;
/// the wide ones are split because they ride different channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stream {
    NarrowAr,
    NarrowAwW,
    WideAr,
    WideAw,
    WideW,
    NarrowR,
    NarrowB,
    WideR,
    WideB,
}

impl Stream {
    pub const ALL: [Stream; 9] = [
        Stream::NarrowAr,
        Stream::NarrowAwW,
        Stream::WideAr,
        Stream::WideAw,
        Stream::WideW,
        Stream::NarrowR,
        Stream::NarrowB,
        Stream::WideR,
        Stream::WideB,
    ];

    pub fn for_msg(m: MsgType) -> Stream {
        match m {
            MsgType::NarrowAr => Stream::NarrowAr,
            MsgType::NarrowAw | MsgType::NarrowW => Stream::NarrowAwW,
            MsgType::NarrowR => Stream::NarrowR,
            MsgType::NarrowB => Stream::NarrowB,
            MsgType::WideAr => Stream::WideAr,
            MsgType::WideAw => Stream::WideAw,
            MsgType::WideW => Stream::WideW,
            MsgType::WideR => Stream::WideR,
            MsgType::WideB => Stream::WideB,
        }
    }

    fn representative(self) -> MsgType {
        match self {
            Stream::NarrowAr => MsgType::NarrowAr,
            Stream::NarrowAwW => MsgType::NarrowW,
            Stream::WideAr => MsgType::WideAr,
            Stream::WideAw => MsgType::WideAw,
            Stream::WideW => MsgType::WideW,
            Stream::NarrowR => MsgType::NarrowR,
            Stream::NarrowB => MsgType::NarrowB,
            Stream::WideR => MsgType::WideR,
            Stream::WideB => MsgType::WideB,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// A transaction whose last response beat reached the AXI side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Completion {
    pub txn: TxnId,
    pub axi_id: u16,
    pub bus: AxiBus,
    pub kind: TxnKind,
    pub cycle: Cycle,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NiStats {
    /// Cycles a presented transaction waited for response storage.
    pub rob_stall_cycles: u64,
    /// Cycles a presented transaction waited for a reorder table entry.
    pub table_stall_cycles: u64,
    pub injected_flits: [u64; 3],
    pub ejected_flits: [u64; 3],
    pub ejected_bytes: [u64; 3],
    /// First wide read beat this interface put on the network, per requester.
    pub first_wide_r_out: BTreeMap<Coord, Cycle>,
}

/// Per-port occupancy snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PortOccupancy {
    pub port: &'static str,
    pub capacity_bytes: u32,
    pub free_bytes: u32,
    pub peak_used_bytes: u32,
    pub outstanding: usize,
    pub fragments: usize,
}

#[derive(Clone, Debug)]
struct InitiatorPort {
    bus: AxiBus,
    kind: TxnKind,
    rob: RobAllocator,
    reorder: ReorderUnit,
    /// Transaction held on the AXI request channel.
    pending: Option<AxiTransaction>,
}

impl InitiatorPort {
    fn name(&self) -> &'static str {
        port_name(self.bus, self.kind)
    }

    fn slots_needed(&self, t: &AxiTransaction) -> u32 {
        match self.kind {
            TxnKind::Read => u32::from(t.burst_len),
            TxnKind::Write => 1,
        }
    }
}

pub struct NetworkInterface {
    coord: Coord,
    variant: Variant,
    cfg: NiConfig,
    ports: Vec<InitiatorPort>,
    streams: Vec<VecDeque<Flit>>,
    stream_channel: [ChannelKind; 9],
    inputs: [Option<LinkId>; 3],
    outputs: [Option<LinkId>; 3],
    arbiters: [OutputArbiter; 3],
    plan: [Option<usize>; 3],
    stats: NiStats,
}

impl NetworkInterface {
    pub fn new(coord: Coord, variant: Variant, cfg: NiConfig) -> Result<Self, NiError> {
        cfg.validate()?;
        let mut ports = Vec::with_capacity(4);
        for (bus, kind) in PORTS {
            ports.push(InitiatorPort {
                bus,
                kind,
                rob: cfg.allocator(bus, kind)?,
                reorder: ReorderUnit::new(cfg.bypass, cfg.reorder_table_entries),
                pending: None,
            });
        }
        let stream_channel = Stream::ALL.map(|s| {
            let m = s.representative();
            variant.channel_for(m.bus(), m.class())
        });
        Ok(Self {
            coord,
            variant,
            cfg,
            ports,
            streams: vec![VecDeque::new(); Stream::ALL.len()],
            stream_channel,
            inputs: [None; 3],
            outputs: [None; 3],
            arbiters: Default::default(),
            plan: [None; 3],
            stats: NiStats::default(),
        })
    }

    pub fn coord(&self) -> Coord {
        self.coord
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn config(&self) -> &NiConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &NiStats {
        &self.stats
    }

    /// Attach the links to and from the router on `channel`.
    pub fn attach(&mut self, channel: ChannelKind, input: LinkId, output: LinkId) {
        self.inputs[channel.index()] = Some(input);
        self.outputs[channel.index()] = Some(output);
    }

    pub fn links(&self, channel: ChannelKind) -> (Option<LinkId>, Option<LinkId>) {
        (self.inputs[channel.index()], self.outputs[channel.index()])
    }

    /// Whether the AXI request channel of this port can take a transaction.
    pub fn can_present(&self, bus: AxiBus, kind: TxnKind) -> bool {
        self.ports[port_index(bus, kind)].pending.is_none()
    }

    /// Put a transaction on the AXI request channel. Returns false if the
    /// channel is still occupied.
    pub fn present(&mut self, txn: AxiTransaction) -> Result<bool, NiError> {
        if txn.initiator != self.coord {
            return Err(NiError::WrongInitiator { txn: txn.id, at: self.coord, from: txn.initiator });
        }
        let port = &mut self.ports[port_index(txn.bus, txn.kind)];
        let need = port.slots_needed(&txn);
        if need > port.rob.capacity_slots() {
            return Err(NiError::TooLarge {
                txn: txn.id,
                port: port.name(),
                need,
                capacity: port.rob.capacity_slots(),
            });
        }
        if port.pending.is_some() {
            return Ok(false);
        }
        port.pending = Some(txn);
        Ok(true)
    }

    /// Accept presented transactions that fit: reserve response storage,
    /// open a reorder table entry and queue the request flits.
    pub fn inject(&mut self) -> Result<Vec<TxnId>, NiError> {
        let mut accepted = Vec::new();
        for p in 0..self.ports.len() {
            let port = &mut self.ports[p];
            let Some(txn) = port.pending else { continue };
            if port.reorder.is_full() {
                self.stats.table_stall_cycles += 1;
                continue;
            }
            let Some(rob_idx) = port.rob.allocate(port.slots_needed(&txn)) else {
                self.stats.rob_stall_cycles += 1;
                continue;
            };
            port.reorder
                .issue(txn.id, txn.axi_id, txn.dst, rob_idx, txn.response_beats())
                .map_err(|source| NiError::Reorder { port: port.name(), source })?;
            port.pending = None;
            for f in request_flits(&txn, rob_idx) {
                self.streams[Stream::for_msg(f.header.msg_type).index()].push_back(f);
            }
            accepted.push(txn.id);
        }
        Ok(accepted)
    }

    /// Queue response flits produced by the local target.
    pub fn push_response(&mut self, flits: impl IntoIterator<Item = Flit>) {
        for f in flits {
            self.streams[Stream::for_msg(f.header.msg_type).index()].push_back(f);
        }
    }

    /// Hand due response beats to the AXI side, one per port whose
    /// `axi_ready` is set.
    pub fn deliver(&mut self, cycle: Cycle, axi_ready: [bool; 4]) -> Result<Vec<Completion>, NiError> {
        let mut done = Vec::new();
        for (port, ready) in self.ports.iter_mut().zip(axi_ready) {
            if !ready {
                continue;
            }
            let beat = port.reorder.pop(cycle).map_err(|source| NiError::Reorder { port: port.name(), source })?;
            if let Some(b) = beat.filter(|b| b.last) {
                port.rob.free(b.rob_idx)?;
                done.push(Completion { txn: b.txn, axi_id: b.axi_id, bus: port.bus, kind: port.kind, cycle });
            }
        }
        Ok(done)
    }

    /// Push parked response beats that became deliverable this cycle.
    pub fn release(&mut self, cycle: Cycle) {
        for p in &mut self.ports {
            p.reorder.release(cycle);
        }
    }

    /// Route one flit taken from the network. Responses are absorbed;
    /// requests are returned for the local target.
    pub fn receive(&mut self, flit: Flit, channel: ChannelKind, cycle: Cycle) -> Result<Option<Flit>, NiError> {
        let h = flit.header;
        if h.dst != self.coord {
            return Err(NiError::Misrouted { dst: h.dst, at: self.coord });
        }
        if self.variant.channel_for(h.msg_type.bus(), h.msg_type.class()) != channel {
            return Err(NiError::WrongChannel(h.msg_type.name()));
        }
        self.stats.ejected_flits[channel.index()] += 1;
        self.stats.ejected_bytes[channel.index()] += u64::from(h.msg_type.data_bytes());
        if h.msg_type.is_request() {
            return Ok(Some(flit));
        }
        let kind = if h.msg_type.class() == AxiClass::R { TxnKind::Read } else { TxnKind::Write };
        let port = &mut self.ports[port_index(h.msg_type.bus(), kind)];
        let reserved = port.rob.allocation(h.rob_idx).ok_or(NiError::NoSlot { rob_idx: h.rob_idx, beat: flit.beat })?;
        if u32::from(flit.beat) >= reserved && kind == TxnKind::Read {
            return Err(NiError::NoSlot { rob_idx: h.rob_idx, beat: flit.beat });
        }
        port.reorder
            .on_response(h.rob_idx, h.axi_id, flit.beat, h.last, cycle)
            .map_err(|source| NiError::Reorder { port: port.name(), source })?;
        Ok(None)
    }

    /// Beats held anywhere in a port never exceed the slots reserved for it.
    pub fn check_occupancy(&self) -> Result<(), NiError> {
        for p in &self.ports {
            let held = u64::from(p.reorder.waiting_beats()) + p.reorder.queued_beats() as u64;
            // one slot per response beat, B responses included
            let reserved = p.rob.used_slots();
            if held > u64::from(reserved) || reserved > p.rob.capacity_slots() {
                return Err(NiError::Overcommitted { port: p.name(), held, reserved });
            }
        }
        Ok(())
    }

    pub fn occupancy(&self) -> Vec<PortOccupancy> {
        self.ports
            .iter()
            .map(|p| PortOccupancy {
                port: p.name(),
                capacity_bytes: p.rob.capacity_bytes(),
                free_bytes: p.rob.free_bytes(),
                peak_used_bytes: p.rob.peak_used_slots() * p.rob.slot_bytes(),
                outstanding: p.reorder.len(),
                fragments: p.rob.fragments(),
            })
            .collect()
    }

    pub fn reorder_stats(&self) -> Vec<ReorderStats> {
        self.ports.iter().map(|p| p.reorder.stats().clone()).collect()
    }

    pub fn is_idle(&self) -> bool {
        self.streams.iter().all(VecDeque::is_empty)
            && self.ports.iter().all(|p| p.pending.is_none() && p.reorder.is_empty())
    }

    /// Outstanding transactions on a port.
    pub fn outstanding(&self, bus: AxiBus, kind: TxnKind) -> usize {
        self.ports[port_index(bus, kind)].reorder.len()
    }

    fn choose(&self, channel: usize) -> Option<usize> {
        let streams = &self.streams;
        let map = &self.stream_channel;
        self.arbiters[channel]
            .choose(streams.len(), |s| map[s].index() == channel && !streams[s].is_empty())
    }

    /// Drive the injection side of every attached channel.
    pub fn drive(&mut self, wires: &mut Wires<Flit>) {
        for c in 0..3 {
            let Some(link) = self.outputs[c] else { continue };
            self.plan[c] = self.choose(c);
            wires.drive(link, self.plan[c].map(|s| *self.streams[s].front().expect("chosen stream has a flit")));
        }
    }

    /// Settle the injection side after the handshake.
    pub fn commit_outputs(&mut self, cycle: Cycle, wires: &Wires<Flit>) {
        for c in 0..3 {
            let (Some(link), Some(s)) = (self.outputs[c], self.plan[c]) else { continue };
            if wires.fired(link) {
                let f = self.streams[s].pop_front().expect("planned stream has a flit");
                self.arbiters[c].transferred(s, Stream::ALL.len(), f.header.last);
                self.stats.injected_flits[c] += 1;
                if f.header.msg_type == MsgType::WideR {
                    self.stats.first_wide_r_out.entry(f.header.dst).or_insert(cycle);
                }
            } else {
                self.arbiters[c].stalled(s);
            }
        }
    }
}

/// Request-path flits of a transaction, in injection order.
pub fn request_flits(txn: &AxiTransaction, rob_idx: u32) -> Vec<Flit> {
    let header = |class, last| FlitHeader {
        dst: txn.dst,
        src: txn.initiator,
        rob_idx,
        msg_type: MsgType::new(txn.bus, class),
        last,
        axi_id: txn.axi_id,
    };
    let flit = |class, beat: u16, last| {
        let h = header(class, last);
        Flit { payload_bits: h.msg_type.payload_bits(), header: h, txn: txn.id, beat, len: txn.burst_len }
    };
    match txn.kind {
        TxnKind::Read => vec![flit(AxiClass::Ar, 0, true)],
        TxnKind::Write => {
            let mut v = Vec::with_capacity(usize::from(txn.burst_len) + 1);
            v.push(flit(AxiClass::Aw, 0, true));
            v.extend((0..txn.burst_len).map(|b| flit(AxiClass::W, b, b + 1 == txn.burst_len)));
            v
        }
    }
}

/// Response-path flits answering a request header, sent back to its source.
pub fn response_flits(req: &Flit, responder: Coord) -> Vec<Flit> {
    let bus = req.header.msg_type.bus();
    let (class, beats) = match req.header.msg_type.class() {
        AxiClass::Ar => (AxiClass::R, req.len),
        _ => (AxiClass::B, 1),
    };
    let msg_type = MsgType::new(bus, class);
    (0..beats)
        .map(|beat| Flit {
            header: FlitHeader {
                dst: req.header.src,
                src: responder,
                rob_idx: req.header.rob_idx,
                msg_type,
                last: beat + 1 == beats,
                axi_id: req.header.axi_id,
            },
            payload_bits: msg_type.payload_bits(),
            txn: req.txn,
            beat,
            len: beats,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const ME: Coord = Coord::new(1, 1);
    const THEM: Coord = Coord::new(2, 1);

    fn read(id: u64, bus: AxiBus, len: u16) -> AxiTransaction {
        AxiTransaction {
            id: TxnId(id),
            initiator: ME,
            axi_id: 3,
            kind: TxnKind::Read,
            bus,
            dst: THEM,
            burst_len: len,
            issue_cycle: 0,
        }
    }

    fn ni() -> NetworkInterface {
        NetworkInterface::new(ME, Variant::NarrowWide, NiConfig::default()).unwrap()
    }

    fn requests(n: &mut NetworkInterface) -> Vec<Flit> {
        n.streams.iter_mut().flat_map(|s| s.drain(..)).collect()
    }

    #[test]
    fn wide_read_reserves_sixteen_slots() {
        let mut n = ni();
        assert!(n.present(read(0, AxiBus::Wide, 16)).unwrap());
        assert_eq!(n.inject().unwrap(), vec![TxnId(0)]);
        let occ = &n.occupancy()[port_index(AxiBus::Wide, TxnKind::Read)];
        assert_eq!(occ.capacity_bytes - occ.free_bytes, 1024);
    }

    #[test]
    fn stalls_until_space_frees() {
        let mut n = ni();
        // 7.5 KiB of the 8 KiB wide ROB in use
        for i in 0..7 {
            n.present(read(i, AxiBus::Wide, 16)).unwrap();
            n.inject().unwrap();
        }
        n.present(read(7, AxiBus::Wide, 8)).unwrap();
        n.inject().unwrap();
        let reqs = requests(&mut n);
        n.present(read(8, AxiBus::Wide, 16)).unwrap();
        assert!(n.inject().unwrap().is_empty());
        assert_eq!(n.stats().rob_stall_cycles, 1);
        // complete the first burst
        let first = reqs.iter().find(|f| f.txn == TxnId(0)).unwrap();
        for f in response_flits(first, THEM) {
            assert_eq!(n.receive(f, ChannelKind::Wide, 10).unwrap(), None);
        }
        let mut c = 11;
        while n.deliver(c, [true; 4]).unwrap().is_empty() {
            c += 1;
        }
        assert_eq!(n.inject().unwrap(), vec![TxnId(8)]);
    }

    #[test]
    fn writes_take_one_table_slot() {
        let mut n = ni();
        let w = AxiTransaction { kind: TxnKind::Write, burst_len: 64, ..read(0, AxiBus::Wide, 1) };
        n.present(w).unwrap();
        n.inject().unwrap();
        let occ = &n.occupancy()[port_index(AxiBus::Wide, TxnKind::Write)];
        assert_eq!(occ.capacity_bytes - occ.free_bytes, 1);
        let flits = requests(&mut n);
        assert_eq!(flits.len(), 65);
        assert!(flits.iter().rfind(|f| f.header.msg_type == MsgType::WideW).unwrap().header.last);
    }

    #[test]
    fn oversize_transaction_is_a_config_error() {
        let cfg = NiConfig { wide_rob_bytes: 512, ..Default::default() };
        let mut n = NetworkInterface::new(ME, Variant::NarrowWide, cfg).unwrap();
        assert!(matches!(n.present(read(0, AxiBus::Wide, 16)), Err(NiError::TooLarge { need: 16, .. })));
    }

    #[test]
    fn response_takes_one_cycle_in_the_ni() {
        let mut n = ni();
        n.present(read(0, AxiBus::Narrow, 1)).unwrap();
        n.inject().unwrap();
        let ar = requests(&mut n).pop().unwrap();
        assert_eq!(ar.header.msg_type, MsgType::NarrowAr);
        let r = response_flits(&ar, THEM).pop().unwrap();
        assert_eq!(r.header.dst, ME);
        n.receive(r, ChannelKind::NarrowRsp, 30).unwrap();
        assert!(n.deliver(30, [true; 4]).unwrap().is_empty());
        let done = n.deliver(31, [true; 4]).unwrap();
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].cycle, 31);
        assert!(n.is_idle());
        assert!(n.occupancy().iter().all(|o| o.free_bytes == o.capacity_bytes));
    }

    #[test]
    fn bogus_rob_idx_is_rejected() {
        let mut n = ni();
        n.present(read(0, AxiBus::Narrow, 1)).unwrap();
        n.inject().unwrap();
        let mut ar = requests(&mut n).pop().unwrap();
        ar.header.rob_idx = 99;
        let r = response_flits(&ar, THEM).pop().unwrap();
        assert!(matches!(n.receive(r, ChannelKind::NarrowRsp, 1), Err(NiError::NoSlot { rob_idx: 99, .. })));
    }

    #[test]
    fn wrong_channel_is_rejected() {
        let mut n = ni();
        let f = request_flits(&read(0, AxiBus::Wide, 2), 0).pop().unwrap();
        let mut f = f;
        f.header.dst = ME;
        assert!(matches!(n.receive(f, ChannelKind::Wide, 0), Err(NiError::WrongChannel(_))));
    }
}
