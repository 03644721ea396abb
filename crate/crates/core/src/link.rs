//! Flits, physical channels and the mapping of AXI messages onto channels.
//!
//! Every flit carries a complete header in parallel with its payload, so
//! there are no head or tail flits: a burst of N beats is N flits and the
//! `last` bit marks the final one. Channel widths are accounting constants,
//! the header layout is kept as structured fields.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kernel::TracePayload;

/// Mesh coordinate of a tile or boundary endpoint.
///
/// Boundary endpoints sit one step outside the grid, e.g. `(-1, 2)` for a
/// controller on the west edge next to row 2.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub x: i32,
    pub y: i32,
}

impl Coord {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Coord) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}y{}", self.x, self.y)
    }
}

/// One of the three physically separate networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    NarrowReq,
    NarrowRsp,
    Wide,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] = [ChannelKind::NarrowReq, ChannelKind::NarrowRsp, ChannelKind::Wide];

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::NarrowReq => "narrow_req",
            ChannelKind::NarrowRsp => "narrow_rsp",
            ChannelKind::Wide => "wide",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Total wire count of one direction of a physical link, header included.
pub fn channel_width_bits(kind: ChannelKind) -> u32 {
    match kind {
        ChannelKind::NarrowReq => 118,
        ChannelKind::NarrowRsp => 102,
        ChannelKind::Wide => 604,
    }
}

/// Which AXI port of the endpoint a message belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxiBus {
    Narrow,
    Wide,
}

impl AxiBus {
    pub const ALL: [AxiBus; 2] = [AxiBus::Narrow, AxiBus::Wide];

    /// Data bus width in bytes: 64-bit narrow, 512-bit wide.
    pub fn beat_bytes(self) -> u32 {
        match self {
            AxiBus::Narrow => 8,
            AxiBus::Wide => 64,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// The five AXI channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AxiClass {
    Ar,
    Aw,
    W,
    R,
    B,
}

impl AxiClass {
    pub fn is_request(self) -> bool {
        matches!(self, AxiClass::Ar | AxiClass::Aw | AxiClass::W)
    }
}

/// Table I mapping of AXI messages onto physical channels.
///
/// Small wide-bus messages (AR, AW, B) travel on the narrow networks so the
/// wide network only carries data beats.
pub fn map_axi_to_channel(bus: AxiBus, class: AxiClass) -> ChannelKind {
    match (bus, class) {
        (AxiBus::Narrow, AxiClass::Ar | AxiClass::Aw | AxiClass::W) => ChannelKind::NarrowReq,
        (AxiBus::Narrow, AxiClass::R | AxiClass::B) => ChannelKind::NarrowRsp,
        (AxiBus::Wide, AxiClass::Ar | AxiClass::Aw) => ChannelKind::NarrowReq,
        (AxiBus::Wide, AxiClass::B) => ChannelKind::NarrowRsp,
        (AxiBus::Wide, AxiClass::W | AxiClass::R) => ChannelKind::Wide,
    }
}

/// Network configuration being simulated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Three physical networks with the Table I mapping.
    #[default]
    NarrowWide,
    /// Baseline: every message class shares a single wide network.
    WideOnly,
}

impl Variant {
    pub fn channel_for(self, bus: AxiBus, class: AxiClass) -> ChannelKind {
        match self {
            Variant::NarrowWide => map_axi_to_channel(bus, class),
            Variant::WideOnly => ChannelKind::Wide,
        }
    }

    /// Channels that get their own router grid under this variant.
    pub fn channels(self) -> &'static [ChannelKind] {
        match self {
            Variant::NarrowWide => &ChannelKind::ALL,
            Variant::WideOnly => &[ChannelKind::Wide],
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Variant::NarrowWide => "nw",
            Variant::WideOnly => "wo",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::NarrowWide => "narrow-wide",
            Variant::WideOnly => "wide-only",
        })
    }
}

/// Packet type field of the header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MsgType {
    NarrowAr,
    NarrowAw,
    NarrowW,
    NarrowR,
    NarrowB,
    WideAr,
    WideAw,
    WideW,
    WideR,
    WideB,
}

impl MsgType {
    pub fn new(bus: AxiBus, class: AxiClass) -> Self {
        match (bus, class) {
            (AxiBus::Narrow, AxiClass::Ar) => MsgType::NarrowAr,
            (AxiBus::Narrow, AxiClass::Aw) => MsgType::NarrowAw,
            (AxiBus::Narrow, AxiClass::W) => MsgType::NarrowW,
            (AxiBus::Narrow, AxiClass::R) => MsgType::NarrowR,
            (AxiBus::Narrow, AxiClass::B) => MsgType::NarrowB,
            (AxiBus::Wide, AxiClass::Ar) => MsgType::WideAr,
            (AxiBus::Wide, AxiClass::Aw) => MsgType::WideAw,
            (AxiBus::Wide, AxiClass::W) => MsgType::WideW,
            (AxiBus::Wide, AxiClass::R) => MsgType::WideR,
            (AxiBus::Wide, AxiClass::B) => MsgType::WideB,
        }
    }

    pub fn bus(self) -> AxiBus {
        match self {
            MsgType::NarrowAr | MsgType::NarrowAw | MsgType::NarrowW | MsgType::NarrowR | MsgType::NarrowB => {
                AxiBus::Narrow
            }
            _ => AxiBus::Wide,
        }
    }

    pub fn class(self) -> AxiClass {
        match self {
            MsgType::NarrowAr | MsgType::WideAr => AxiClass::Ar,
            MsgType::NarrowAw | MsgType::WideAw => AxiClass::Aw,
            MsgType::NarrowW | MsgType::WideW => AxiClass::W,
            MsgType::NarrowR | MsgType::WideR => AxiClass::R,
            MsgType::NarrowB | MsgType::WideB => AxiClass::B,
        }
    }

    pub fn is_request(self) -> bool {
        self.class().is_request()
    }

    /// Primary payload width from Table I (address, data or response code).
    pub fn payload_bits(self) -> u16 {
        match self.class() {
            AxiClass::Ar | AxiClass::Aw => 48,
            AxiClass::W | AxiClass::R => (self.bus().beat_bytes() * 8) as u16,
            AxiClass::B => 2,
        }
    }

    /// Bytes of user data carried, used for bandwidth accounting.
    pub fn data_bytes(self) -> u32 {
        match self.class() {
            AxiClass::W | AxiClass::R => self.bus().beat_bytes(),
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::NarrowAr => "narrow_ar",
            MsgType::NarrowAw => "narrow_aw",
            MsgType::NarrowW => "narrow_w",
            MsgType::NarrowR => "narrow_r",
            MsgType::NarrowB => "narrow_b",
            MsgType::WideAr => "wide_ar",
            MsgType::WideAw => "wide_aw",
            MsgType::WideW => "wide_w",
            MsgType::WideR => "wide_r",
            MsgType::WideB => "wide_b",
        }
    }
}

/// Routing, ordering and type information sent in parallel with the payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FlitHeader {
    pub dst: Coord,
    pub src: Coord,
    /// Base index of the response storage allocated for the transaction.
    pub rob_idx: u32,
    pub msg_type: MsgType,
    pub last: bool,
    pub axi_id: u16,
}

/// Unique transaction handle assigned by the issuing endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxnId(pub u64);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// One single-cycle transfer unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Flit {
    pub header: FlitHeader,
    pub payload_bits: u16,
    /// Opaque content: the transaction and beat this flit carries.
    pub txn: TxnId,
    pub beat: u16,
    /// Burst length; read requests carry the number of beats asked for.
    pub len: u16,
}

impl Flit {
    pub fn total_bits(&self, channel: ChannelKind) -> u32 {
        channel_width_bits(channel)
    }

    /// Width invariant: the declared payload must fit the channel it rides on.
    pub fn fits(&self, channel: ChannelKind) -> bool {
        u32::from(self.payload_bits) <= channel_width_bits(channel)
    }
}

impl TracePayload for Flit {
    fn trace_header() -> &'static str {
        "src,dst,msg_type,axi_id,rob_idx,last"
    }

    fn trace_fields(&self) -> String {
        let h = &self.header;
        format!(
            "{},{},{},{},{},{}",
            h.src,
            h.dst,
            h.msg_type.name(),
            h.axi_id,
            h.rob_idx,
            u8::from(h.last)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_mapping() {
        assert_eq!(map_axi_to_channel(AxiBus::Narrow, AxiClass::R), ChannelKind::NarrowRsp);
        assert_eq!(map_axi_to_channel(AxiBus::Wide, AxiClass::Ar), ChannelKind::NarrowReq);
        assert_eq!(map_axi_to_channel(AxiBus::Wide, AxiClass::W), ChannelKind::Wide);
        assert_eq!(map_axi_to_channel(AxiBus::Wide, AxiClass::R), ChannelKind::Wide);
        assert_eq!(map_axi_to_channel(AxiBus::Wide, AxiClass::B), ChannelKind::NarrowRsp);
        assert_eq!(map_axi_to_channel(AxiBus::Narrow, AxiClass::W), ChannelKind::NarrowReq);
    }

    #[test]
    fn widths() {
        assert_eq!(channel_width_bits(ChannelKind::NarrowReq), 118);
        assert_eq!(channel_width_bits(ChannelKind::NarrowRsp), 102);
        assert_eq!(channel_width_bits(ChannelKind::Wide), 604);
    }

    #[test]
    fn requests_and_responses_never_share_a_narrow_channel() {
        for bus in AxiBus::ALL {
            for class in [AxiClass::Ar, AxiClass::Aw, AxiClass::W, AxiClass::R, AxiClass::B] {
                let ch = map_axi_to_channel(bus, class);
                match ch {
                    ChannelKind::NarrowReq => assert!(class.is_request()),
                    ChannelKind::NarrowRsp => assert!(!class.is_request()),
                    // wide carries W and R only; R is always sinkable at the initiator
                    ChannelKind::Wide => assert!(matches!(class, AxiClass::W | AxiClass::R)),
                }
            }
        }
    }

    #[test]
    fn every_payload_fits_its_channel() {
        for variant in [Variant::NarrowWide, Variant::WideOnly] {
            for bus in AxiBus::ALL {
                for class in [AxiClass::Ar, AxiClass::Aw, AxiClass::W, AxiClass::R, AxiClass::B] {
                    let ch = variant.channel_for(bus, class);
                    let bits = MsgType::new(bus, class).payload_bits();
                    assert!(u32::from(bits) <= channel_width_bits(ch), "{bus:?} {class:?} on {ch}");
                }
            }
        }
    }

    #[test]
    fn msg_type_roundtrip() {
        for bus in AxiBus::ALL {
            for class in [AxiClass::Ar, AxiClass::Aw, AxiClass::W, AxiClass::R, AxiClass::B] {
                let m = MsgType::new(bus, class);
                assert_eq!((m.bus(), m.class()), (bus, class));
            }
        }
    }
}
