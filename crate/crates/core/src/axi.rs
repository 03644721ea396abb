//! Endpoint-side AXI transactions and the same-ID ordering oracle.
//!
//! The oracle only looks at issue order and delivery order. It knows nothing
//! about reorder tables or buffers, so tests can hold the network interface
//! against it.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Cycle;
use crate::link::{AxiBus, AxiClass, Coord, TxnId};

/// Largest burst AXI allows to span.
pub const MAX_BURST_BYTES: u32 = 4096;
pub const MAX_BURST_LEN: u16 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxnKind {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AxiTransaction {
    pub id: TxnId,
    pub initiator: Coord,
    pub axi_id: u16,
    pub kind: TxnKind,
    pub bus: AxiBus,
    pub dst: Coord,
    /// Beats, 1..=256.
    pub burst_len: u16,
    /// Cycle the transaction was presented on the AXI side of the initiator.
    pub issue_cycle: Cycle,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AxiError {
    #[error("{0}: burst length {1} outside 1..=256")]
    BurstLen(TxnId, u16),
    #[error("{txn}: {bytes} bytes exceeds the 4 KiB burst limit")]
    BurstBytes { txn: TxnId, bytes: u32 },
}

impl AxiTransaction {
    pub fn beat_bytes(&self) -> u32 {
        self.bus.beat_bytes()
    }

    pub fn bytes(&self) -> u32 {
        u32::from(self.burst_len) * self.beat_bytes()
    }

    /// Ordering domain this transaction belongs to.
    pub fn order_key(&self) -> OrderKey {
        OrderKey { initiator: self.initiator, bus: self.bus, kind: self.kind, axi_id: self.axi_id }
    }

    pub fn validate(&self) -> Result<(), AxiError> {
        if self.burst_len == 0 || self.burst_len > MAX_BURST_LEN {
            return Err(AxiError::BurstLen(self.id, self.burst_len));
        }
        if self.bytes() > MAX_BURST_BYTES {
            return Err(AxiError::BurstBytes { txn: self.id, bytes: self.bytes() });
        }
        Ok(())
    }

    /// Beats travelling initiator to target.
    pub fn request_beats(&self) -> u16 {
        match self.kind {
            TxnKind::Read => 1,
            TxnKind::Write => 1 + self.burst_len,
        }
    }

    /// Beats travelling target to initiator.
    pub fn response_beats(&self) -> u16 {
        match self.kind {
            TxnKind::Read => self.burst_len,
            TxnKind::Write => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Request,
    Response,
}

/// One flit's worth of an AXI message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BeatDescriptor {
    pub class: AxiClass,
    pub direction: Direction,
    /// Beat index within its message.
    pub beat: u16,
    pub last: bool,
    pub data_bytes: u32,
}

/// Split a transaction into its per-beat messages: the request path first,
/// then the response path. W data follows its AW directly.
pub fn expand_beats(txn: &AxiTransaction) -> Result<Vec<BeatDescriptor>, AxiError> {
    txn.validate()?;
    let single = |class, direction| BeatDescriptor { class, direction, beat: 0, last: true, data_bytes: 0 };
    let burst = |class, direction| {
        (0..txn.burst_len).map(move |beat| BeatDescriptor {
            class,
            direction,
            beat,
            last: beat + 1 == txn.burst_len,
            data_bytes: txn.beat_bytes(),
        })
    };
    let mut out = Vec::with_capacity(usize::from(txn.burst_len) + 2);
    match txn.kind {
        TxnKind::Read => {
            out.push(single(AxiClass::Ar, Direction::Request));
            out.extend(burst(AxiClass::R, Direction::Response));
        }
        TxnKind::Write => {
            out.push(single(AxiClass::Aw, Direction::Request));
            out.extend(burst(AxiClass::W, Direction::Request));
            out.push(single(AxiClass::B, Direction::Response));
        }
    }
    Ok(out)
}

/// AXI ordering domain: one manager port, one direction, one ID.
///
/// Read and write IDs are independent in AXI, and the narrow and wide ports
/// of an endpoint are separate managers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderKey {
    pub initiator: Coord,
    pub bus: AxiBus,
    pub kind: TxnKind,
    pub axi_id: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub txn: TxnId,
    pub key: OrderKey,
    pub cycle: Cycle,
}

/// Completion order of transactions as seen on the AXI side.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeliveryTrace {
    pub deliveries: Vec<Delivery>,
}

impl DeliveryTrace {
    pub fn push(&mut self, d: Delivery) {
        self.deliveries.push(d);
    }

    pub fn len(&self) -> usize {
        self.deliveries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deliveries.is_empty()
    }

    /// Delivery order restricted to each ordering domain.
    pub fn per_key_order(&self) -> BTreeMap<OrderKey, Vec<TxnId>> {
        let mut map: BTreeMap<OrderKey, Vec<TxnId>> = BTreeMap::new();
        for d in &self.deliveries {
            map.entry(d.key).or_default().push(d.txn);
        }
        map
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrderError {
    #[error("delivery of unknown transaction {0}")]
    UnknownTransaction(TxnId),
    #[error("transaction {0} delivered more than once")]
    Duplicate(TxnId),
    #[error("{key:?}: position {position} delivered {delivered} but {expected} was issued there")]
    Violation { key: OrderKey, position: usize, expected: TxnId, delivered: TxnId },
}

/// Check that within every ordering domain transactions complete in issue
/// order. Undelivered transactions are allowed only at the tail of a domain
/// (a run cut short); completeness is checked separately.
pub fn oracle_check_order(requests: &[AxiTransaction], deliveries: &DeliveryTrace) -> Result<(), OrderError> {
    let mut issued: HashMap<OrderKey, Vec<TxnId>> = HashMap::new();
    let mut known: HashMap<TxnId, OrderKey> = HashMap::new();
    for r in requests {
        issued.entry(r.order_key()).or_default().push(r.id);
        known.insert(r.id, r.order_key());
    }

    let mut seen: HashMap<TxnId, ()> = HashMap::new();
    let mut cursor: HashMap<OrderKey, usize> = HashMap::new();
    for d in &deliveries.deliveries {
        let key = *known.get(&d.txn).ok_or(OrderError::UnknownTransaction(d.txn))?;
        if seen.insert(d.txn, ()).is_some() {
            return Err(OrderError::Duplicate(d.txn));
        }
        let pos = cursor.entry(key).or_insert(0);
        let expected = issued[&key][*pos];
        if expected != d.txn {
            return Err(OrderError::Violation { key, position: *pos, expected, delivered: d.txn });
        }
        *pos += 1;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn txn(id: u64, axi_id: u16, kind: TxnKind, bus: AxiBus, burst_len: u16) -> AxiTransaction {
        AxiTransaction {
            id: TxnId(id),
            initiator: Coord::new(0, 0),
            axi_id,
            kind,
            bus,
            dst: Coord::new(1, 0),
            burst_len,
            issue_cycle: 0,
        }
    }

    fn count(beats: &[BeatDescriptor], class: AxiClass) -> usize {
        beats.iter().filter(|b| b.class == class).count()
    }

    fn deliver(txns: &[&AxiTransaction]) -> DeliveryTrace {
        let mut t = DeliveryTrace::default();
        for (i, x) in txns.iter().enumerate() {
            t.push(Delivery { txn: x.id, key: x.order_key(), cycle: i as u64 });
        }
        t
    }

    #[test]
    fn wide_read_sixteen_beats() {
        let b = expand_beats(&txn(0, 0, TxnKind::Read, AxiBus::Wide, 16)).unwrap();
        assert_eq!((count(&b, AxiClass::Ar), count(&b, AxiClass::R)), (1, 16));
        let r: Vec<_> = b.iter().filter(|b| b.class == AxiClass::R).collect();
        assert!(r[..15].iter().all(|b| !b.last));
        assert!(r[15].last);
    }

    #[test]
    fn narrow_write_single_beat() {
        let b = expand_beats(&txn(0, 0, TxnKind::Write, AxiBus::Narrow, 1)).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!([b[0].class, b[1].class, b[2].class], [AxiClass::Aw, AxiClass::W, AxiClass::B]);
        assert!(b.iter().all(|b| b.last));
    }

    #[test]
    fn wide_write_full_four_kib() {
        // 4096 B / 64 B per beat
        let b = expand_beats(&txn(0, 0, TxnKind::Write, AxiBus::Wide, 64)).unwrap();
        assert_eq!((count(&b, AxiClass::Aw), count(&b, AxiClass::W), count(&b, AxiClass::B)), (1, 64, 1));
    }

    #[test]
    fn burst_limits() {
        assert_eq!(
            expand_beats(&txn(1, 0, TxnKind::Read, AxiBus::Narrow, 0)).unwrap_err(),
            AxiError::BurstLen(TxnId(1), 0)
        );
        assert!(matches!(
            expand_beats(&txn(2, 0, TxnKind::Read, AxiBus::Wide, 65)),
            Err(AxiError::BurstBytes { bytes: 4160, .. })
        ));
        assert!(expand_beats(&txn(3, 0, TxnKind::Read, AxiBus::Narrow, 256)).is_ok());
        assert!(expand_beats(&txn(3, 0, TxnKind::Read, AxiBus::Narrow, 257)).is_err());
    }

    #[test]
    fn read_bytes_conserved() {
        for len in [1u16, 7, 16, 64] {
            let t = txn(0, 0, TxnKind::Read, AxiBus::Wide, len);
            let b = expand_beats(&t).unwrap();
            let rsp: u32 = b.iter().filter(|b| b.direction == Direction::Response).map(|b| b.data_bytes).sum();
            assert_eq!(rsp, t.bytes());
        }
    }

    #[test]
    fn same_id_in_order_passes() {
        let a = txn(0, 3, TxnKind::Read, AxiBus::Narrow, 1);
        let b = txn(1, 3, TxnKind::Read, AxiBus::Narrow, 1);
        assert_eq!(oracle_check_order(&[a, b], &deliver(&[&a, &b])), Ok(()));
    }

    #[test]
    fn same_id_swapped_fails() {
        let a = txn(0, 3, TxnKind::Read, AxiBus::Narrow, 1);
        let b = txn(1, 3, TxnKind::Read, AxiBus::Narrow, 1);
        match oracle_check_order(&[a, b], &deliver(&[&b, &a])) {
            Err(OrderError::Violation { position, expected, delivered, .. }) => {
                assert_eq!((position, expected, delivered), (0, TxnId(0), TxnId(1)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn different_ids_may_swap() {
        let a = txn(0, 1, TxnKind::Read, AxiBus::Narrow, 1);
        let b = txn(1, 2, TxnKind::Read, AxiBus::Narrow, 1);
        assert_eq!(oracle_check_order(&[a, b], &deliver(&[&b, &a])), Ok(()));
    }

    #[test]
    fn reads_and_writes_are_independent_domains() {
        let a = txn(0, 1, TxnKind::Read, AxiBus::Narrow, 1);
        let b = txn(1, 1, TxnKind::Write, AxiBus::Narrow, 1);
        assert_eq!(oracle_check_order(&[a, b], &deliver(&[&b, &a])), Ok(()));
    }

    #[test]
    fn unknown_and_duplicate() {
        let a = txn(0, 1, TxnKind::Read, AxiBus::Narrow, 1);
        let ghost = txn(9, 1, TxnKind::Read, AxiBus::Narrow, 1);
        assert_eq!(oracle_check_order(&[a], &deliver(&[&ghost])), Err(OrderError::UnknownTransaction(TxnId(9))));
        assert_eq!(oracle_check_order(&[a], &deliver(&[&a, &a])), Err(OrderError::Duplicate(TxnId(0))));
    }

    #[test]
    fn partial_delivery_is_a_prefix() {
        let a = txn(0, 1, TxnKind::Read, AxiBus::Narrow, 1);
        let b = txn(1, 1, TxnKind::Read, AxiBus::Narrow, 1);
        assert_eq!(oracle_check_order(&[a, b], &deliver(&[&a])), Ok(()));
        assert!(oracle_check_order(&[a, b], &deliver(&[&b])).is_err());
    }
}
