//! Reorder table and release logic for one AXI port of a network interface.
//!
//! Outstanding transactions are kept in one issue-ordered queue per AXI ID.
//! Response beats either go straight to the output FIFO or wait in their
//! reserved ROB slot until everything older with the same ID has gone out.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::kernel::Cycle;
use crate::link::{Coord, TxnId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResponseAction {
    ForwardDirect,
    Buffer { slot: u32 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReorderError {
    #[error("response for unknown rob_idx {0}")]
    UnknownRob(u32),
    #[error("rob_idx {0} is already in use")]
    RobInUse(u32),
    #[error("reorder table full")]
    TableFull,
    #[error("rob_idx {rob_idx}: header carries AXI ID {got}, table has {expected}")]
    IdMismatch { rob_idx: u32, expected: u16, got: u16 },
    #[error("rob_idx {rob_idx}: beat {got} arrived, expected beat {expected}")]
    BeatOrder { rob_idx: u32, expected: u16, got: u16 },
    #[error("rob_idx {0}: response beat after the transaction completed")]
    Duplicate(u32),
    #[error("rob_idx {0}: last flag does not match the burst length")]
    LastMismatch(u32),
    #[error("rob_idx {0}: completed ahead of an older transaction with the same ID")]
    OutOfOrder(u32),
}

/// A response beat on its way to the AXI side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutBeat {
    pub txn: TxnId,
    pub axi_id: u16,
    pub rob_idx: u32,
    pub beat: u16,
    pub last: bool,
    pub ready_at: Cycle,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Entry {
    txn: TxnId,
    axi_id: u16,
    dst: Coord,
    beats: u16,
    received: u16,
    /// Beats handed to the output FIFO; `received - pushed` sit in the ROB.
    pushed: u16,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReorderStats {
    pub direct_beats: u64,
    pub buffered_beats: u64,
    pub peak_entries: usize,
    pub peak_waiting: u32,
}

#[derive(Clone, Debug)]
pub struct ReorderUnit {
    bypass: bool,
    capacity: usize,
    entries: BTreeMap<u32, Entry>,
    queues: BTreeMap<u16, VecDeque<u32>>,
    out: VecDeque<OutBeat>,
    waiting: u32,
    dirty: bool,
    stats: ReorderStats,
}

impl ReorderUnit {
    pub fn new(bypass: bool, capacity: usize) -> Self {
        Self {
            bypass,
            capacity,
            entries: BTreeMap::new(),
            queues: BTreeMap::new(),
            out: VecDeque::new(),
            waiting: 0,
            dirty: false,
            stats: ReorderStats::default(),
        }
    }

    pub fn bypass(&self) -> bool {
        self.bypass
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    /// Beats held in the ROB waiting for an older transaction.
    pub fn waiting_beats(&self) -> u32 {
        self.waiting
    }

    /// Beats in the output FIFO.
    pub fn queued_beats(&self) -> usize {
        self.out.len()
    }

    pub fn stats(&self) -> &ReorderStats {
        &self.stats
    }

    /// Record a transaction whose request was just injected.
    pub fn issue(&mut self, txn: TxnId, axi_id: u16, dst: Coord, rob_idx: u32, beats: u16) -> Result<(), ReorderError> {
        if self.is_full() {
            return Err(ReorderError::TableFull);
        }
        if self.entries.contains_key(&rob_idx) {
            return Err(ReorderError::RobInUse(rob_idx));
        }
        self.entries.insert(rob_idx, Entry { txn, axi_id, dst, beats, received: 0, pushed: 0 });
        self.queues.entry(axi_id).or_default().push_back(rob_idx);
        self.stats.peak_entries = self.stats.peak_entries.max(self.entries.len());
        Ok(())
    }

    /// Direct forwarding is safe if nothing older with this ID can still
    /// need to go out first: older entries are either fully handed over, or
    /// target the same destination (their beats arrive first on the
    /// deterministic path) and have nothing parked in the ROB.
    fn may_forward(&self, rob_idx: u32, e: &Entry) -> bool {
        if !self.bypass || e.pushed != e.received {
            return false;
        }
        for &older in &self.queues[&e.axi_id] {
            if older == rob_idx {
                return true;
            }
            let o = &self.entries[&older];
            let drained = o.pushed == o.beats;
            let same_dst_clear = o.dst == e.dst && o.pushed == o.received;
            if !(drained || same_dst_clear) {
                return false;
            }
        }
        unreachable!("entry missing from its ID queue")
    }

    /// Handle one response beat arriving from the network in `cycle`.
    pub fn on_response(
        &mut self,
        rob_idx: u32,
        axi_id: u16,
        beat: u16,
        last: bool,
        cycle: Cycle,
    ) -> Result<ResponseAction, ReorderError> {
        let e = self.entries.get(&rob_idx).ok_or(ReorderError::UnknownRob(rob_idx))?;
        if e.axi_id != axi_id {
            return Err(ReorderError::IdMismatch { rob_idx, expected: e.axi_id, got: axi_id });
        }
        if e.received >= e.beats {
            return Err(ReorderError::Duplicate(rob_idx));
        }
        if beat != e.received {
            return Err(ReorderError::BeatOrder { rob_idx, expected: e.received, got: beat });
        }
        if last != (beat + 1 == e.beats) {
            return Err(ReorderError::LastMismatch(rob_idx));
        }
        let forward = self.may_forward(rob_idx, e);
        let e = self.entries.get_mut(&rob_idx).expect("checked above");
        // any arrival can unblock parked beats of a younger entry
        self.dirty = true;
        e.received += 1;
        if forward {
            e.pushed += 1;
            let beat = OutBeat { txn: e.txn, axi_id, rob_idx, beat, last, ready_at: cycle + 1 };
            self.out.push_back(beat);
            self.stats.direct_beats += 1;
            Ok(ResponseAction::ForwardDirect)
        } else {
            self.waiting += 1;
            self.stats.buffered_beats += 1;
            self.stats.peak_waiting = self.stats.peak_waiting.max(self.waiting);
            Ok(ResponseAction::Buffer { slot: rob_idx + u32::from(beat) })
        }
    }

    /// Move parked beats whose predecessors have all gone out into the
    /// output FIFO. With bypass disabled an entry is only released once all
    /// of its beats are in.
    pub fn release(&mut self, cycle: Cycle) {
        if !std::mem::take(&mut self.dirty) || self.waiting == 0 {
            return;
        }
        for queue in self.queues.values() {
            for rob_idx in queue {
                let e = self.entries.get_mut(rob_idx).expect("queued entry exists");
                if e.pushed == e.beats {
                    continue;
                }
                if !self.bypass && e.received < e.beats {
                    break;
                }
                while e.pushed < e.received {
                    self.out.push_back(OutBeat {
                        txn: e.txn,
                        axi_id: e.axi_id,
                        rob_idx: *rob_idx,
                        beat: e.pushed,
                        last: e.pushed + 1 == e.beats,
                        ready_at: cycle + 1,
                    });
                    e.pushed += 1;
                    self.waiting -= 1;
                }
                if e.pushed < e.beats {
                    break;
                }
            }
        }
    }

    /// Next beat for the AXI side, if one is due. Delivering a last beat
    /// retires the entry; the caller frees its ROB range.
    pub fn pop(&mut self, cycle: Cycle) -> Result<Option<OutBeat>, ReorderError> {
        if !self.out.front().is_some_and(|b| b.ready_at <= cycle) {
            return Ok(None);
        }
        let b = self.out.pop_front().expect("checked front");
        if b.last {
            let queue = self.queues.get_mut(&b.axi_id).expect("ID queue exists");
            if queue.front() != Some(&b.rob_idx) {
                return Err(ReorderError::OutOfOrder(b.rob_idx));
            }
            queue.pop_front();
            if queue.is_empty() {
                self.queues.remove(&b.axi_id);
            }
            self.entries.remove(&b.rob_idx);
        }
        Ok(Some(b))
    }
}
