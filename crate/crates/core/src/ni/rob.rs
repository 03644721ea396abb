//! First-fit allocator for response storage.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RobError {
    #[error("capacity {capacity} B is not a positive multiple of the {slot} B slot")]
    Geometry { capacity: u32, slot: u32 },
    #[error("free of slot {0} which is not the base of an allocation")]
    BadFree(u32),
}

/// Storage split into fixed-size slots, handed out as contiguous ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RobAllocator {
    slot_bytes: u32,
    slots: u32,
    /// Free ranges, start -> length, never adjacent.
    free: BTreeMap<u32, u32>,
    used: BTreeMap<u32, u32>,
    used_slots: u32,
    peak_used: u32,
}

impl RobAllocator {
    pub fn new(capacity_bytes: u32, slot_bytes: u32) -> Result<Self, RobError> {
        if slot_bytes == 0 || capacity_bytes == 0 || !capacity_bytes.is_multiple_of(slot_bytes) {
            return Err(RobError::Geometry { capacity: capacity_bytes, slot: slot_bytes });
        }
        let slots = capacity_bytes / slot_bytes;
        Ok(Self {
            slot_bytes,
            slots,
            free: BTreeMap::from([(0, slots)]),
            used: BTreeMap::new(),
            used_slots: 0,
            peak_used: 0,
        })
    }

    pub fn slot_bytes(&self) -> u32 {
        self.slot_bytes
    }

    pub fn capacity_slots(&self) -> u32 {
        self.slots
    }

    pub fn capacity_bytes(&self) -> u32 {
        self.slots * self.slot_bytes
    }

    pub fn free_slots(&self) -> u32 {
        self.slots - self.used_slots
    }

    pub fn free_bytes(&self) -> u32 {
        self.free_slots() * self.slot_bytes
    }

    pub fn used_slots(&self) -> u32 {
        self.used_slots
    }

    pub fn peak_used_slots(&self) -> u32 {
        self.peak_used
    }

    /// Number of disjoint free ranges.
    pub fn fragments(&self) -> usize {
        self.free.len()
    }

    pub fn outstanding(&self) -> usize {
        self.used.len()
    }

    /// Reserve `n` contiguous slots at the lowest fitting address.
    pub fn allocate(&mut self, n: u32) -> Option<u32> {
        if n == 0 {
            return None;
        }
        let (&start, &len) = self.free.iter().find(|(_, &len)| len >= n)?;
        self.free.remove(&start);
        if len > n {
            self.free.insert(start + n, len - n);
        }
        self.used.insert(start, n);
        self.used_slots += n;
        self.peak_used = self.peak_used.max(self.used_slots);
        Some(start)
    }

    /// Length of the allocation starting at `start`.
    pub fn allocation(&self, start: u32) -> Option<u32> {
        self.used.get(&start).copied()
    }

    pub fn free(&mut self, start: u32) -> Result<u32, RobError> {
        let len = self.used.remove(&start).ok_or(RobError::BadFree(start))?;
        self.used_slots -= len;
        let mut s = start;
        let mut l = len;
        if let Some((&ps, &pl)) = self.free.range(..start).next_back() {
            if ps + pl == start {
                self.free.remove(&ps);
                s = ps;
                l += pl;
            }
        }
        if let Some(&nl) = self.free.get(&(start + len)) {
            self.free.remove(&(start + len));
            l += nl;
        }
        self.free.insert(s, l);
        Ok(len)
    }

    /// Structural self-check: free and used ranges tile the storage exactly.
    pub fn consistent(&self) -> bool {
        let mut ranges: Vec<(u32, u32)> = self.free.iter().chain(self.used.iter()).map(|(&s, &l)| (s, l)).collect();
        ranges.sort_unstable();
        let mut at = 0;
        for (s, l) in ranges {
            if s != at || l == 0 {
                return false;
            }
            at = s + l;
        }
        at == self.slots && self.used.values().sum::<u32>() == self.used_slots
    }
}
