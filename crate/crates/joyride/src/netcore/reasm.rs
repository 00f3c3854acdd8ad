//! IPv4 reassembly with first-arrival-wins overlap handling.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use super::ipv4::{Ipv4Packet, IPV4_MAX_PAYLOAD};
use super::NetError;
use crate::util::{Micros, SECONDS};

pub const REASSEMBLY_TIMEOUT: Micros = 30 * SECONDS;
pub const DEFAULT_MAX_BUFFERS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct ReasmKey {
    src: Ipv4Addr,
    dst: Ipv4Addr,
    protocol: u8,
    identification: u16,
}

#[derive(Debug)]
struct Buffer {
    data: Vec<u8>,
    /// Sorted, disjoint, merged [start, end) ranges already written.
    filled: Vec<(usize, usize)>,
    total: Option<usize>,
    first_arrival: Micros,
    ttl: u8,
}

impl Buffer {
    fn new(now: Micros) -> Self {
        Self {
            data: Vec::new(),
            filled: Vec::new(),
            total: None,
            first_arrival: now,
            ttl: 64,
        }
    }

    /// Writes `bytes` at `start`, skipping already-filled sub-ranges.
    fn insert(&mut self, start: usize, bytes: &[u8]) {
        let end = start + bytes.len();
        if end > self.data.len() {
            self.data.resize(end, 0);
        }
        // Copy the gaps only: earlier arrivals win.
        let mut pos = start;
        for &(fs, fe) in &self.filled {
            if fe <= pos {
                continue;
            }
            if fs >= end {
                break;
            }
            if fs > pos {
                let stop = fs.min(end);
                self.data[pos..stop].copy_from_slice(&bytes[pos - start..stop - start]);
            }
            pos = pos.max(fe);
            if pos >= end {
                break;
            }
        }
        if pos < end {
            self.data[pos..end].copy_from_slice(&bytes[pos - start..end - start]);
        }
        // Merge the new range into the filled list.
        self.filled.push((start, end));
        self.filled.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::with_capacity(self.filled.len());
        for &(s, e) in &self.filled {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        self.filled = merged;
    }

    fn complete(&self) -> bool {
        match self.total {
            Some(t) => self.filled == [(0, t)] || (t == 0 && self.filled.is_empty()),
            None => false,
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum ReasmResult {
    Complete(Ipv4Packet),
    Pending,
}

/// Reassembly state table, owned by the service loop. Bounded to
/// `max_buffers`; beyond that the oldest buffer is evicted.
#[derive(Debug)]
pub struct ReassemblyTable {
    buffers: HashMap<ReasmKey, Buffer>,
    max_buffers: usize,
}

impl Default for ReassemblyTable {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_BUFFERS)
    }
}

impl ReassemblyTable {
    pub fn new(max_buffers: usize) -> Self {
        Self {
            buffers: HashMap::new(),
            max_buffers: max_buffers.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.buffers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffers.is_empty()
    }

    /// Feeds one packet in. Whole packets complete immediately; fragments
    /// accumulate until the hole list empties and the final fragment has been
    /// seen. Buffers older than 30 s are discarded.
    pub fn input(&mut self, frag: Ipv4Packet, now: Micros) -> Result<ReasmResult, NetError> {
        self.expire(now);
        if !frag.is_fragment() {
            return Ok(ReasmResult::Complete(frag));
        }
        let key = ReasmKey {
            src: frag.src,
            dst: frag.dst,
            protocol: frag.protocol,
            identification: frag.identification,
        };
        let start = frag.fragment_offset as usize * 8;
        let end = start + frag.payload.len();
        if end > IPV4_MAX_PAYLOAD {
            self.buffers.remove(&key);
            return Err(NetError::ReassemblyOverflow);
        }

        if !self.buffers.contains_key(&key) && self.buffers.len() >= self.max_buffers {
            self.evict_oldest();
        }
        let buf = self.buffers.entry(key).or_insert_with(|| Buffer::new(now));
        if start == 0 {
            buf.ttl = frag.ttl;
        }
        buf.insert(start, &frag.payload);
        if !frag.more_fragments {
            buf.total = Some(end);
        }
        if let Some(total) = buf.total {
            if buf.data.len() > total {
                // A non-final fragment claimed bytes past the final edge.
                self.buffers.remove(&key);
                return Err(NetError::Parse("reassembly: data past final fragment"));
            }
        }
        if buf.complete() {
            let buf = self.buffers.remove(&key).unwrap();
            return Ok(ReasmResult::Complete(Ipv4Packet {
                src: key.src,
                dst: key.dst,
                protocol: key.protocol,
                identification: key.identification,
                ttl: buf.ttl,
                dont_fragment: false,
                more_fragments: false,
                fragment_offset: 0,
                payload: buf.data,
            }));
        }
        Ok(ReasmResult::Pending)
    }

    pub fn expire(&mut self, now: Micros) {
        self.buffers
            .retain(|_, b| now.saturating_sub(b.first_arrival) < REASSEMBLY_TIMEOUT);
    }

    fn evict_oldest(&mut self) {
        if let Some(key) = self
            .buffers
            .iter()
            .min_by_key(|(_, b)| b.first_arrival)
            .map(|(k, _)| *k)
        {
            self.buffers.remove(&key);
        }
    }
}
