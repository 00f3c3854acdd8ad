//! Single-producer/single-consumer byte ring over a raw memory region.
//!
//! Layout: a 64-byte header (head u64, tail u64, capacity u64, rest reserved)
//! followed by `capacity` bytes of buffer. Head and tail are monotonically
//! increasing; the occupied span is `head - tail` and wraps modulo capacity.
//! The producer writes buffer bytes then publishes `head` with release
//! ordering; the consumer reads `head` with acquire ordering (and
//! symmetrically for `tail`), which is the entire cross-process contract.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub const RING_HEADER_LEN: usize = 64;

/// Handle onto one ring. Cloning is cheap; the 1P/1C discipline is the
/// caller's responsibility (exactly one side may call `produce`, one side
/// `consume`).
#[derive(Clone)]
pub struct RingQueue {
    base: *mut u8,
    capacity: usize,
    // Keeps the backing allocation (heap block or mapping) alive.
    _backing: Arc<dyn Send + Sync>,
}

unsafe impl Send for RingQueue {}
unsafe impl Sync for RingQueue {}

impl std::fmt::Debug for RingQueue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RingQueue")
            .field("capacity", &self.capacity)
            .field("len", &self.len())
            .finish()
    }
}

impl RingQueue {
    /// Wraps an existing, already initialized ring at `base`.
    ///
    /// # Safety
    /// `base` must point to `RING_HEADER_LEN + capacity` valid bytes that
    /// outlive `backing`, with an 8-byte-aligned header holding `capacity`.
    pub unsafe fn from_raw(base: *mut u8, backing: Arc<dyn Send + Sync>) -> RingQueue {
        let capacity = unsafe { (*(base as *const u64).add(2)) as usize };
        debug_assert!(capacity.is_power_of_two());
        RingQueue {
            base,
            capacity,
            _backing: backing,
        }
    }

    /// Zeroes the header and stamps the capacity. Same safety contract as
    /// [`RingQueue::from_raw`]; `capacity` must be a power of two.
    pub unsafe fn init_at(base: *mut u8, capacity: usize, backing: Arc<dyn Send + Sync>) -> RingQueue {
        assert!(capacity.is_power_of_two(), "ring capacity must be a power of two");
        unsafe {
            std::ptr::write_bytes(base, 0, RING_HEADER_LEN);
            *(base as *mut u64).add(2) = capacity as u64;
        }
        unsafe { RingQueue::from_raw(base, backing) }
    }

    /// Allocates a standalone heap-backed ring (used by tests and the
    /// in-process transport).
    pub fn new_heap(capacity: usize) -> RingQueue {
        assert!(capacity.is_power_of_two());
        let words = (RING_HEADER_LEN + capacity).div_ceil(8);
        let block: Arc<Vec<u64>> = Arc::new(vec![0u64; words]);
        let base = block.as_ptr() as *mut u8;
        unsafe { RingQueue::init_at(base, capacity, block) }
    }

    fn head(&self) -> &AtomicU64 {
        unsafe { AtomicU64::from_ptr(self.base as *mut u64) }
    }

    fn tail(&self) -> &AtomicU64 {
        unsafe { AtomicU64::from_ptr((self.base as *mut u64).add(1)) }
    }

    fn buf(&self) -> *mut u8 {
        unsafe { self.base.add(RING_HEADER_LEN) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Occupied bytes. Exact for the owning sides; a racing snapshot for
    /// anyone else.
    pub fn len(&self) -> usize {
        let head = self.head().load(Ordering::Acquire);
        let tail = self.tail().load(Ordering::Acquire);
        head.wrapping_sub(tail) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn free_space(&self) -> usize {
        self.capacity - self.len()
    }

    /// Producer side: appends up to `data.len()` bytes, returning how many
    /// were accepted. Never blocks; partial acceptance is normal.
    pub fn produce(&self, data: &[u8]) -> usize {
        let head = self.head().load(Ordering::Relaxed);
        let tail = self.tail().load(Ordering::Acquire);
        let free = self.capacity - head.wrapping_sub(tail) as usize;
        let n = data.len().min(free);
        if n == 0 {
            return 0;
        }
        let start = (head as usize) & (self.capacity - 1);
        let first = n.min(self.capacity - start);
        unsafe {
            std::ptr::copy_nonoverlapping(data.as_ptr(), self.buf().add(start), first);
            if first < n {
                std::ptr::copy_nonoverlapping(data.as_ptr().add(first), self.buf(), n - first);
            }
        }
        self.head().store(head.wrapping_add(n as u64), Ordering::Release);
        n
    }

    /// Consumer side: removes and returns up to `max` bytes FIFO.
    pub fn consume(&self, max: usize) -> Vec<u8> {
        let mut out = vec![0u8; max];
        let n = self.consume_into(&mut out);
        out.truncate(n);
        out
    }

    /// Consumer side: fills `out` from the ring, returning bytes copied.
    pub fn consume_into(&self, out: &mut [u8]) -> usize {
        let tail = self.tail().load(Ordering::Relaxed);
        let head = self.head().load(Ordering::Acquire);
        let avail = head.wrapping_sub(tail) as usize;
        let n = out.len().min(avail);
        if n == 0 {
            return 0;
        }
        let start = (tail as usize) & (self.capacity - 1);
        let first = n.min(self.capacity - start);
        unsafe {
            std::ptr::copy_nonoverlapping(self.buf().add(start), out.as_mut_ptr(), first);
            if first < n {
                std::ptr::copy_nonoverlapping(self.buf(), out.as_mut_ptr().add(first), n - first);
            }
        }
        self.tail().store(tail.wrapping_add(n as u64), Ordering::Release);
        n
    }

    /// Consumer side: copies up to `max` bytes without removing them.
    pub fn peek(&self, max: usize) -> Vec<u8> {
        let tail = self.tail().load(Ordering::Relaxed);
        let head = self.head().load(Ordering::Acquire);
        let avail = head.wrapping_sub(tail) as usize;
        let n = max.min(avail);
        let mut out = vec![0u8; n];
        let start = (tail as usize) & (self.capacity - 1);
        let first = n.min(self.capacity - start);
        unsafe {
            std::ptr::copy_nonoverlapping(self.buf().add(start), out.as_mut_ptr(), first);
            if first < n {
                std::ptr::copy_nonoverlapping(self.buf(), out.as_mut_ptr().add(first), n - first);
            }
        }
        out
    }

    /// Consumer side: drops `n` bytes (after a `peek`). Panics if fewer than
    /// `n` bytes are available.
    pub fn advance(&self, n: usize) {
        let tail = self.tail().load(Ordering::Relaxed);
        let head = self.head().load(Ordering::Acquire);
        assert!(n <= head.wrapping_sub(tail) as usize, "advance past head");
        self.tail().store(tail.wrapping_add(n as u64), Ordering::Release);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::DetRng;
    use std::collections::VecDeque;

    #[test]
    fn empty_ring_accepts_a_chunk() {
        let r = RingQueue::new_heap(64 * 1024);
        assert_eq!(r.produce(&[0xAB; 1024]), 1024);
        assert_eq!(r.len(), 1024);
    }

    #[test]
    fn full_ring_accepts_nothing() {
        let r = RingQueue::new_heap(64);
        assert_eq!(r.produce(&[1; 64]), 64);
        assert_eq!(r.produce(&[2; 1]), 0);
    }

    #[test]
    fn empty_ring_yields_nothing() {
        let r = RingQueue::new_heap(64);
        assert!(r.consume(16).is_empty());
    }

    #[test]
    fn consume_respects_max() {
        let r = RingQueue::new_heap(256);
        let data: Vec<u8> = (0..100).collect();
        assert_eq!(r.produce(&data), 100);
        assert_eq!(r.consume(40), data[..40]);
        assert_eq!(r.consume(1000), data[40..]);
    }

    #[test]
    fn wraparound_preserves_bytes() {
        let r = RingQueue::new_heap(64);
        assert_eq!(r.produce(&[9; 54]), 54); // within 10 bytes of the end
        assert_eq!(r.consume(64).len(), 54);
        let data: Vec<u8> = (100..150).collect();
        assert_eq!(r.produce(&data), 50);
        assert_eq!(r.consume(64), data);
    }

    // FIFO oracle: random interleaved produce/consume against a VecDeque.
    #[test]
    fn random_interleavings_match_sequential_queue() {
        let r = RingQueue::new_heap(128);
        let mut oracle: VecDeque<u8> = VecDeque::new();
        let mut rng = DetRng::seed_from_u64(0x51C);
        let mut next_byte = 0u8;
        for _ in 0..20_000 {
            if rng.below(2) == 0 {
                let n = rng.below(40) as usize;
                let chunk: Vec<u8> = (0..n)
                    .map(|_| {
                        next_byte = next_byte.wrapping_add(1);
                        next_byte
                    })
                    .collect();
                let accepted = r.produce(&chunk);
                assert_eq!(accepted, chunk.len().min(128 - oracle.len()));
                oracle.extend(&chunk[..accepted]);
            } else {
                let n = rng.below(40) as usize;
                let got = r.consume(n);
                let want: Vec<u8> = oracle.drain(..n.min(oracle.len())).collect();
                assert_eq!(got, want);
            }
            assert_eq!(r.len(), oracle.len());
        }
    }

    #[test]
    fn peek_and_advance_behave_like_consume() {
        let r = RingQueue::new_heap(64);
        r.produce(&[1, 2, 3, 4, 5]);
        assert_eq!(r.peek(3), vec![1, 2, 3]);
        assert_eq!(r.peek(3), vec![1, 2, 3], "peek does not consume");
        r.advance(2);
        assert_eq!(r.consume(10), vec![3, 4, 5]);
    }

    #[test]
    fn cross_thread_streaming_is_gap_free() {
        let r = RingQueue::new_heap(1024);
        let w = r.clone();
        const TOTAL: usize = 1_000_000;
        let producer = std::thread::spawn(move || {
            let mut sent = 0usize;
            while sent < TOTAL {
                let chunk: Vec<u8> = (sent..(sent + 300).min(TOTAL))
                    .map(|i| (i % 251) as u8)
                    .collect();
                let n = w.produce(&chunk);
                sent += n;
                if n == 0 {
                    std::thread::yield_now();
                }
            }
        });
        let mut got = Vec::with_capacity(TOTAL);
        while got.len() < TOTAL {
            let chunk = r.consume(512);
            if chunk.is_empty() {
                std::thread::yield_now();
            }
            got.extend(chunk);
        }
        producer.join().unwrap();
        assert!(got.iter().enumerate().all(|(i, &b)| b == (i % 251) as u8));
    }
}
