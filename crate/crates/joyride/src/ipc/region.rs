//! Per-client shared memory region: one 4 KiB header page followed by a fixed
//! array of ring pairs (tx then rx per slot).
//!
//! The service creates the region — heap-backed for the in-process transport,
//! file-backed (mmap, MAP_SHARED) when the client is a separate process — and
//! hands the client the path plus a slot index per socket.

use std::ffi::CString;
use std::io;
use std::path::Path;
use std::sync::Arc;

use super::ring::{RingQueue, RING_HEADER_LEN};

pub const REGION_MAGIC: u32 = 0x4A52_5230; // "JRR0"
pub const REGION_VERSION: u16 = 1;
pub const REGION_HEADER_LEN: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionLayout {
    pub slots: u32,
    /// Per-ring byte capacity; power of two.
    pub ring_capacity: u32,
}

impl RegionLayout {
    pub const DEFAULT_RING_CAPACITY: u32 = 256 * 1024;

    pub fn new(slots: u32, ring_capacity: u32) -> RegionLayout {
        assert!(ring_capacity.is_power_of_two());
        RegionLayout { slots, ring_capacity }
    }

    fn slot_size(&self) -> usize {
        2 * (RING_HEADER_LEN + self.ring_capacity as usize)
    }

    pub fn total_size(&self) -> usize {
        REGION_HEADER_LEN + self.slots as usize * self.slot_size()
    }

    pub fn slot_offset(&self, slot: u32) -> usize {
        REGION_HEADER_LEN + slot as usize * self.slot_size()
    }
}

enum Backing {
    Heap(Vec<u64>),
    Mmap { ptr: *mut u8, len: usize },
}

unsafe impl Send for Backing {}
unsafe impl Sync for Backing {}

impl Drop for Backing {
    fn drop(&mut self) {
        if let Backing::Mmap { ptr, len } = *self {
            unsafe {
                libc::munmap(ptr as *mut libc::c_void, len);
            }
        }
    }
}

impl Backing {
    fn base(&self) -> *mut u8 {
        match self {
            Backing::Heap(v) => v.as_ptr() as *mut u8,
            Backing::Mmap { ptr, .. } => *ptr,
        }
    }
}

/// A mapped region plus its layout. Clones share the same memory.
#[derive(Clone)]
pub struct SharedRegion {
    backing: Arc<Backing>,
    layout: RegionLayout,
}

impl std::fmt::Debug for SharedRegion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SharedRegion").field("layout", &self.layout).finish()
    }
}

impl SharedRegion {
    /// Heap-backed region for same-process clients.
    pub fn create_heap(layout: RegionLayout) -> SharedRegion {
        let words = layout.total_size().div_ceil(8);
        let backing = Arc::new(Backing::Heap(vec![0u64; words]));
        let region = SharedRegion { backing, layout };
        region.write_header();
        region.init_rings();
        region
    }

    /// File-backed region for cross-process clients. Creates (or truncates)
    /// `path`, sizes it, and maps it shared.
    pub fn create_file(path: &Path, layout: RegionLayout) -> io::Result<SharedRegion> {
        let len = layout.total_size();
        let ptr = map_file(path, len, true)?;
        let region = SharedRegion {
            backing: Arc::new(Backing::Mmap { ptr, len }),
            layout,
        };
        region.write_header();
        region.init_rings();
        Ok(region)
    }

    /// Maps an existing region file created by the service, reading the
    /// layout from its header.
    pub fn open_file(path: &Path) -> io::Result<SharedRegion> {
        let meta = std::fs::metadata(path)?;
        let len = meta.len() as usize;
        if len < REGION_HEADER_LEN {
            return Err(io::Error::other("region file too small"));
        }
        let ptr = map_file(path, len, false)?;
        let backing = Arc::new(Backing::Mmap { ptr, len });
        let hdr = ptr as *const u8;
        let magic = unsafe { std::ptr::read_unaligned(hdr as *const u32) };
        let version = unsafe { std::ptr::read_unaligned(hdr.add(4) as *const u16) };
        if magic != REGION_MAGIC || version != REGION_VERSION {
            return Err(io::Error::other("region header mismatch"));
        }
        let slots = unsafe { std::ptr::read_unaligned(hdr.add(16) as *const u32) };
        let ring_capacity = unsafe { std::ptr::read_unaligned(hdr.add(20) as *const u32) };
        let layout = RegionLayout { slots, ring_capacity };
        if layout.total_size() > len || !ring_capacity.is_power_of_two() {
            return Err(io::Error::other("region layout inconsistent"));
        }
        Ok(SharedRegion { backing, layout })
    }

    fn write_header(&self) {
        let base = self.backing.base();
        unsafe {
            std::ptr::write_unaligned(base as *mut u32, REGION_MAGIC);
            std::ptr::write_unaligned(base.add(4) as *mut u16, REGION_VERSION);
            std::ptr::write_unaligned(base.add(8) as *mut u64, self.layout.total_size() as u64);
            std::ptr::write_unaligned(base.add(16) as *mut u32, self.layout.slots);
            std::ptr::write_unaligned(base.add(20) as *mut u32, self.layout.ring_capacity);
        }
    }

    fn init_rings(&self) {
        for slot in 0..self.layout.slots {
            let _ = self.make_pair(slot, true);
        }
    }

    pub fn layout(&self) -> RegionLayout {
        self.layout
    }

    /// The (tx, rx) ring pair for a slot, from the client's point of view:
    /// tx carries client→service data, rx carries service→client data.
    pub fn ring_pair(&self, slot: u32) -> (RingQueue, RingQueue) {
        self.make_pair(slot, false)
    }

    fn make_pair(&self, slot: u32, init: bool) -> (RingQueue, RingQueue) {
        assert!(slot < self.layout.slots, "slot out of range");
        let cap = self.layout.ring_capacity as usize;
        let off = self.layout.slot_offset(slot);
        let base = self.backing.base();
        let keep: Arc<dyn Send + Sync> = self.backing.clone();
        unsafe {
            let tx_base = base.add(off);
            let rx_base = base.add(off + RING_HEADER_LEN + cap);
            if init {
                (
                    RingQueue::init_at(tx_base, cap, keep.clone()),
                    RingQueue::init_at(rx_base, cap, keep),
                )
            } else {
                (
                    RingQueue::from_raw(tx_base, keep.clone()),
                    RingQueue::from_raw(rx_base, keep),
                )
            }
        }
    }
}

fn map_file(path: &Path, len: usize, create: bool) -> io::Result<*mut u8> {
    let cpath = CString::new(path.as_os_str().as_encoded_bytes())
        .map_err(|_| io::Error::other("path contains NUL"))?;
    let flags = if create {
        libc::O_RDWR | libc::O_CREAT | libc::O_TRUNC
    } else {
        libc::O_RDWR
    };
    let fd = unsafe { libc::open(cpath.as_ptr(), flags | libc::O_CLOEXEC, 0o600) };
    if fd < 0 {
        return Err(io::Error::last_os_error());
    }
    if create && unsafe { libc::ftruncate(fd, len as libc::off_t) } != 0 {
        let err = io::Error::last_os_error();
        unsafe { libc::close(fd) };
        return Err(err);
    }
    let ptr = unsafe {
        libc::mmap(
            std::ptr::null_mut(),
            len,
            libc::PROT_READ | libc::PROT_WRITE,
            libc::MAP_SHARED,
            fd,
            0,
        )
    };
    unsafe { libc::close(fd) };
    if ptr == libc::MAP_FAILED {
        return Err(io::Error::last_os_error());
    }
    Ok(ptr as *mut u8)
}
