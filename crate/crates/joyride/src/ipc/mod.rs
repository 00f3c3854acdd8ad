//! Client ↔ service transport: shared-memory data rings, the 64-byte control
//! message protocol, capability tokens, and the per-client doorbell.

pub mod capability;
pub mod control;
pub mod doorbell;
pub mod region;
pub mod ring;

pub use capability::{CapabilityRegistry, CapabilityToken, TOKEN_LEN};
pub use control::{ControlMessage, EventBody, MsgType, CONTROL_FRAME_LEN};
pub use doorbell::Doorbell;
pub use region::{RegionLayout, SharedRegion};
pub use ring::{RingQueue, RING_HEADER_LEN};

use thiserror::Error;

/// Stable numeric error codes carried in `EventBody::Err`, mirroring the
/// POSIX errno names so kernel-path and joyride-path failures classify
/// identically.
pub mod errno {
    pub const ENOENT: u32 = 2;
    pub const EBADF: u32 = 9;
    pub const EAGAIN: u32 = 11;
    pub const EINVAL: u32 = 22;
    pub const EMFILE: u32 = 24;
    pub const EPIPE: u32 = 32;
    pub const EPROTO: u32 = 71;
    pub const EOPNOTSUPP: u32 = 95;
    pub const EADDRINUSE: u32 = 98;
    pub const ECONNRESET: u32 = 104;
    pub const EISCONN: u32 = 106;
    pub const ENOTCONN: u32 = 107;
    pub const ETIMEDOUT: u32 = 110;
    pub const ECONNREFUSED: u32 = 111;
    pub const EINPROGRESS: u32 = 115;
}

#[derive(Debug, Error)]
pub enum IpcError {
    #[error("protocol: {0}")]
    Protocol(&'static str),
    #[error("region: {0}")]
    Region(&'static str),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
