//! Pluggable link abstraction standing in for the NIC: an in-memory paired
//! link with configurable impairments, and a UDP-tunnel link for running two
//! service instances across real hosts.
//!
//! Receive is strictly polling: `poll_recv` returns what is immediately
//! available and never blocks. Each endpoint is single-owner; it may be moved
//! between threads but never shared.

mod impair;
mod mem;
mod tunnel;

pub use impair::{Impairer, REORDER_HOLD_MAX};
pub use mem::{create_mem_link_pair, MemLink};
pub use tunnel::{create_udp_tunnel_link, UdpTunnelLink, TUNNEL_HEADER_LEN, TUNNEL_MAGIC};

use crate::util::Micros;
use thiserror::Error;

/// Default MTU, matching standard Ethernet.
pub const DEFAULT_MTU: usize = 1500;
/// Smallest accepted MTU; keeps IPv4 fragmentation exercisable.
pub const MIN_MTU: usize = 576;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("invalid link config: {0}")]
    Config(String),
    #[error("frame size {len} outside (0, {mtu}]")]
    Size { len: usize, mtu: usize },
    #[error("link resource error: {0}")]
    Resource(String),
}

/// One link-layer frame. Length is the Vec length; always in (0, mtu] once
/// accepted by a link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    data: Vec<u8>,
}

impl FrameBuffer {
    pub fn new(data: Vec<u8>) -> Self {
        Self { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }
}

impl From<Vec<u8>> for FrameBuffer {
    fn from(data: Vec<u8>) -> Self {
        Self::new(data)
    }
}

/// Impairment and sizing parameters for a link direction.
///
/// With a fixed `seed` and an identical send sequence the impairment
/// decisions are identical; see [`Impairer`] for the decision rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub mtu: usize,
    pub loss_prob: f64,
    pub reorder_prob: f64,
    pub dup_prob: f64,
    pub delay_mean: Micros,
    pub delay_jitter: Micros,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            mtu: DEFAULT_MTU,
            loss_prob: 0.0,
            reorder_prob: 0.0,
            dup_prob: 0.0,
            delay_mean: 0,
            delay_jitter: 0,
            seed: 0,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), LinkError> {
        for (name, p) in [
            ("loss_prob", self.loss_prob),
            ("reorder_prob", self.reorder_prob),
            ("dup_prob", self.dup_prob),
        ] {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(LinkError::Config(format!("{name}={p} outside [0,1]")));
            }
        }
        if self.mtu < MIN_MTU {
            return Err(LinkError::Config(format!(
                "mtu {} below minimum {MIN_MTU}",
                self.mtu
            )));
        }
        Ok(())
    }
}

/// A link endpoint. `send` enqueues toward the peer subject to impairments and
/// never blocks; `poll_recv` returns up to `max` immediately-available frames.
pub trait Link: Send {
    fn mtu(&self) -> usize;
    fn send(&mut self, frame: FrameBuffer, now: Micros) -> Result<(), LinkError>;
    fn poll_recv(&mut self, now: Micros, max: usize) -> Vec<FrameBuffer>;
}

pub(crate) fn check_frame_size(len: usize, mtu: usize) -> Result<(), LinkError> {
    if len == 0 || len > mtu {
        return Err(LinkError::Size { len, mtu });
    }
    Ok(())
}
