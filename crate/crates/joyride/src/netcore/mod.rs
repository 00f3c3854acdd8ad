//! Non-TCP protocol layers of the user-space stack: Ethernet framing, ARP,
//! IPv4 with fragmentation/reassembly, ICMP echo, and UDP.
//!
//! Everything here is either a pure wire-format function or an explicit state
//! table (reassembly, ARP cache) owned by the service loop. Nothing blocks.

pub mod arp;
pub mod checksum;
pub mod ether;
pub mod icmp;
pub mod ipv4;
pub mod reasm;
pub mod udp;

pub use checksum::inet_checksum;
pub use ether::{EthFrame, MacAddr, ETHERTYPE_ARP, ETHERTYPE_IPV4};
pub use ipv4::{ipv4_fragment, Ipv4Packet, IPPROTO_ICMP, IPPROTO_TCP, IPPROTO_UDP};
pub use reasm::{ReasmResult, ReassemblyTable};

use std::net::Ipv4Addr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("parse error: {0}")]
    Parse(&'static str),
    #[error("fragmentation needed but DF set")]
    FragmentationNeeded,
    #[error("payload too large: {0}")]
    TooLarge(usize),
    #[error("reassembly would exceed 65535 bytes")]
    ReassemblyOverflow,
}

/// Transport protocol selector for demultiplexing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Proto {
    Tcp,
    Udp,
}

impl Proto {
    pub fn number(self) -> u8 {
        match self {
            Proto::Tcp => IPPROTO_TCP,
            Proto::Udp => IPPROTO_UDP,
        }
    }
}

/// The 5-tuple demux key. `remote` is `None` for wildcard listeners, so a
/// listener key can never collide with a fully-specified connection key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowKey {
    pub proto: Proto,
    pub local_addr: Ipv4Addr,
    pub local_port: u16,
    pub remote: Option<(Ipv4Addr, u16)>,
}

impl FlowKey {
    pub fn listener(proto: Proto, local_addr: Ipv4Addr, local_port: u16) -> Self {
        Self {
            proto,
            local_addr,
            local_port,
            remote: None,
        }
    }

    pub fn connection(
        proto: Proto,
        local_addr: Ipv4Addr,
        local_port: u16,
        remote_addr: Ipv4Addr,
        remote_port: u16,
    ) -> Self {
        Self {
            proto,
            local_addr,
            local_port,
            remote: Some((remote_addr, remote_port)),
        }
    }

    pub fn is_listener(&self) -> bool {
        self.remote.is_none()
    }
}
