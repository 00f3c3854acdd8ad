//! IPv4 header codec and fragmentation.

use std::net::Ipv4Addr;

use super::checksum::{inet_checksum, verify};
use super::NetError;

pub const IPPROTO_ICMP: u8 = 1;
pub const IPPROTO_TCP: u8 = 6;
pub const IPPROTO_UDP: u8 = 17;

pub const IPV4_HEADER_LEN: usize = 20;
pub const IPV4_MAX_PAYLOAD: usize = 65535 - IPV4_HEADER_LEN;
pub const DEFAULT_TTL: u8 = 64;

/// An IPv4 packet (no options; IHL is always 5).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ipv4Packet {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub protocol: u8,
    pub ttl: u8,
    pub identification: u16,
    pub dont_fragment: bool,
    pub more_fragments: bool,
    /// Fragment offset in 8-byte units.
    pub fragment_offset: u16,
    pub payload: Vec<u8>,
}

impl Ipv4Packet {
    pub fn new(src: Ipv4Addr, dst: Ipv4Addr, protocol: u8, payload: Vec<u8>) -> Self {
        Self {
            src,
            dst,
            protocol,
            ttl: DEFAULT_TTL,
            identification: 0,
            dont_fragment: false,
            more_fragments: false,
            fragment_offset: 0,
            payload,
        }
    }

    pub fn is_fragment(&self) -> bool {
        self.more_fragments || self.fragment_offset != 0
    }

    pub fn total_len(&self) -> usize {
        IPV4_HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, NetError> {
        if self.payload.len() > IPV4_MAX_PAYLOAD {
            return Err(NetError::TooLarge(self.payload.len()));
        }
        let mut out = Vec::with_capacity(self.total_len());
        out.push(0x45); // version 4, IHL 5
        out.push(0x00); // DSCP/ECN
        out.extend_from_slice(&(self.total_len() as u16).to_be_bytes());
        out.extend_from_slice(&self.identification.to_be_bytes());
        let mut flags_frag = self.fragment_offset & 0x1FFF;
        if self.dont_fragment {
            flags_frag |= 0x4000;
        }
        if self.more_fragments {
            flags_frag |= 0x2000;
        }
        out.extend_from_slice(&flags_frag.to_be_bytes());
        out.push(self.ttl);
        out.push(self.protocol);
        out.extend_from_slice(&[0, 0]); // checksum placeholder
        out.extend_from_slice(&self.src.octets());
        out.extend_from_slice(&self.dst.octets());
        let ck = inet_checksum(&out[..IPV4_HEADER_LEN]);
        out[10..12].copy_from_slice(&ck.to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Ipv4Packet, NetError> {
        if bytes.len() < IPV4_HEADER_LEN {
            return Err(NetError::Parse("ipv4: truncated header"));
        }
        if bytes[0] >> 4 != 4 {
            return Err(NetError::Parse("ipv4: version"));
        }
        let ihl = (bytes[0] & 0x0F) as usize * 4;
        if ihl != IPV4_HEADER_LEN {
            return Err(NetError::Parse("ipv4: options unsupported"));
        }
        if !verify(&bytes[..IPV4_HEADER_LEN]) {
            return Err(NetError::Parse("ipv4: header checksum"));
        }
        let total = u16::from_be_bytes([bytes[2], bytes[3]]) as usize;
        if total < IPV4_HEADER_LEN || total > bytes.len() {
            return Err(NetError::Parse("ipv4: total length"));
        }
        let flags_frag = u16::from_be_bytes([bytes[6], bytes[7]]);
        Ok(Ipv4Packet {
            src: Ipv4Addr::new(bytes[12], bytes[13], bytes[14], bytes[15]),
            dst: Ipv4Addr::new(bytes[16], bytes[17], bytes[18], bytes[19]),
            protocol: bytes[9],
            ttl: bytes[8],
            identification: u16::from_be_bytes([bytes[4], bytes[5]]),
            dont_fragment: flags_frag & 0x4000 != 0,
            more_fragments: flags_frag & 0x2000 != 0,
            fragment_offset: flags_frag & 0x1FFF,
            payload: bytes[IPV4_HEADER_LEN..total].to_vec(),
        })
    }
}

/// Splits a packet into MTU-sized fragments. A packet that already fits is
/// returned unchanged. Offsets are multiples of 8; all fragments share the
/// identification; only the last carries more-fragments=0 (or the original MF
/// when fragmenting something that is itself a fragment).
pub fn ipv4_fragment(pkt: Ipv4Packet, mtu: usize) -> Result<Vec<Ipv4Packet>, NetError> {
    assert!(mtu >= 68, "mtu below IPv4 minimum");
    if pkt.total_len() <= mtu {
        return Ok(vec![pkt]);
    }
    if pkt.dont_fragment {
        return Err(NetError::FragmentationNeeded);
    }
    let chunk = (mtu - IPV4_HEADER_LEN) & !7;
    let mut out = Vec::new();
    let mut off = 0usize;
    while off < pkt.payload.len() {
        let end = (off + chunk).min(pkt.payload.len());
        let last = end == pkt.payload.len();
        out.push(Ipv4Packet {
            payload: pkt.payload[off..end].to_vec(),
            fragment_offset: pkt.fragment_offset + (off / 8) as u16,
            more_fragments: !last || pkt.more_fragments,
            ..pkt.clone()
        });
        off = end;
    }
    Ok(out)
}
