//! ICMP: echo responder plus destination-unreachable generation.

use std::net::Ipv4Addr;

use super::checksum::{inet_checksum, verify};
use super::ipv4::{Ipv4Packet, IPPROTO_ICMP, IPV4_HEADER_LEN};

const TYPE_ECHO_REPLY: u8 = 0;
const TYPE_DEST_UNREACHABLE: u8 = 3;
const TYPE_ECHO_REQUEST: u8 = 8;
pub const CODE_PORT_UNREACHABLE: u8 = 3;

fn icmp_message(ty: u8, code: u8, rest: &[u8], body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + body.len());
    out.push(ty);
    out.push(code);
    out.extend_from_slice(&[0, 0]); // checksum placeholder
    out.extend_from_slice(&rest[..4]);
    out.extend_from_slice(body);
    let ck = inet_checksum(&out);
    out[2..4].copy_from_slice(&ck.to_be_bytes());
    out
}

/// Answers echo requests addressed to us; everything else is ignored. Bad
/// ICMP checksums are dropped.
pub fn icmp_echo_input(pkt: &Ipv4Packet, our_ip: Ipv4Addr) -> Option<Ipv4Packet> {
    if pkt.protocol != IPPROTO_ICMP || pkt.dst != our_ip || pkt.payload.len() < 8 {
        return None;
    }
    if !verify(&pkt.payload) {
        return None;
    }
    if pkt.payload[0] != TYPE_ECHO_REQUEST || pkt.payload[1] != 0 {
        return None;
    }
    // Identifier, sequence and payload echoed unchanged.
    let reply = icmp_message(TYPE_ECHO_REPLY, 0, &pkt.payload[4..8], &pkt.payload[8..]);
    Some(Ipv4Packet::new(our_ip, pkt.src, IPPROTO_ICMP, reply))
}

/// Builds a destination-unreachable for `original`, quoting its header plus
/// the first 8 payload bytes.
pub fn icmp_dest_unreachable(original: &Ipv4Packet, our_ip: Ipv4Addr, code: u8) -> Ipv4Packet {
    let hdr = original.encode().expect("original packet encodable");
    let quote_len = (IPV4_HEADER_LEN + 8).min(hdr.len());
    let msg = icmp_message(TYPE_DEST_UNREACHABLE, code, &[0; 4], &hdr[..quote_len]);
    Ipv4Packet::new(our_ip, original.src, IPPROTO_ICMP, msg)
}
