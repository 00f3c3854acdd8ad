//! UDP datagram codec with pseudo-header checksum.

use std::net::Ipv4Addr;

use super::checksum::pseudo_checksum;
use super::ipv4::IPPROTO_UDP;
use super::NetError;

pub const UDP_HEADER_LEN: usize = 8;
pub const UDP_MAX_PAYLOAD: usize = 65535 - 20 - UDP_HEADER_LEN;

/// Encodes a UDP datagram. The checksum is always computed; a computed value
/// of zero is transmitted as 0xFFFF per the protocol.
pub fn udp_encode(
    src_port: u16,
    dst_port: u16,
    payload: &[u8],
    src: Ipv4Addr,
    dst: Ipv4Addr,
) -> Result<Vec<u8>, NetError> {
    if payload.len() > UDP_MAX_PAYLOAD {
        return Err(NetError::TooLarge(payload.len()));
    }
    let len = (UDP_HEADER_LEN + payload.len()) as u16;
    let mut out = Vec::with_capacity(len as usize);
    out.extend_from_slice(&src_port.to_be_bytes());
    out.extend_from_slice(&dst_port.to_be_bytes());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(payload);
    let mut ck = pseudo_checksum(src, dst, IPPROTO_UDP, &out);
    if ck == 0 {
        ck = 0xFFFF;
    }
    out[6..8].copy_from_slice(&ck.to_be_bytes());
    Ok(out)
}

/// Decodes and verifies a UDP datagram. A zero checksum is accepted as
/// "absent"; anything else must verify against the pseudo-header.
pub fn udp_decode(
    bytes: &[u8],
    src: Ipv4Addr,
    dst: Ipv4Addr,
) -> Result<(u16, u16, Vec<u8>), NetError> {
    if bytes.len() < UDP_HEADER_LEN {
        return Err(NetError::Parse("udp: truncated header"));
    }
    let len = u16::from_be_bytes([bytes[4], bytes[5]]) as usize;
    if len < UDP_HEADER_LEN || len > bytes.len() {
        return Err(NetError::Parse("udp: length"));
    }
    let dgram = &bytes[..len];
    let stored = u16::from_be_bytes([dgram[6], dgram[7]]);
    if stored != 0 {
        let mut check = dgram.to_vec();
        check[6] = 0;
        check[7] = 0;
        let mut expect = pseudo_checksum(src, dst, IPPROTO_UDP, &check);
        if expect == 0 {
            expect = 0xFFFF;
        }
        if expect != stored {
            return Err(NetError::Parse("udp: checksum"));
        }
    }
    Ok((
        u16::from_be_bytes([dgram[0], dgram[1]]),
        u16::from_be_bytes([dgram[2], dgram[3]]),
        dgram[UDP_HEADER_LEN..].to_vec(),
    ))
}
