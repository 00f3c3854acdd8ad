//! Internet checksum (RFC 1071 method).

/// Ones-complement of the ones-complement 16-bit sum over `data`, odd lengths
/// padded with a zero byte. Returns the value to place in a checksum field.
pub fn inet_checksum(data: &[u8]) -> u16 {
    !fold(sum(data))
}

/// Running 32-bit accumulator over 16-bit big-endian words.
pub(crate) fn sum(data: &[u8]) -> u32 {
    let mut acc = 0u32;
    let mut chunks = data.chunks_exact(2);
    for w in &mut chunks {
        acc += u32::from(u16::from_be_bytes([w[0], w[1]]));
    }
    if let [last] = chunks.remainder() {
        acc += u32::from(u16::from_be_bytes([*last, 0]));
    }
    acc
}

pub(crate) fn fold(mut acc: u32) -> u16 {
    while acc > 0xFFFF {
        acc = (acc & 0xFFFF) + (acc >> 16);
    }
    acc as u16
}

/// Checksum including an IPv4 pseudo-header, used by UDP and TCP.
pub fn pseudo_checksum(
    src: std::net::Ipv4Addr,
    dst: std::net::Ipv4Addr,
    proto: u8,
    segment: &[u8],
) -> u16 {
    let mut acc = sum(&src.octets());
    acc += sum(&dst.octets());
    acc += u32::from(proto);
    acc += segment.len() as u32;
    acc += sum(segment);
    !fold(acc)
}

/// Verification form: sums `data` (checksum field included) and folds; a
/// self-consistent region folds to 0xFFFF.
pub fn verify(data: &[u8]) -> bool {
    fold(sum(data)) == 0xFFFF
}
