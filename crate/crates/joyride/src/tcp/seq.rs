//! Modulo-2^32 sequence-number arithmetic.

/// a < b in sequence space: (b − a) mod 2^32 ∈ (0, 2^31).
pub fn seq_lt(a: u32, b: u32) -> bool {
    let d = b.wrapping_sub(a);
    d != 0 && d < 0x8000_0000
}

pub fn seq_leq(a: u32, b: u32) -> bool {
    a == b || seq_lt(a, b)
}

/// x ∈ [a, b) in sequence space.
pub fn seq_between(a: u32, x: u32, b: u32) -> bool {
    x.wrapping_sub(a) < b.wrapping_sub(a)
}
