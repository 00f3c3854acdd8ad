//! Small shared utilities: the microsecond clock type, deterministic RNG,
//! entropy, and constant-time comparison.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Monotonic time in microseconds. All stack state machines take explicit
/// timestamps so the whole system can run on a virtual clock in tests.
pub type Micros = u64;

pub const MILLIS: Micros = 1_000;
pub const SECONDS: Micros = 1_000_000;

/// Deterministic RNG used wherever replayability matters (link impairments,
/// ISS selection, ephemeral ports). Seeded ChaCha so the same seed always
/// yields the same decision stream.
#[derive(Debug, Clone)]
pub struct DetRng(ChaCha8Rng);

impl DetRng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self(ChaCha8Rng::from_seed(seed))
    }

    pub fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [0, n). Modulo bias is irrelevant at the ranges used.
    pub fn below(&mut self, n: u64) -> u64 {
        self.0.next_u64() % n.max(1)
    }

    pub fn fill_bytes(&mut self, buf: &mut [u8]) {
        self.0.fill_bytes(buf);
    }
}

/// Entropy from the OS for production-mode seeds and capability tokens.
pub fn os_entropy() -> [u8; 32] {
    use std::io::Read;
    let mut buf = [0u8; 32];
    let mut f = std::fs::File::open("/dev/urandom").expect("open /dev/urandom");
    f.read_exact(&mut buf).expect("read /dev/urandom");
    buf
}

/// Wall-clock microseconds since the Unix epoch; the production `now` source.
pub fn now_micros() -> Micros {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .expect("clock before epoch")
        .as_micros() as Micros
}

/// Structured log line: `ts level event key=value ...` on stderr.
/// Set JOYRIDE_LOG=off to silence.
pub fn log(level: &str, event: &str, kvs: &[(&str, String)]) {
    if std::env::var("JOYRIDE_LOG").as_deref() == Ok("off") {
        return;
    }
    let mut line = format!("{} {} {}", now_micros(), level, event);
    for (k, v) in kvs {
        line.push(' ');
        line.push_str(k);
        line.push('=');
        line.push_str(v);
    }
    eprintln!("{line}");
}

/// Constant-time equality for secret tokens.
pub fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut acc = 0u8;
    for (x, y) in a.iter().zip(b.iter()) {
        acc |= x ^ y;
    }
    acc == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_rng_is_replayable() {
        let mut a = DetRng::seed_from_u64(42);
        let mut b = DetRng::seed_from_u64(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn next_f64_in_unit_interval() {
        let mut r = DetRng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = r.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn ct_eq_basic() {
        assert!(ct_eq(b"abcd", b"abcd"));
        assert!(!ct_eq(b"abcd", b"abce"));
        assert!(!ct_eq(b"abc", b"abcd"));
    }
}
