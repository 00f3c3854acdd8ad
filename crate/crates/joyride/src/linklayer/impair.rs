//! Seeded impairment pipeline shared by the memory and tunnel links.

use super::{FrameBuffer, LinkConfig};
use crate::util::{DetRng, Micros};

/// Per-direction impairment stage.
///
/// Decision rule, per sent frame, drawing from one seeded PRNG stream in this
/// exact order:
///
/// 1. `u ~ U[0,1)`; if `u < loss_prob` the frame is dropped and no further
///    draws are consumed for it.
/// 2. `u ~ U[0,1)`; if `u < dup_prob` the frame is emitted twice.
/// 3. `u ~ U[0,1)`; if `u < reorder_prob` and no frame is currently held, the
///    frame is held back and released immediately after the next frame that
///    passes the stage, or after `REORDER_HOLD_MAX`, whichever comes first.
/// 4. `u ~ U[0,1)`; delay = clamp(delay_mean + (2u−1)·delay_jitter, ≥ 0).
///
/// Each draw is `DetRng::next_f64` (ChaCha8 seeded with the direction seed),
/// so the whole decision stream is a deterministic function of the seed and
/// the number of frames sent; the hold expiry consumes no draws. Delivery is
/// FIFO: delay affects when the queue head becomes available, never ordering.
#[derive(Debug)]
pub struct Impairer {
    cfg: LinkConfig,
    rng: DetRng,
    held: Option<(FrameBuffer, bool, Micros, Micros)>, // (frame, duplicate, delay, held_at)
}

/// Longest a reordered frame stays held when no follow-up traffic releases
/// it. Without this bound a held frame on an otherwise idle direction would
/// sit until the sender's retransmission timeout pushed something through,
/// poisoning the RTT estimate with multi-second samples.
pub const REORDER_HOLD_MAX: Micros = 5_000;

impl Impairer {
    pub fn new(cfg: LinkConfig, seed: u64) -> Self {
        Self {
            cfg,
            rng: DetRng::seed_from_u64(seed),
            held: None,
        }
    }

    /// Runs one frame through the stage. Returns the frames to enqueue, each
    /// with the delay to add to its availability time.
    pub fn process(&mut self, frame: FrameBuffer, now: Micros) -> Vec<(FrameBuffer, Micros)> {
        if self.rng.next_f64() < self.cfg.loss_prob {
            return Vec::new();
        }
        let dup = self.rng.next_f64() < self.cfg.dup_prob;
        let reorder = self.rng.next_f64() < self.cfg.reorder_prob;
        let delay = self.draw_delay();

        if reorder && self.held.is_none() {
            self.held = Some((frame, dup, delay, now));
            return Vec::new();
        }

        let mut out = Vec::with_capacity(4);
        if dup {
            out.push((frame.clone(), delay));
        }
        out.push((frame, delay));
        if let Some((h, hdup, hdelay, _)) = self.held.take() {
            if hdup {
                out.push((h.clone(), hdelay));
            }
            out.push((h, hdelay));
        }
        out
    }

    /// Releases a held frame whose hold has outlived `REORDER_HOLD_MAX`.
    /// Links call this from their periodic poll paths.
    pub fn flush_expired(&mut self, now: Micros) -> Vec<(FrameBuffer, Micros)> {
        match &self.held {
            Some((_, _, _, at)) if now.saturating_sub(*at) >= REORDER_HOLD_MAX => {
                let (h, hdup, hdelay, _) = self.held.take().unwrap();
                let mut out = Vec::with_capacity(2);
                if hdup {
                    out.push((h.clone(), hdelay));
                }
                out.push((h, hdelay));
                out
            }
            _ => Vec::new(),
        }
    }

    fn draw_delay(&mut self) -> Micros {
        let u = self.rng.next_f64();
        let jitter = (2.0 * u - 1.0) * self.cfg.delay_jitter as f64;
        let d = self.cfg.delay_mean as f64 + jitter;
        if d <= 0.0 {
            0
        } else {
            d as Micros
        }
    }
}
