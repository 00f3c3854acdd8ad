//! In-memory paired link: the desk-scale stand-in for the NIC.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use super::{check_frame_size, FrameBuffer, Impairer, Link, LinkConfig, LinkError};
use crate::util::Micros;

type Queue = Arc<Mutex<VecDeque<(Micros, FrameBuffer)>>>; // (available_at, frame)

/// One end of an in-memory link pair.
pub struct MemLink {
    cfg: LinkConfig,
    impairer: Impairer,
    tx: Queue,
    rx: Queue,
}

/// Creates two connected endpoints. Impairments are applied independently per
/// direction: the first endpoint's outgoing stream uses `config.seed`, the
/// second's uses `config.seed + 1`.
pub fn create_mem_link_pair(config: LinkConfig) -> Result<(MemLink, MemLink), LinkError> {
    config.validate()?;
    let ab: Queue = Arc::new(Mutex::new(VecDeque::new()));
    let ba: Queue = Arc::new(Mutex::new(VecDeque::new()));
    let a = MemLink {
        cfg: config,
        impairer: Impairer::new(config, config.seed),
        tx: ab.clone(),
        rx: ba.clone(),
    };
    let b = MemLink {
        cfg: config,
        impairer: Impairer::new(config, config.seed.wrapping_add(1)),
        tx: ba,
        rx: ab,
    };
    Ok((a, b))
}

impl Link for MemLink {
    fn mtu(&self) -> usize {
        self.cfg.mtu
    }

    fn send(&mut self, frame: FrameBuffer, now: Micros) -> Result<(), LinkError> {
        check_frame_size(frame.len(), self.cfg.mtu)?;
        let out = self.impairer.process(frame, now);
        if !out.is_empty() {
            let mut q = self.tx.lock().unwrap();
            for (f, delay) in out {
                q.push_back((now.saturating_add(delay), f));
            }
        }
        Ok(())
    }

    fn poll_recv(&mut self, now: Micros, max: usize) -> Vec<FrameBuffer> {
        let expired = self.impairer.flush_expired(now);
        if !expired.is_empty() {
            let mut q = self.tx.lock().unwrap();
            for (f, delay) in expired {
                q.push_back((now.saturating_add(delay), f));
            }
        }
        let mut q = self.rx.lock().unwrap();
        let mut out = Vec::new();
        // FIFO with head availability: delay never reorders.
        while out.len() < max {
            match q.front() {
                Some((at, _)) if *at <= now => {
                    out.push(q.pop_front().unwrap().1);
                }
                _ => break,
            }
        }
        out
    }
}
