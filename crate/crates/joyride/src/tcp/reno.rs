//! Congestion control. Reno is the one implemented variant; the trait keeps
//! the window arithmetic swappable.

/// Window arithmetic driven by ACK events. All quantities in bytes.
pub trait CongestionControl: std::fmt::Debug + Send {
    fn cwnd(&self) -> u32;
    fn ssthresh(&self) -> u32;
    /// ACK advancing snd_una.
    fn on_ack(&mut self, bytes_acked: u32);
    /// Third duplicate ACK: halve and inflate for the three dups.
    fn on_fast_retransmit(&mut self, flight: u32);
    /// Duplicate ACK while in fast recovery.
    fn on_dup_ack_in_recovery(&mut self);
    /// First ACK past the recovery point: deflate.
    fn on_recovery_exit(&mut self);
    /// Retransmission timeout.
    fn on_timeout(&mut self, flight: u32);
}

pub const INITIAL_SSTHRESH: u32 = 65535;

/// Reno: slow start (cwnd += mss per full ACK while cwnd < ssthresh), then
/// congestion avoidance (cwnd += mss²/cwnd per ACK); fast retransmit sets
/// ssthresh = max(flight/2, 2·mss) and cwnd = ssthresh + 3·mss; timeout sets
/// the same ssthresh and cwnd = 1·mss.
#[derive(Debug, Clone)]
pub struct Reno {
    mss: u32,
    cwnd: u32,
    ssthresh: u32,
}

impl Reno {
    /// Initial window is 2·mss.
    pub fn new(mss: u32) -> Self {
        Self {
            mss,
            cwnd: 2 * mss,
            ssthresh: INITIAL_SSTHRESH,
        }
    }
}

impl CongestionControl for Reno {
    fn cwnd(&self) -> u32 {
        self.cwnd
    }

    fn ssthresh(&self) -> u32 {
        self.ssthresh
    }

    fn on_ack(&mut self, _bytes_acked: u32) {
        if self.cwnd < self.ssthresh {
            self.cwnd += self.mss;
        } else {
            self.cwnd += ((self.mss * self.mss) / self.cwnd).max(1);
        }
    }

    fn on_fast_retransmit(&mut self, flight: u32) {
        self.ssthresh = (flight / 2).max(2 * self.mss);
        self.cwnd = self.ssthresh + 3 * self.mss;
    }

    fn on_dup_ack_in_recovery(&mut self) {
        self.cwnd += self.mss;
    }

    fn on_recovery_exit(&mut self) {
        self.cwnd = self.ssthresh;
    }

    fn on_timeout(&mut self, flight: u32) {
        self.ssthresh = (flight / 2).max(2 * self.mss);
        self.cwnd = self.mss;
    }
}
