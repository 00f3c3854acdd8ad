//! The TCP engine: RFC 9293 core state machine, retransmission with RTO,
//! out-of-order reassembly, and Reno congestion control.
//!
//! A [`Tcb`] is owned and mutated by exactly one logical thread (the service
//! loop). All operations are synchronous and non-blocking; they return the
//! segments to transmit rather than performing I/O.

pub mod reno;
pub mod rtt;
pub mod segment;
pub mod seq;
mod tcb;

pub use reno::{CongestionControl, Reno, INITIAL_SSTHRESH};
pub use rtt::{RttEstimator, RTO_INITIAL, RTO_MAX, RTO_MIN};
pub use segment::TcpSegment;
pub use seq::{seq_between, seq_leq, seq_lt};
pub use tcb::{Tcb, DEFAULT_MSS};

use crate::util::{Micros, MILLIS, SECONDS};
use thiserror::Error;

/// RFC 9293 connection states. LISTEN lives in the service's socket table
/// (a listener spawns a Tcb per incoming SYN), so a Tcb itself is never in
/// LISTEN.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum State {
    Closed,
    SynSent,
    SynReceived,
    Established,
    FinWait1,
    FinWait2,
    CloseWait,
    Closing,
    LastAck,
    TimeWait,
}

impl std::fmt::Display for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Why a connection was torn down.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetReason {
    /// RST in response to our SYN.
    Refused,
    /// RST on an established connection.
    PeerRst,
    /// Retransmission cap exceeded.
    RetransmitLimit,
}

/// Notifications surfaced to the owning application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcpEvent {
    Connected,
    DataReadable,
    PeerClosed,
    Reset(ResetReason),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TcpError {
    #[error("operation invalid in state {0}")]
    InvalidState(State),
}

#[derive(Debug, Clone, Copy)]
pub struct TcpConfig {
    /// MSS we advertise; effective send MSS is min with the peer's.
    pub mss: u32,
    pub send_buf_cap: usize,
    pub recv_buf_cap: usize,
    /// Maximum segment lifetime; TIME_WAIT lasts 2·MSL.
    pub msl: Micros,
    pub delayed_ack: Micros,
    pub nagle: bool,
    /// Consecutive retransmissions of one segment before aborting.
    pub max_retransmits: u32,
    /// Lower clamp for the retransmission timeout. The conservative default
    /// suits wide-area paths; a low-latency fabric wants this much smaller
    /// (but it should stay above `delayed_ack`).
    pub rto_min: Micros,
}

impl Default for TcpConfig {
    fn default() -> Self {
        Self {
            mss: DEFAULT_MSS,
            send_buf_cap: 256 * 1024,
            recv_buf_cap: 65535,
            msl: 5 * SECONDS,
            delayed_ack: 40 * MILLIS,
            nagle: true,
            max_retransmits: 8,
            rto_min: rtt::RTO_MIN,
        }
    }
}
