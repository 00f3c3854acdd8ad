//! Per-socket capability tokens. A client proves ownership of a socket by
//! presenting the exact (client id, socket id, token) triple; the registry is
//! owned by the service loop alone.

use std::collections::HashMap;

use crate::util::{ct_eq, os_entropy};

pub const TOKEN_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapabilityToken(pub [u8; TOKEN_LEN]);

impl CapabilityToken {
    pub fn random() -> CapabilityToken {
        let entropy = os_entropy();
        let mut t = [0u8; TOKEN_LEN];
        t.copy_from_slice(&entropy[..TOKEN_LEN]);
        CapabilityToken(t)
    }

    pub fn zero() -> CapabilityToken {
        CapabilityToken([0u8; TOKEN_LEN])
    }

    /// Constant-time equality.
    pub fn matches(&self, other: &[u8; TOKEN_LEN]) -> bool {
        ct_eq(&self.0, other)
    }
}

impl std::fmt::Display for CapabilityToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", hex::encode(self.0))
    }
}

#[derive(Debug, Default)]
pub struct CapabilityRegistry {
    by_socket: HashMap<(u32, u32), CapabilityToken>,
}

impl CapabilityRegistry {
    pub fn new() -> CapabilityRegistry {
        CapabilityRegistry::default()
    }

    /// Issues a fresh token for (client, socket), invalidating any prior one.
    pub fn issue(&mut self, client_id: u32, socket_id: u32) -> CapabilityToken {
        let token = CapabilityToken::random();
        self.by_socket.insert((client_id, socket_id), token);
        token
    }

    /// Authorized iff the exact triple is registered; token comparison is
    /// constant-time. Rejection is a result, not an error.
    pub fn verify(&self, client_id: u32, socket_id: u32, token: &[u8; TOKEN_LEN]) -> bool {
        match self.by_socket.get(&(client_id, socket_id)) {
            Some(registered) => registered.matches(token),
            None => {
                // Burn comparable time for unknown sockets.
                let dummy = CapabilityToken::zero();
                dummy.matches(token) && false
            }
        }
    }

    pub fn revoke(&mut self, client_id: u32, socket_id: u32) {
        self.by_socket.remove(&(client_id, socket_id));
    }

    /// Drops every capability a client holds (session teardown).
    pub fn revoke_client(&mut self, client_id: u32) {
        self.by_socket.retain(|&(c, _), _| c != client_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn issued_tokens_are_distinct() {
        let mut reg = CapabilityRegistry::new();
        let a = reg.issue(1, 1);
        let b = reg.issue(1, 2);
        assert_ne!(a, b);
        assert_ne!(a, CapabilityToken::zero());
    }

    #[test]
    fn verify_accepts_only_exact_triple() {
        let mut reg = CapabilityRegistry::new();
        let t = reg.issue(7, 42);
        assert!(reg.verify(7, 42, &t.0));
        assert!(!reg.verify(7, 43, &t.0), "wrong socket id");
        assert!(!reg.verify(8, 42, &t.0), "wrong client id");
        assert!(!reg.verify(7, 42, &[0u8; TOKEN_LEN]), "wrong token");
        let mut flipped = t.0;
        flipped[15] ^= 1;
        assert!(!reg.verify(7, 42, &flipped));
    }

    #[test]
    fn reissue_invalidates_previous_token() {
        let mut reg = CapabilityRegistry::new();
        let old = reg.issue(1, 1);
        let new = reg.issue(1, 1);
        assert!(!reg.verify(1, 1, &old.0));
        assert!(reg.verify(1, 1, &new.0));
    }

    #[test]
    fn cross_client_tokens_never_authorize() {
        let mut reg = CapabilityRegistry::new();
        let ta = reg.issue(1, 100);
        let tb = reg.issue(2, 200);
        // A's token on B's identity and vice versa.
        assert!(!reg.verify(2, 200, &ta.0));
        assert!(!reg.verify(1, 100, &tb.0));
        assert!(!reg.verify(2, 100, &ta.0));
        assert!(!reg.verify(1, 200, &tb.0));
    }

    #[test]
    fn revoke_client_sweeps_all_sockets() {
        let mut reg = CapabilityRegistry::new();
        let t1 = reg.issue(5, 1);
        let t2 = reg.issue(5, 2);
        let other = reg.issue(6, 1);
        reg.revoke_client(5);
        assert!(!reg.verify(5, 1, &t1.0));
        assert!(!reg.verify(5, 2, &t2.0));
        assert!(reg.verify(6, 1, &other.0));
    }
}
