//! Desk-scale realization of a centralized user-space network service.
//!
//! A single poll-mode service owns a link (in-memory pair with configurable
//! impairments, or a UDP tunnel between hosts), runs a complete IPv4/UDP/TCP
//! stack, and serves client applications over shared-memory rings guarded by
//! capability tokens. Clients use a POSIX-style socket API that can fall back
//! to the kernel stack when the service is unavailable.

pub mod bench;
pub mod ipc;
pub mod linklayer;
pub mod netcore;
pub mod service;
pub mod sockapi;
pub mod tcp;
pub mod util;
