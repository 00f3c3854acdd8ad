//! UDP-tunnel link: one frame per datagram, 8-byte header, for running two
//! service instances across real hosts.

use std::collections::VecDeque;
use std::io::ErrorKind;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};

use super::{check_frame_size, FrameBuffer, Impairer, Link, LinkConfig, LinkError};
use crate::util::Micros;

/// Tunnel header magic, network byte order on the wire.
pub const TUNNEL_MAGIC: u16 = 0x4A59;
pub const TUNNEL_VERSION: u8 = 0x01;
pub const TUNNEL_HEADER_LEN: usize = 8;

/// Encapsulating link over a UDP socket. The tunnel applies no impairments of
/// its own unless the config asks for them (the real network supplies its
/// own); configured impairments are layered on the send side.
pub struct UdpTunnelLink {
    cfg: LinkConfig,
    sock: UdpSocket,
    peer: SocketAddr,
    impairer: Impairer,
    // Frames held back by a configured delay, flushed as their time comes.
    staged: VecDeque<(Micros, FrameBuffer)>,
}

pub fn create_udp_tunnel_link<A: ToSocketAddrs, B: ToSocketAddrs>(
    local: A,
    peer: B,
    config: LinkConfig,
) -> Result<UdpTunnelLink, LinkError> {
    config.validate()?;
    let sock = UdpSocket::bind(local).map_err(|e| LinkError::Resource(format!("bind: {e}")))?;
    sock.set_nonblocking(true)
        .map_err(|e| LinkError::Resource(format!("nonblocking: {e}")))?;
    let peer = peer
        .to_socket_addrs()
        .map_err(|e| LinkError::Resource(format!("peer addr: {e}")))?
        .next()
        .ok_or_else(|| LinkError::Resource("peer addr resolves to nothing".into()))?;
    Ok(UdpTunnelLink {
        cfg: config,
        sock,
        peer,
        impairer: Impairer::new(config, config.seed),
        staged: VecDeque::new(),
    })
}

impl UdpTunnelLink {
    pub fn local_addr(&self) -> SocketAddr {
        self.sock.local_addr().expect("bound socket has an address")
    }

    fn encapsulate(frame: &FrameBuffer) -> Vec<u8> {
        let mut dgram = Vec::with_capacity(TUNNEL_HEADER_LEN + frame.len());
        dgram.extend_from_slice(&TUNNEL_MAGIC.to_be_bytes());
        dgram.push(TUNNEL_VERSION);
        dgram.push(0x00); // flags
        dgram.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        dgram.extend_from_slice(frame.bytes());
        dgram
    }

    fn decapsulate(dgram: &[u8]) -> Option<FrameBuffer> {
        if dgram.len() < TUNNEL_HEADER_LEN {
            return None;
        }
        if u16::from_be_bytes([dgram[0], dgram[1]]) != TUNNEL_MAGIC || dgram[2] != TUNNEL_VERSION {
            return None;
        }
        let len = u32::from_be_bytes([dgram[4], dgram[5], dgram[6], dgram[7]]) as usize;
        if len == 0 || dgram.len() != TUNNEL_HEADER_LEN + len {
            return None;
        }
        Some(FrameBuffer::new(dgram[TUNNEL_HEADER_LEN..].to_vec()))
    }

    fn flush_staged(&mut self, now: Micros) {
        while let Some((at, _)) = self.staged.front() {
            if *at > now {
                break;
            }
            let (_, frame) = self.staged.pop_front().unwrap();
            // Peer unreachable is not an error: datagram semantics.
            let _ = self.sock.send_to(&Self::encapsulate(&frame), self.peer);
        }
    }
}

impl Link for UdpTunnelLink {
    fn mtu(&self) -> usize {
        self.cfg.mtu
    }

    fn send(&mut self, frame: FrameBuffer, now: Micros) -> Result<(), LinkError> {
        check_frame_size(frame.len(), self.cfg.mtu)?;
        for (f, delay) in self.impairer.process(frame, now) {
            self.staged.push_back((now.saturating_add(delay), f));
        }
        self.flush_staged(now);
        Ok(())
    }

    fn poll_recv(&mut self, now: Micros, max: usize) -> Vec<FrameBuffer> {
        for (f, delay) in self.impairer.flush_expired(now) {
            self.staged.push_back((now.saturating_add(delay), f));
        }
        self.flush_staged(now);
        let mut out = Vec::new();
        let mut buf = vec![0u8; TUNNEL_HEADER_LEN + self.cfg.mtu + 64];
        while out.len() < max {
            match self.sock.recv_from(&mut buf) {
                Ok((n, _from)) => {
                    if let Some(frame) = Self::decapsulate(&buf[..n]) {
                        if frame.len() <= self.cfg.mtu {
                            out.push(frame);
                        }
                    }
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                Err(_) => break,
            }
        }
        out
    }
}
