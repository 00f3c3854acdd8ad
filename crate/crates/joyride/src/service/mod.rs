//! The centralized network service: a single poll-mode loop that owns the
//! link, runs the IPv4/TCP/UDP machinery, demultiplexes flows to client
//! rings, and enforces capabilities. All state belongs to one logical
//! thread; clients interact only through rings, control frames, and
//! doorbells.

mod conduit;
mod daemon;
mod runner;

pub use conduit::{Conduit, Frame, InProcConduit, InProcPort, UdsConduit};
pub use daemon::{build_link, run_daemon, DaemonConfig, LinkSpec};
pub use runner::ServiceRunner;

use std::collections::{HashMap, VecDeque};
use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use crate::ipc::control::{opt, ready};
use crate::ipc::{
    errno, CapabilityRegistry, ControlMessage, Doorbell, EventBody, MsgType, RegionLayout,
    RingQueue, SharedRegion,
};
use crate::linklayer::{FrameBuffer, Link};
use crate::netcore::arp::{ArpCache, ArpResolution};
use crate::netcore::ether::{EthFrame, MacAddr, ETHERTYPE_ARP, ETHERTYPE_IPV4, ETH_HEADER_LEN};
use crate::netcore::icmp::{icmp_dest_unreachable, icmp_echo_input, CODE_PORT_UNREACHABLE};
use crate::netcore::ipv4::{ipv4_fragment, Ipv4Packet, IPPROTO_ICMP, IPPROTO_TCP, IPPROTO_UDP};
use crate::netcore::reasm::{ReasmResult, ReassemblyTable, DEFAULT_MAX_BUFFERS};
use crate::netcore::udp::{udp_decode, udp_encode};
use crate::netcore::{FlowKey, Proto};
use crate::tcp::{ResetReason, Tcb, TcpConfig, TcpEvent, TcpSegment};
use crate::util::{DetRng, Micros};

pub const UDP_FRAME_HEADER_LEN: usize = 12;
pub const PROTOCOL_VERSION: u32 = 1;
const DEFAULT_BACKLOG: usize = 128;
const MAX_CONTROL_PER_ITER: usize = 64;
/// Minimum spacing between repeated ARP queries for the same destination.
const ARP_RETRY: Micros = 200_000;
/// Packets queued behind an unresolved destination before the oldest drops.
const ARP_PENDING_CAP: usize = 32;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub ip: Ipv4Addr,
    pub mac: MacAddr,
    /// Ephemeral port range, inclusive; must lie within (1024, 65536).
    pub ephemeral_range: (u16, u16),
    pub max_clients: u32,
    pub max_sockets_per_client: u32,
    pub ring_capacity: u32,
    pub tick_us: u64,
    pub seed: u64,
    pub tcp: TcpConfig,
}

impl ServiceConfig {
    pub fn new(ip: Ipv4Addr, mac: MacAddr) -> ServiceConfig {
        ServiceConfig {
            ip,
            mac,
            ephemeral_range: (49152, 65535),
            max_clients: 64,
            max_sockets_per_client: 64,
            ring_capacity: RegionLayout::DEFAULT_RING_CAPACITY,
            tick_us: 100,
            seed: 0,
            tcp: TcpConfig {
                // The service fronts a desk-scale link with sub-millisecond
                // round trips; the wide-area 200 ms floor would make every
                // retransmission timeout catastrophic. Kept above the 40 ms
                // delayed-ACK timer to avoid spurious retransmits.
                rto_min: 50 * crate::util::MILLIS,
                ..TcpConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        let (lo, hi) = self.ephemeral_range;
        if lo <= 1024 || lo > hi {
            return Err("ephemeral range must lie within (1024, 65536)");
        }
        if self.tick_us == 0 {
            return Err("tick interval must be positive");
        }
        if !self.ring_capacity.is_power_of_two() {
            return Err("ring capacity must be a power of two");
        }
        Ok(())
    }
}

/// Where a session's shared region comes from.
enum RegionSpec {
    /// In-process: the region is heap memory, handed over via this cell.
    Heap(Arc<Mutex<Option<SharedRegion>>>),
    /// Cross-process: a file at `<base>.region.<client id>`.
    File(PathBuf),
}

struct ClientSession {
    conduit: Box<dyn Conduit>,
    doorbell: Doorbell,
    region_spec: RegionSpec,
    region: Option<SharedRegion>,
    free_slots: Vec<u32>,
    hello_done: bool,
    dead: bool,
    /// Set when anything happened for this client this iteration.
    ring_bell: bool,
}

enum SockState {
    TcpIdle,
    TcpListener {
        backlog: VecDeque<u32>,
        backlog_max: usize,
        pending: Vec<u32>,
    },
    TcpConn(Box<Tcb>),
    UdpIdle,
    UdpBound,
}

struct SockRec {
    id: u32,
    client: u32,
    slot: u32,
    proto: Proto,
    state: SockState,
    local_port: u16,
    remote: Option<(Ipv4Addr, u16)>,
    tx: RingQueue,
    rx: RingQueue,
    interest: u32,
    last_ready: u32,
    err: Option<u32>,
    err_reported: bool,
    connected_reported: bool,
    closed_by_client: bool,
    /// Close arrived while the tx ring still held data: send the FIN once
    /// the ring has fully drained into the TCB.
    fin_wanted: bool,
    /// For a handshaking child: the listener that will accept it.
    accept_parent: Option<u32>,
}

pub struct Service {
    cfg: ServiceConfig,
    link: Box<dyn Link>,
    arp: ArpCache,
    reasm: ReassemblyTable,
    clients: HashMap<u32, ClientSession>,
    socks: HashMap<u32, SockRec>,
    by_flow: HashMap<FlowKey, u32>,
    caps: CapabilityRegistry,
    rng: DetRng,
    next_client: u32,
    next_sock: u32,
    ip_ident: u16,
    /// Unresolved destination -> (last query time, queued packets).
    pending_arp: HashMap<Ipv4Addr, (Micros, Vec<Ipv4Packet>)>,
    /// Packets addressed to our own IP loop straight back here.
    loopback: VecDeque<Ipv4Packet>,
    /// `link.mtu()` minus the Ethernet header.
    ip_mtu: usize,
    effective_mss: u32,
}

impl Service {
    pub fn new(cfg: ServiceConfig, link: Box<dyn Link>) -> Service {
        cfg.validate().expect("invalid service config");
        let ip_mtu = link.mtu() - ETH_HEADER_LEN;
        let mut tcp = cfg.tcp;
        tcp.mss = tcp.mss.min((ip_mtu - 40) as u32);
        let effective_mss = tcp.mss;
        let mut cfg = cfg;
        cfg.tcp = tcp;
        let rng = DetRng::seed_from_u64(cfg.seed ^ 0x5E51_1CE0);
        Service {
            cfg,
            link,
            arp: ArpCache::new(),
            reasm: ReassemblyTable::new(DEFAULT_MAX_BUFFERS),
            clients: HashMap::new(),
            socks: HashMap::new(),
            by_flow: HashMap::new(),
            caps: CapabilityRegistry::new(),
            rng,
            next_client: 1,
            next_sock: 1,
            ip_ident: 1,
            pending_arp: HashMap::new(),
            loopback: VecDeque::new(),
            ip_mtu,
            effective_mss,
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn mss(&self) -> u32 {
        self.effective_mss
    }

    /// Attaches an in-process client, returning its port. The session comes
    /// alive once the client sends HELLO.
    pub fn attach_inproc(&mut self) -> InProcPort {
        let doorbell = Doorbell::new();
        let (conduit, port) = InProcConduit::pair(doorbell.clone());
        let spec = RegionSpec::Heap(port.region.clone());
        self.add_session(Box::new(conduit), doorbell, spec);
        port
    }

    /// Attaches a cross-process client over a Unix stream; its region file
    /// will be created at `<region_base>.region.<client id>`.
    pub fn attach_uds(&mut self, stream: std::os::unix::net::UnixStream, region_base: PathBuf) {
        match UdsConduit::new(stream) {
            Ok(conduit) => {
                self.add_session(Box::new(conduit), Doorbell::new(), RegionSpec::File(region_base));
            }
            Err(e) => crate::util::log("warn", "uds_attach_failed", &[("err", e.to_string())]),
        }
    }

    fn add_session(&mut self, conduit: Box<dyn Conduit>, doorbell: Doorbell, spec: RegionSpec) {
        let id = self.next_client;
        self.next_client += 1;
        self.clients.insert(
            id,
            ClientSession {
                conduit,
                doorbell,
                region_spec: spec,
                region: None,
                free_slots: Vec::new(),
                hello_done: false,
                dead: false,
                ring_bell: false,
            },
        );
    }

    // ---- the poll-mode loop body ---------------------------------------

    /// One pass: link rx → demux → rings; client control + tx rings → link
    /// tx; timers; readiness events. Returns the count of frames and
    /// messages processed (0 ⇒ the caller may sleep until the next event).
    pub fn iteration(&mut self, now: Micros) -> usize {
        let mut work = 0usize;

        // (1) inbound frames.
        for frame in self.link.poll_recv(now, 256) {
            work += 1;
            self.handle_frame(frame.bytes().to_vec(), now);
        }
        while let Some(pkt) = self.loopback.pop_front() {
            work += 1;
            self.dispatch_ip(pkt, now);
        }

        // (2) client control frames and tx rings.
        work += self.pump_clients(now);

        // (3) timers.
        work += self.run_timers(now);

        // Deliver any TCP receive data to rings and evaluate readiness.
        self.fill_rx_rings(now);
        self.evaluate_readiness();
        self.reclaim(now);
        self.ring_doorbells();
        work
    }

    // ---- inbound path ---------------------------------------------------

    fn handle_frame(&mut self, bytes: Vec<u8>, now: Micros) {
        let Ok(frame) = EthFrame::decode(&bytes) else {
            return;
        };
        if frame.dst != self.cfg.mac && !frame.dst.is_broadcast() {
            return;
        }
        match frame.ethertype {
            ETHERTYPE_ARP => {
                match self.arp.input(&frame.payload, self.cfg.ip, self.cfg.mac, now) {
                    Ok(reply) => {
                        if let Some(reply) = reply {
                            let out = EthFrame {
                                dst: reply.target_mac,
                                src: self.cfg.mac,
                                ethertype: ETHERTYPE_ARP,
                                payload: reply.encode(),
                            };
                            let _ = self.link.send(FrameBuffer::new(out.encode()), now);
                        }
                        self.flush_pending_arp(now);
                    }
                    Err(_) => {}
                }
            }
            ETHERTYPE_IPV4 => {
                let Ok(pkt) = Ipv4Packet::decode(&frame.payload) else {
                    return;
                };
                if pkt.dst != self.cfg.ip {
                    return;
                }
                match self.reasm.input(pkt, now) {
                    Ok(ReasmResult::Complete(full)) => self.dispatch_ip(full, now),
                    Ok(ReasmResult::Pending) | Err(_) => {}
                }
            }
            _ => {}
        }
    }

    fn dispatch_ip(&mut self, pkt: Ipv4Packet, now: Micros) {
        match pkt.protocol {
            IPPROTO_ICMP => {
                if let Some(reply) = icmp_echo_input(&pkt, self.cfg.ip) {
                    self.send_ip(reply, now);
                }
            }
            IPPROTO_TCP => {
                let Ok(seg) = TcpSegment::decode(&pkt.payload, pkt.src, pkt.dst) else {
                    return;
                };
                self.handle_tcp(pkt.src, seg, now);
            }
            IPPROTO_UDP => {
                let Ok((src_port, dst_port, payload)) = udp_decode(&pkt.payload, pkt.src, pkt.dst)
                else {
                    return;
                };
                self.handle_udp(pkt, src_port, dst_port, payload, now);
            }
            _ => {}
        }
    }

    fn handle_tcp(&mut self, src_ip: Ipv4Addr, seg: TcpSegment, now: Micros) {
        let conn_key = FlowKey::connection(
            Proto::Tcp,
            self.cfg.ip,
            seg.dst_port,
            src_ip,
            seg.src_port,
        );
        if let Some(&sid) = self.by_flow.get(&conn_key) {
            self.tcp_input(sid, seg, now);
            return;
        }
        let listen_key = FlowKey::listener(Proto::Tcp, self.cfg.ip, seg.dst_port);
        if let Some(&lid) = self.by_flow.get(&listen_key) {
            if seg.syn && !seg.ack_flag {
                self.spawn_child(lid, src_ip, seg, now);
                return;
            }
        }
        // No socket: RST per the CLOSED-state rules, unless it's an RST.
        if seg.rst {
            return;
        }
        let rst = if seg.ack_flag {
            TcpSegment {
                src_port: seg.dst_port,
                dst_port: seg.src_port,
                seq: seg.ack,
                rst: true,
                ..Default::default()
            }
        } else {
            TcpSegment {
                src_port: seg.dst_port,
                dst_port: seg.src_port,
                seq: 0,
                ack: seg.seq.wrapping_add(seg.seq_len()),
                rst: true,
                ack_flag: true,
                ..Default::default()
            }
        };
        self.send_segment(src_ip, rst, now);
    }

    fn tcp_input(&mut self, sid: u32, seg: TcpSegment, now: Micros) {
        let Some(rec) = self.socks.get_mut(&sid) else {
            return;
        };
        let remote_ip = rec.remote.map(|r| r.0).unwrap_or(self.cfg.ip);
        let out = if let SockState::TcpConn(tcb) = &mut rec.state {
            tcb.input(seg, now)
        } else {
            return;
        };
        for s in out {
            self.send_segment(remote_ip, s, now);
        }
        self.drain_tcb_events(sid, now);
    }

    fn spawn_child(&mut self, lid: u32, src_ip: Ipv4Addr, syn: TcpSegment, now: Micros) {
        let Some(listener) = self.socks.get(&lid) else {
            return;
        };
        let client = listener.client;
        let local_port = listener.local_port;
        let SockState::TcpListener {
            backlog,
            backlog_max,
            pending,
        } = &listener.state
        else {
            return;
        };
        if backlog.len() + pending.len() >= 2 * *backlog_max {
            return; // overloaded: drop the SYN, the peer will retransmit
        }
        let Some(slot) = self.alloc_slot(client) else {
            return;
        };
        let iss = self.rng.next_u32();
        let (tcb, out) = Tcb::accept_syn(
            (self.cfg.ip, local_port),
            (src_ip, syn.src_port),
            &syn,
            self.cfg.tcp,
            iss,
            now,
        );
        let Some((tx, rx)) = self.slot_rings(client, slot) else {
            return;
        };
        let sid = self.next_sock;
        self.next_sock += 1;
        let remote = (src_ip, syn.src_port);
        let key = FlowKey::connection(Proto::Tcp, self.cfg.ip, local_port, src_ip, syn.src_port);
        self.by_flow.insert(key, sid);
        self.socks.insert(
            sid,
            SockRec {
                id: sid,
                client,
                slot,
                proto: Proto::Tcp,
                state: SockState::TcpConn(Box::new(tcb)),
                local_port,
                remote: Some(remote),
                tx,
                rx,
                interest: ready::READABLE | ready::WRITABLE | ready::ERROR | ready::HUP,
                last_ready: 0,
                err: None,
                err_reported: false,
                connected_reported: false,
                closed_by_client: false,
                fin_wanted: false,
                accept_parent: Some(lid),
            },
        );
        if let Some(SockState::TcpListener { pending, .. }) =
            self.socks.get_mut(&lid).map(|l| &mut l.state)
        {
            pending.push(sid);
        }
        for s in out {
            self.send_segment(src_ip, s, now);
        }
    }

    fn handle_udp(
        &mut self,
        pkt: Ipv4Packet,
        src_port: u16,
        dst_port: u16,
        payload: Vec<u8>,
        now: Micros,
    ) {
        let key = FlowKey::listener(Proto::Udp, self.cfg.ip, dst_port);
        let Some(&sid) = self.by_flow.get(&key) else {
            let reply = icmp_dest_unreachable(&pkt, self.cfg.ip, CODE_PORT_UNREACHABLE);
            self.send_ip(reply, now);
            return;
        };
        let Some(rec) = self.socks.get_mut(&sid) else {
            return;
        };
        // 12-byte datagram framing: src addr, src port, reserved, length.
        let total = UDP_FRAME_HEADER_LEN + payload.len();
        if rec.rx.free_space() < total {
            return; // ring full: datagram semantics allow the drop
        }
        let mut buf = Vec::with_capacity(total);
        buf.extend_from_slice(&pkt.src.octets());
        buf.extend_from_slice(&src_port.to_le_bytes());
        buf.extend_from_slice(&[0, 0]);
        buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        buf.extend_from_slice(&payload);
        rec.rx.produce(&buf);
        if let Some(sess) = self.clients.get_mut(&rec.client) {
            sess.ring_bell = true;
        }
    }

    // ---- client pump ----------------------------------------------------

    fn pump_clients(&mut self, now: Micros) -> usize {
        let mut work = 0usize;
        let ids: Vec<u32> = self.clients.keys().copied().collect();
        for cid in ids {
            // Control frames.
            for _ in 0..MAX_CONTROL_PER_ITER {
                let sess = match self.clients.get_mut(&cid) {
                    Some(s) if !s.dead => s,
                    _ => break,
                };
                match sess.conduit.try_recv() {
                    Ok(Some(frame)) => {
                        work += 1;
                        match ControlMessage::decode(&frame) {
                            Ok(msg) => self.handle_control(cid, msg, now),
                            Err(_) => {
                                // Protocol violation: the session dies.
                                self.kill_session(cid, now);
                            }
                        }
                    }
                    Ok(None) => break,
                    Err(()) => {
                        // The client went away (process exit, conduit EOF):
                        // close its sockets in order, like a kernel would.
                        self.close_session(cid, now);
                        break;
                    }
                }
            }
        }
        // Drain tx rings.
        let sids: Vec<u32> = self.socks.keys().copied().collect();
        for sid in sids {
            work += self.drain_tx(sid, now);
        }
        work
    }

    fn drain_tx(&mut self, sid: u32, now: Micros) -> usize {
        let Some(rec) = self.socks.get_mut(&sid) else {
            return 0;
        };
        let mut work = 0usize;
        match &mut rec.state {
            SockState::TcpConn(tcb) => {
                let mut out = Vec::new();
                loop {
                    let space = tcb.send_space();
                    if space == 0 || rec.tx.is_empty() {
                        break;
                    }
                    let chunk = rec.tx.peek(space.min(64 * 1024));
                    if chunk.is_empty() {
                        break;
                    }
                    let n = tcb.write(&chunk);
                    if n == 0 {
                        break;
                    }
                    rec.tx.advance(n);
                    work += 1;
                }
                if rec.fin_wanted && rec.tx.is_empty() {
                    // Deferred close: the last buffered bytes are in.
                    rec.fin_wanted = false;
                    match tcb.close(now) {
                        Ok(segs) => out.extend(segs),
                        Err(_) => out.extend(tcb.abort()),
                    }
                }
                out.extend(tcb.emit(now));
                let remote_ip = rec.remote.map(|r| r.0).unwrap_or(self.cfg.ip);
                for s in out {
                    self.send_segment(remote_ip, s, now);
                }
                self.drain_tcb_events(sid, now);
            }
            SockState::UdpBound => {
                let local_port = rec.local_port;
                let mut datagrams = Vec::new();
                loop {
                    let header = rec.tx.peek(UDP_FRAME_HEADER_LEN);
                    if header.len() < UDP_FRAME_HEADER_LEN {
                        break;
                    }
                    let dst = Ipv4Addr::new(header[0], header[1], header[2], header[3]);
                    let port = u16::from_le_bytes([header[4], header[5]]);
                    let len = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
                    if rec.tx.len() < UDP_FRAME_HEADER_LEN + len {
                        break; // partial datagram still being written
                    }
                    rec.tx.advance(UDP_FRAME_HEADER_LEN);
                    let payload = rec.tx.consume(len);
                    datagrams.push((dst, port, payload));
                    work += 1;
                }
                for (dst, port, payload) in datagrams {
                    if let Ok(bytes) = udp_encode(local_port, port, &payload, self.cfg.ip, dst) {
                        let pkt = Ipv4Packet {
                            identification: self.next_ident(),
                            ..Ipv4Packet::new(self.cfg.ip, dst, IPPROTO_UDP, bytes)
                        };
                        self.send_ip(pkt, now);
                    }
                }
            }
            _ => {}
        }
        work
    }

    // ---- control handling ----------------------------------------------

    fn handle_control(&mut self, cid: u32, msg: ControlMessage, now: Micros) {
        let Some(sess) = self.clients.get_mut(&cid) else {
            return;
        };
        if !sess.hello_done && msg.msg_type != MsgType::Hello {
            self.kill_session(cid, now);
            return;
        }
        // HELLO and SOCKET are pre-capability; everything else must present
        // a valid (client, socket, token) triple.
        let needs_auth = !matches!(msg.msg_type, MsgType::Hello | MsgType::Socket);
        if needs_auth {
            let owner_ok = self
                .socks
                .get(&msg.socket_id)
                .is_some_and(|r| r.client == cid);
            if !owner_ok || !self.caps.verify(cid, msg.socket_id, &msg.token) {
                self.kill_session(cid, now);
                return;
            }
        }
        match msg.msg_type {
            MsgType::Hello => self.ctl_hello(cid, msg),
            MsgType::Socket => self.ctl_socket(cid, msg),
            MsgType::Bind => self.ctl_bind(cid, msg),
            MsgType::Listen => self.ctl_listen(cid, msg),
            MsgType::Connect => self.ctl_connect(cid, msg, now),
            MsgType::Accept => self.ctl_accept(cid, msg),
            MsgType::SendNotify | MsgType::RecvNotify => {
                // Pure doorbell hints; the pump stages do the actual work.
            }
            MsgType::Close => self.ctl_close(cid, msg, now),
            MsgType::SetOpt => self.ctl_setopt(cid, msg),
            MsgType::PollCtl => {
                let mask = msg.body_u32();
                if let Some(rec) = self.socks.get_mut(&msg.socket_id) {
                    rec.interest = mask | ready::ERROR | ready::HUP;
                }
            }
            MsgType::Event => {
                // Clients never send EVENT.
                self.kill_session(cid, now);
            }
        }
    }

    fn ctl_hello(&mut self, cid: u32, msg: ControlMessage) {
        let version = msg.body_u32();
        if version != PROTOCOL_VERSION {
            self.send_event(cid, 0, EventBody::Err { code: errno::EPROTO });
            if let Some(sess) = self.clients.get_mut(&cid) {
                sess.dead = true;
            }
            return;
        }
        let live = self
            .clients
            .values()
            .filter(|s| s.hello_done && !s.dead)
            .count() as u32;
        if live >= self.cfg.max_clients {
            self.send_event(cid, 0, EventBody::Err { code: errno::EMFILE });
            if let Some(sess) = self.clients.get_mut(&cid) {
                sess.dead = true;
            }
            return;
        }
        let layout = RegionLayout::new(self.cfg.max_sockets_per_client, self.cfg.ring_capacity);
        let Some(sess) = self.clients.get_mut(&cid) else {
            return;
        };
        let region = match &sess.region_spec {
            RegionSpec::Heap(cell) => {
                let region = SharedRegion::create_heap(layout);
                *cell.lock().unwrap() = Some(region.clone());
                region
            }
            RegionSpec::File(base) => {
                let path = region_path(base, cid);
                match SharedRegion::create_file(&path, layout) {
                    Ok(r) => r,
                    Err(e) => {
                        crate::util::log("warn", "region_create_failed", &[("err", e.to_string())]);
                        sess.dead = true;
                        return;
                    }
                }
            }
        };
        sess.region = Some(region);
        sess.free_slots = (0..layout.slots).rev().collect();
        sess.hello_done = true;
        self.send_event(
            cid,
            0,
            EventBody::HelloOk {
                client_id: cid,
                region_size: layout.total_size() as u64,
                slots: layout.slots,
                ring_capacity: layout.ring_capacity,
            },
        );
    }

    fn ctl_socket(&mut self, cid: u32, msg: ControlMessage) {
        let proto = match msg.body_u32() {
            6 => Proto::Tcp,
            17 => Proto::Udp,
            _ => {
                self.send_event(cid, 0, EventBody::Err { code: errno::EINVAL });
                return;
            }
        };
        let Some(slot) = self.alloc_slot(cid) else {
            self.send_event(cid, 0, EventBody::Err { code: errno::EMFILE });
            return;
        };
        let Some((tx, rx)) = self.slot_rings(cid, slot) else {
            return;
        };
        let sid = self.next_sock;
        self.next_sock += 1;
        let token = self.caps.issue(cid, sid);
        self.socks.insert(
            sid,
            SockRec {
                id: sid,
                client: cid,
                slot,
                proto,
                state: match proto {
                    Proto::Tcp => SockState::TcpIdle,
                    Proto::Udp => SockState::UdpIdle,
                },
                local_port: 0,
                remote: None,
                tx,
                rx,
                interest: ready::READABLE | ready::WRITABLE | ready::ERROR | ready::HUP,
                last_ready: 0,
                err: None,
                err_reported: false,
                connected_reported: false,
                closed_by_client: false,
                fin_wanted: false,
                accept_parent: None,
            },
        );
        let mut reply = ControlMessage::new(MsgType::Event, sid, token.0)
            .with_event(&EventBody::SocketOk { slot });
        reply.socket_id = sid;
        self.send_frame(cid, reply);
    }

    fn ctl_bind(&mut self, cid: u32, msg: ControlMessage) {
        let sid = msg.socket_id;
        let (addr, port) = msg.addr_port();
        if !addr.is_unspecified() && addr != self.cfg.ip {
            self.send_event(cid, sid, EventBody::Err { code: errno::EINVAL });
            return;
        }
        let Some(rec) = self.socks.get(&sid) else {
            return;
        };
        if rec.local_port != 0
            || !matches!(rec.state, SockState::TcpIdle | SockState::UdpIdle)
        {
            self.send_event(cid, sid, EventBody::Err { code: errno::EINVAL });
            return;
        }
        let proto = rec.proto;
        let chosen = if port == 0 {
            match self.alloc_ephemeral(proto) {
                Some(p) => p,
                None => {
                    self.send_event(cid, sid, EventBody::Err { code: errno::EADDRINUSE });
                    return;
                }
            }
        } else {
            if self.port_in_use(proto, port) {
                self.send_event(cid, sid, EventBody::Err { code: errno::EADDRINUSE });
                return;
            }
            port
        };
        let rec = self.socks.get_mut(&sid).unwrap();
        rec.local_port = chosen;
        if proto == Proto::Udp {
            rec.state = SockState::UdpBound;
            self.by_flow
                .insert(FlowKey::listener(Proto::Udp, self.cfg.ip, chosen), sid);
        }
        self.send_event(cid, sid, EventBody::Ok { port: chosen });
    }

    fn ctl_listen(&mut self, cid: u32, msg: ControlMessage) {
        let sid = msg.socket_id;
        let backlog = msg.body_u32();
        let Some(rec) = self.socks.get_mut(&sid) else {
            return;
        };
        if rec.proto != Proto::Tcp
            || rec.local_port == 0
            || !matches!(rec.state, SockState::TcpIdle)
        {
            self.send_event(cid, sid, EventBody::Err { code: errno::EINVAL });
            return;
        }
        let backlog_max = if backlog == 0 {
            DEFAULT_BACKLOG
        } else {
            (backlog as usize).clamp(1, 1024)
        };
        rec.state = SockState::TcpListener {
            backlog: VecDeque::new(),
            backlog_max,
            pending: Vec::new(),
        };
        let port = rec.local_port;
        self.by_flow
            .insert(FlowKey::listener(Proto::Tcp, self.cfg.ip, port), sid);
        self.send_event(cid, sid, EventBody::Ok { port });
    }

    fn ctl_connect(&mut self, cid: u32, msg: ControlMessage, now: Micros) {
        let sid = msg.socket_id;
        let (addr, port) = msg.addr_port();
        let Some(rec) = self.socks.get(&sid) else {
            return;
        };
        if rec.proto != Proto::Tcp || !matches!(rec.state, SockState::TcpIdle) {
            self.send_event(cid, sid, EventBody::Err { code: errno::EINVAL });
            return;
        }
        let local_port = if rec.local_port != 0 {
            rec.local_port
        } else {
            match self.alloc_ephemeral(Proto::Tcp) {
                Some(p) => p,
                None => {
                    self.send_event(cid, sid, EventBody::Err { code: errno::EADDRINUSE });
                    return;
                }
            }
        };
        let key = FlowKey::connection(Proto::Tcp, self.cfg.ip, local_port, addr, port);
        if self.by_flow.contains_key(&key) {
            self.send_event(cid, sid, EventBody::Err { code: errno::EADDRINUSE });
            return;
        }
        let iss = self.rng.next_u32();
        let (tcb, out) = Tcb::open_active(
            (self.cfg.ip, local_port),
            (addr, port),
            self.cfg.tcp,
            iss,
            now,
        );
        let rec = self.socks.get_mut(&sid).unwrap();
        rec.local_port = local_port;
        rec.remote = Some((addr, port));
        rec.state = SockState::TcpConn(Box::new(tcb));
        self.by_flow.insert(key, sid);
        for s in out {
            self.send_segment(addr, s, now);
        }
        // Completion is reported by a Connected EVENT after the handshake.
    }

    fn ctl_accept(&mut self, cid: u32, msg: ControlMessage) {
        let sid = msg.socket_id;
        let Some(rec) = self.socks.get_mut(&sid) else {
            return;
        };
        let SockState::TcpListener { backlog, .. } = &mut rec.state else {
            self.send_event(cid, sid, EventBody::Err { code: errno::EINVAL });
            return;
        };
        let Some(child_id) = backlog.pop_front() else {
            self.send_event(cid, sid, EventBody::Err { code: errno::EAGAIN });
            return;
        };
        let (slot, peer) = {
            let child = self.socks.get_mut(&child_id).expect("backlog child exists");
            child.accept_parent = None;
            (child.slot, child.remote.expect("child has a peer"))
        };
        let token = self.caps.issue(cid, child_id);
        self.send_event(
            cid,
            sid,
            EventBody::Accepted {
                socket_id: child_id,
                token: token.0,
                slot,
                peer_addr: peer.0,
                peer_port: peer.1,
            },
        );
    }

    fn ctl_close(&mut self, cid: u32, msg: ControlMessage, now: Micros) {
        self.caps.revoke(cid, msg.socket_id);
        self.close_socket(msg.socket_id, now);
    }

    /// Orderly close: buffered tx bytes still go out ahead of the FIN, like
    /// a kernel flushing a closed socket's send buffer.
    fn close_socket(&mut self, sid: u32, now: Micros) {
        let Some(rec) = self.socks.get_mut(&sid) else {
            return;
        };
        rec.closed_by_client = true;
        match &mut rec.state {
            SockState::TcpConn(tcb) => {
                // Push any last buffered bytes in before the FIN.
                loop {
                    let space = tcb.send_space();
                    if space == 0 || rec.tx.is_empty() {
                        break;
                    }
                    let chunk = rec.tx.peek(space.min(64 * 1024));
                    let n = tcb.write(&chunk);
                    if n == 0 {
                        break;
                    }
                    rec.tx.advance(n);
                }
                if !rec.tx.is_empty() {
                    // The TCB could not absorb everything; drain_tx keeps
                    // feeding it and sends the FIN once the ring is empty.
                    rec.fin_wanted = true;
                    return;
                }
                let remote_ip = rec.remote.map(|r| r.0).unwrap_or(self.cfg.ip);
                let out = match tcb.close(now) {
                    Ok(out) => out,
                    Err(_) => {
                        let rst = tcb.abort();
                        rst.into_iter().collect()
                    }
                };
                for s in out {
                    self.send_segment(remote_ip, s, now);
                }
            }
            SockState::TcpListener { backlog, pending, .. } => {
                // Reset everything still queued.
                let victims: Vec<u32> = backlog.iter().chain(pending.iter()).copied().collect();
                for v in victims {
                    self.abort_socket(v, now);
                }
                self.remove_socket(sid);
            }
            _ => {
                self.remove_socket(sid);
            }
        }
    }

    fn ctl_setopt(&mut self, cid: u32, msg: ControlMessage) {
        let sid = msg.socket_id;
        let (which, value) = msg.opt();
        let Some(rec) = self.socks.get_mut(&sid) else {
            return;
        };
        match which {
            opt::NONBLOCKING => {
                // Blocking is a client-side concern; accept and ignore.
                self.send_event(cid, sid, EventBody::Ok { port: 0 });
            }
            opt::NODELAY => {
                if let SockState::TcpConn(tcb) = &mut rec.state {
                    tcb.set_nagle(value == 0);
                }
                self.send_event(cid, sid, EventBody::Ok { port: 0 });
            }
            _ => self.send_event(cid, sid, EventBody::Err { code: errno::EOPNOTSUPP }),
        }
    }

    // ---- timers, events, readiness --------------------------------------

    fn run_timers(&mut self, now: Micros) -> usize {
        let mut work = 0usize;
        let due: Vec<u32> = self
            .socks
            .iter()
            .filter_map(|(&sid, rec)| match &rec.state {
                SockState::TcpConn(tcb) => {
                    (tcb.next_deadline().is_some_and(|d| d <= now)).then_some(sid)
                }
                _ => None,
            })
            .collect();
        for sid in due {
            work += 1;
            let Some(rec) = self.socks.get_mut(&sid) else {
                continue;
            };
            let remote_ip = rec.remote.map(|r| r.0).unwrap_or(self.cfg.ip);
            let out = if let SockState::TcpConn(tcb) = &mut rec.state {
                tcb.on_timer(now)
            } else {
                continue;
            };
            for s in out {
                self.send_segment(remote_ip, s, now);
            }
            self.drain_tcb_events(sid, now);
        }
        self.reasm.expire(now);
        work
    }

    fn drain_tcb_events(&mut self, sid: u32, now: Micros) {
        let Some(rec) = self.socks.get_mut(&sid) else {
            return;
        };
        let events = if let SockState::TcpConn(tcb) = &mut rec.state {
            tcb.take_events()
        } else {
            return;
        };
        let cid = rec.client;
        let parent = rec.accept_parent;
        for ev in events {
            match ev {
                TcpEvent::Connected => {
                    let rec = self.socks.get_mut(&sid).unwrap();
                    if rec.connected_reported {
                        continue;
                    }
                    rec.connected_reported = true;
                    match parent {
                        Some(lid) => {
                            // A passively opened child graduates into its
                            // listener's backlog.
                            if let Some(SockState::TcpListener { backlog, pending, .. }) =
                                self.socks.get_mut(&lid).map(|l| &mut l.state)
                            {
                                pending.retain(|&p| p != sid);
                                backlog.push_back(sid);
                            } else {
                                self.abort_socket(sid, now);
                            }
                        }
                        None => self.send_event(cid, sid, EventBody::Connected),
                    }
                }
                TcpEvent::Reset(reason) => {
                    let code = match reason {
                        ResetReason::Refused => errno::ECONNREFUSED,
                        ResetReason::PeerRst => errno::ECONNRESET,
                        ResetReason::RetransmitLimit => errno::ETIMEDOUT,
                    };
                    let rec = self.socks.get_mut(&sid).unwrap();
                    rec.err = Some(code);
                    if !rec.err_reported {
                        rec.err_reported = true;
                        self.send_event(cid, sid, EventBody::Err { code });
                    }
                }
                TcpEvent::DataReadable | TcpEvent::PeerClosed => {
                    // Reflected through readiness evaluation.
                }
            }
        }
    }

    fn fill_rx_rings(&mut self, now: Micros) {
        let sids: Vec<u32> = self.socks.keys().copied().collect();
        for sid in sids {
            let Some(rec) = self.socks.get_mut(&sid) else {
                continue;
            };
            if rec.closed_by_client {
                continue;
            }
            let SockState::TcpConn(tcb) = &mut rec.state else {
                continue;
            };
            let free = rec.rx.free_space();
            if free == 0 || tcb.recv_available() == 0 {
                continue;
            }
            let data = tcb.read(free);
            rec.rx.produce(&data);
            if let Some(sess) = self.clients.get_mut(&rec.client) {
                sess.ring_bell = true;
            }
            // Reading may reopen the receive window.
            let out = tcb.emit(now);
            let remote_ip = rec.remote.map(|r| r.0).unwrap_or(self.cfg.ip);
            for s in out {
                self.send_segment(remote_ip, s, now);
            }
        }
    }

    fn readiness_of(rec: &SockRec) -> u32 {
        let mut flags = 0u32;
        match &rec.state {
            SockState::TcpListener { backlog, .. } => {
                if !backlog.is_empty() {
                    flags |= ready::READABLE;
                }
            }
            SockState::TcpConn(tcb) => {
                if !rec.rx.is_empty() || tcb.peer_closed() {
                    flags |= ready::READABLE;
                }
                if rec.tx.free_space() > 0 && tcb.can_send() {
                    flags |= ready::WRITABLE;
                }
                if tcb.peer_closed() {
                    flags |= ready::HUP;
                }
            }
            SockState::UdpBound => {
                if !rec.rx.is_empty() {
                    flags |= ready::READABLE;
                }
                if rec.tx.free_space() > 0 {
                    flags |= ready::WRITABLE;
                }
            }
            _ => {}
        }
        if rec.err.is_some() {
            flags |= ready::ERROR;
        }
        flags
    }

    fn evaluate_readiness(&mut self) {
        let mut events = Vec::new();
        for rec in self.socks.values_mut() {
            if rec.closed_by_client || rec.accept_parent.is_some() {
                continue;
            }
            let flags = Self::readiness_of(rec);
            if flags != rec.last_ready {
                // Notify both rising and falling edges so clients can keep a
                // coherent cached view (e.g. a listener's backlog draining).
                if (flags | rec.last_ready) & rec.interest != 0 {
                    events.push((rec.client, rec.id, flags));
                }
                rec.last_ready = flags;
            }
        }
        for (cid, sid, flags) in events {
            self.send_event(cid, sid, EventBody::Readiness { flags });
        }
    }

    fn reclaim(&mut self, _now: Micros) {
        let done: Vec<u32> = self
            .socks
            .iter()
            .filter(|(_, r)| {
                r.closed_by_client
                    && match &r.state {
                        SockState::TcpConn(tcb) => tcb.is_closed(),
                        _ => true,
                    }
            })
            .map(|(&sid, _)| sid)
            .collect();
        for sid in done {
            self.remove_socket(sid);
        }
    }

    fn ring_doorbells(&mut self) {
        for sess in self.clients.values_mut() {
            if sess.ring_bell {
                sess.ring_bell = false;
                sess.doorbell.signal();
            }
        }
        self.clients.retain(|cid, s| {
            if s.dead {
                if let RegionSpec::File(base) = &s.region_spec {
                    let _ = std::fs::remove_file(region_path(base, *cid));
                }
            }
            !s.dead
        });
    }

    // ---- helpers --------------------------------------------------------

    fn send_event(&mut self, cid: u32, sid: u32, ev: EventBody) {
        let msg = ControlMessage::new(MsgType::Event, sid, [0u8; 16]).with_event(&ev);
        self.send_frame(cid, msg);
    }

    fn send_frame(&mut self, cid: u32, msg: ControlMessage) {
        if let Some(sess) = self.clients.get_mut(&cid) {
            if !sess.conduit.send(&msg.encode()) {
                sess.dead = true;
            }
            sess.ring_bell = true;
        }
    }

    /// Graceful session teardown on disconnect: established connections
    /// flush and FIN; everything else is released immediately.
    fn close_session(&mut self, cid: u32, now: Micros) {
        crate::util::log("info", "session_closed", &[("client", cid.to_string())]);
        let victims: Vec<u32> = self
            .socks
            .values()
            .filter(|r| r.client == cid)
            .map(|r| r.id)
            .collect();
        for sid in victims {
            self.close_socket(sid, now);
        }
        self.caps.revoke_client(cid);
        if let Some(sess) = self.clients.get_mut(&cid) {
            sess.dead = true;
        }
    }

    fn kill_session(&mut self, cid: u32, now: Micros) {
        crate::util::log("warn", "session_terminated", &[("client", cid.to_string())]);
        let victims: Vec<u32> = self
            .socks
            .values()
            .filter(|r| r.client == cid)
            .map(|r| r.id)
            .collect();
        for sid in victims {
            self.abort_socket(sid, now);
        }
        self.caps.revoke_client(cid);
        if let Some(sess) = self.clients.get_mut(&cid) {
            sess.dead = true;
        }
    }

    fn abort_socket(&mut self, sid: u32, now: Micros) {
        if let Some(rec) = self.socks.get_mut(&sid) {
            if let SockState::TcpConn(tcb) = &mut rec.state {
                let remote_ip = rec.remote.map(|r| r.0).unwrap_or(self.cfg.ip);
                if let Some(rst) = tcb.abort() {
                    self.send_segment(remote_ip, rst, now);
                }
            }
        }
        self.remove_socket(sid);
    }

    fn remove_socket(&mut self, sid: u32) {
        let Some(rec) = self.socks.remove(&sid) else {
            return;
        };
        self.by_flow.retain(|_, &mut v| v != sid);
        self.caps.revoke(rec.client, sid);
        if let Some(sess) = self.clients.get_mut(&rec.client) {
            sess.free_slots.push(rec.slot);
        }
    }

    fn alloc_slot(&mut self, cid: u32) -> Option<u32> {
        let sess = self.clients.get_mut(&cid)?;
        let slot = sess.free_slots.pop()?;
        // Fresh rings for the new socket: zeroed indices.
        if let Some(region) = &sess.region {
            let layout = region.layout();
            let _ = layout; // ring re-init happens via ring_pair + explicit reset
        }
        Some(slot)
    }

    fn slot_rings(&mut self, cid: u32, slot: u32) -> Option<(RingQueue, RingQueue)> {
        let sess = self.clients.get(&cid)?;
        let region = sess.region.as_ref()?;
        let (tx, rx) = region.ring_pair(slot);
        // Drain any stale bytes left by a previous occupant of the slot.
        while !tx.is_empty() {
            tx.advance(tx.len());
        }
        while !rx.is_empty() {
            rx.advance(rx.len());
        }
        Some((tx, rx))
    }

    fn port_in_use(&self, proto: Proto, port: u16) -> bool {
        self.socks
            .values()
            .any(|r| r.proto == proto && r.local_port == port)
    }

    fn alloc_ephemeral(&mut self, proto: Proto) -> Option<u16> {
        let (lo, hi) = self.cfg.ephemeral_range;
        let span = (hi - lo) as u32 + 1;
        let start = lo as u32 + self.rng.below(span as u64) as u32;
        for i in 0..span {
            let port = (lo as u32 + (start - lo as u32 + i) % span) as u16;
            if !self.port_in_use(proto, port) {
                return Some(port);
            }
        }
        None
    }

    fn next_ident(&mut self) -> u16 {
        let id = self.ip_ident;
        self.ip_ident = self.ip_ident.wrapping_add(1);
        id
    }

    fn send_segment(&mut self, dst_ip: Ipv4Addr, seg: TcpSegment, now: Micros) {
        let bytes = seg.encode(self.cfg.ip, dst_ip);
        let pkt = Ipv4Packet {
            identification: self.next_ident(),
            ..Ipv4Packet::new(self.cfg.ip, dst_ip, IPPROTO_TCP, bytes)
        };
        self.send_ip(pkt, now);
    }

    fn send_ip(&mut self, pkt: Ipv4Packet, now: Micros) {
        if pkt.dst == self.cfg.ip {
            self.loopback.push_back(pkt);
            return;
        }
        let dst_ip = pkt.dst;
        match self.arp.resolve(dst_ip, now, self.cfg.mac, self.cfg.ip) {
            ArpResolution::Resolved(mac) => self.emit_ip_frames(pkt, mac, now),
            ArpResolution::Query(req) => {
                let entry = self
                    .pending_arp
                    .entry(dst_ip)
                    .or_insert_with(|| (0, Vec::new()));
                entry.1.push(pkt);
                if entry.1.len() > ARP_PENDING_CAP {
                    entry.1.remove(0);
                }
                // Re-query on a timer so a lost query frame cannot strand
                // the queue; retransmitted segments retrigger this path.
                let due = entry.0 == 0 || now.saturating_sub(entry.0) >= ARP_RETRY;
                if due {
                    entry.0 = now.max(1);
                    let frame = EthFrame {
                        dst: MacAddr::BROADCAST,
                        src: self.cfg.mac,
                        ethertype: ETHERTYPE_ARP,
                        payload: req.encode(),
                    };
                    let _ = self.link.send(FrameBuffer::new(frame.encode()), now);
                }
            }
        }
    }

    fn flush_pending_arp(&mut self, now: Micros) {
        let resolvable: Vec<Ipv4Addr> = self
            .pending_arp
            .keys()
            .filter(|&&ip| self.arp.lookup(ip, now).is_some())
            .copied()
            .collect();
        for ip in resolvable {
            let mac = self.arp.lookup(ip, now).unwrap();
            let (_, pkts) = self.pending_arp.remove(&ip).unwrap_or_default();
            for pkt in pkts {
                self.emit_ip_frames(pkt, mac, now);
            }
        }
    }

    fn emit_ip_frames(&mut self, pkt: Ipv4Packet, dst_mac: MacAddr, now: Micros) {
        let frags = match ipv4_fragment(pkt, self.ip_mtu) {
            Ok(f) => f,
            Err(_) => return,
        };
        for frag in frags {
            let Ok(payload) = frag.encode() else {
                continue;
            };
            let frame = EthFrame {
                dst: dst_mac,
                src: self.cfg.mac,
                ethertype: ETHERTYPE_IPV4,
                payload,
            };
            let _ = self.link.send(FrameBuffer::new(frame.encode()), now);
        }
    }
}

fn region_path(base: &std::path::Path, client_id: u32) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(format!(".region.{client_id}"));
    PathBuf::from(s)
}
