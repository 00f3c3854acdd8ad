//! One socket handle covering both paths. The joyride side speaks the
//! control protocol and moves payload through the shared-memory ring pair;
//! the kernel side wraps a raw fd. Either way the caller sees the same
//! calls and the same error classes.

use std::net::Ipv4Addr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use crate::ipc::control::{opt, ready};
use crate::ipc::{ControlMessage, EventBody, MsgType, RingQueue};
use crate::service::UDP_FRAME_HEADER_LEN;

use super::kernel::KSock;
use super::policy::Cidr;
use super::stack::{Ctl, JrStack, StackShared, WAIT_TICK};
use super::{SockErr, SockResult};

/// Replies to bind/listen/setopt are synchronous service-side; if one does
/// not arrive in this window the service is gone.
const REPLY_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Tcp,
    Udp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JState {
    Idle,
    Bound,
    Listening,
    Connecting,
    Connected,
    /// Connect failed or the connection died; matches the kernel's
    /// "send → EPIPE" disposition for such sockets.
    Failed,
}

pub(crate) struct JoySock {
    shared: Arc<StackShared>,
    prefixes: Arc<Vec<Cidr>>,
    sid: u32,
    token: [u8; 16],
    tx: RingQueue,
    rx: RingQueue,
    state: JState,
    err: Option<SockErr>,
    local_port: u16,
    peer: Option<(Ipv4Addr, u16)>,
    udp_peer: Option<(Ipv4Addr, u16)>,
    /// NODELAY requested before the connection existed; applied on connect.
    want_nodelay: bool,
    hup: bool,
}

pub(crate) enum Backing {
    Joy(JoySock),
    Kernel(KSock),
    Closed,
}

pub(crate) struct Inner {
    pub(crate) backing: Backing,
    pub(crate) nonblocking: bool,
}

static NEXT_HANDLE: AtomicU64 = AtomicU64::new(1);

struct SockCell {
    handle: u64,
    proto: Protocol,
    inner: Mutex<Inner>,
}

/// Cloneable socket handle; clones refer to the same underlying socket.
#[derive(Clone)]
pub struct ClientSocket {
    cell: Arc<SockCell>,
}

impl std::fmt::Debug for ClientSocket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientSocket")
            .field("handle", &self.cell.handle)
            .field("proto", &self.cell.proto)
            .finish()
    }
}


impl JoySock {
    fn absorb(&mut self, ctl: &mut Ctl) {
        while let Some(ev) = ctl.pop_event(self.sid) {
            self.apply(ev);
        }
        if ctl.readiness(self.sid) & ready::HUP != 0 {
            self.hup = true;
        }
    }

    /// Applies an asynchronous event; request loops route reply-shaped
    /// events themselves and hand the rest here.
    fn apply(&mut self, ev: EventBody) {
        match ev {
            EventBody::Connected => {
                if self.state == JState::Connecting {
                    self.state = JState::Connected;
                    if self.want_nodelay {
                        // Fire-and-forget; the Ok reply is dropped by a
                        // later absorb pass.
                        let msg = self.msg(MsgType::SetOpt).with_opt(opt::NODELAY, 1);
                        let _ = self.shared.lock().send(&msg);
                    }
                }
            }
            EventBody::Err { code } => {
                self.err = Some(SockErr::from_code(code));
                if self.state == JState::Connecting {
                    self.state = JState::Failed;
                }
            }
            _ => {}
        }
    }

    fn msg(&self, ty: MsgType) -> ControlMessage {
        ControlMessage::new(ty, self.sid, self.token)
    }

    /// Sends a request and waits for its Ok/Err reply, applying unrelated
    /// events on the way.
    fn roundtrip(&mut self, msg: ControlMessage) -> SockResult<u16> {
        let shared = self.shared.clone();
        {
            let mut ctl = shared.lock();
            ctl.send(&msg)?;
        }
        let deadline = Instant::now() + REPLY_TIMEOUT;
        loop {
            {
                let mut ctl = shared.lock();
                ctl.pump();
                while let Some(ev) = ctl.pop_event(self.sid) {
                    match ev {
                        EventBody::Ok { port } => return Ok(port),
                        EventBody::Err { code } => return Err(SockErr::from_code(code)),
                        other => self.apply(other),
                    }
                }
                if ctl.dead {
                    return Err(SockErr::ConnReset);
                }
            }
            if Instant::now() >= deadline {
                return Err(SockErr::TimedOut);
            }
            shared.wake.wait(WAIT_TICK);
        }
    }

    fn pump(&mut self) {
        let shared = self.shared.clone();
        let mut ctl = shared.lock();
        ctl.pump();
        self.absorb(&mut ctl);
    }

    fn notify(&self, ty: MsgType) {
        let _ = self.shared.lock().send(&self.msg(ty));
    }

    fn close(&mut self) {
        let msg = self.msg(MsgType::Close);
        let mut ctl = self.shared.lock();
        let _ = ctl.send(&msg);
        ctl.forget(self.sid);
    }
}

impl ClientSocket {
    pub(crate) fn open(stack: &JrStack, proto: Protocol) -> SockResult<ClientSocket> {
        let backing = match &stack.shared {
            None => Backing::Kernel(KSock::open(proto)?),
            Some(shared) => {
                Backing::Joy(open_joy(shared.clone(), stack.prefixes.clone(), proto)?)
            }
        };
        Ok(ClientSocket::from_backing(proto, backing, false))
    }

    fn from_backing(proto: Protocol, backing: Backing, nonblocking: bool) -> ClientSocket {
        ClientSocket {
            cell: Arc::new(SockCell {
                handle: NEXT_HANDLE.fetch_add(1, Ordering::Relaxed),
                proto,
                inner: Mutex::new(Inner {
                    backing,
                    nonblocking,
                }),
            }),
        }
    }

    /// Stable identity for poll-set registration.
    pub fn handle(&self) -> u64 {
        self.cell.handle
    }

    pub fn protocol(&self) -> Protocol {
        self.cell.proto
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.cell.inner.lock().unwrap()
    }

    pub fn jr_set_nonblocking(&self, on: bool) -> SockResult<()> {
        let mut inner = self.lock();
        match &inner.backing {
            Backing::Closed => return Err(SockErr::Closed),
            Backing::Kernel(k) => k.set_nonblocking(on)?,
            Backing::Joy(_) => {}
        }
        inner.nonblocking = on;
        Ok(())
    }

    pub fn jr_set_nodelay(&self, on: bool) -> SockResult<()> {
        if self.cell.proto != Protocol::Tcp {
            return Err(SockErr::Unsupported);
        }
        let mut inner = self.lock();
        match &mut inner.backing {
            Backing::Closed => Err(SockErr::Closed),
            Backing::Kernel(k) => k.set_nodelay(on),
            Backing::Joy(j) => {
                j.want_nodelay = on;
                if j.state == JState::Connected {
                    let msg = j.msg(MsgType::SetOpt).with_opt(opt::NODELAY, on as u32);
                    j.roundtrip(msg)?;
                }
                Ok(())
            }
        }
    }

    pub fn jr_take_error(&self) -> Option<SockErr> {
        let mut inner = self.lock();
        match &mut inner.backing {
            Backing::Closed => None,
            Backing::Kernel(k) => k.take_error(),
            Backing::Joy(j) => {
                j.pump();
                j.err.take()
            }
        }
    }

    pub fn jr_local_port(&self) -> SockResult<u16> {
        let inner = self.lock();
        match &inner.backing {
            Backing::Closed => Err(SockErr::Closed),
            Backing::Kernel(k) => k.local_port(),
            Backing::Joy(j) => Ok(j.local_port),
        }
    }

    pub fn jr_peer(&self) -> Option<(Ipv4Addr, u16)> {
        let inner = self.lock();
        match &inner.backing {
            Backing::Joy(j) => j.peer,
            _ => None,
        }
    }

    pub fn jr_bind(&self, addr: Ipv4Addr, port: u16) -> SockResult<u16> {
        let mut inner = self.lock();
        match &mut inner.backing {
            Backing::Closed => Err(SockErr::Closed),
            Backing::Kernel(k) => k.bind(addr, port),
            Backing::Joy(j) => {
                if j.state != JState::Idle {
                    return Err(SockErr::Invalid);
                }
                bind_joy(j, addr, port)
            }
        }
    }

    pub fn jr_listen(&self, backlog: u32) -> SockResult<()> {
        if self.cell.proto == Protocol::Udp {
            // Mirrors the kernel's EOPNOTSUPP for SOCK_DGRAM.
            let inner = self.lock();
            return match &inner.backing {
                Backing::Closed => Err(SockErr::Closed),
                Backing::Kernel(k) => k.listen(backlog),
                Backing::Joy(_) => Err(SockErr::Unsupported),
            };
        }
        let mut inner = self.lock();
        match &mut inner.backing {
            Backing::Closed => Err(SockErr::Closed),
            Backing::Kernel(k) => k.listen(backlog),
            Backing::Joy(j) => match j.state {
                JState::Listening => Ok(()), // re-listen is a no-op
                JState::Idle | JState::Bound => {
                    if j.state == JState::Idle {
                        bind_joy(j, Ipv4Addr::UNSPECIFIED, 0)?;
                    }
                    let msg = j.msg(MsgType::Listen).with_u32(backlog);
                    j.roundtrip(msg)?;
                    j.state = JState::Listening;
                    Ok(())
                }
                JState::Connecting | JState::Connected | JState::Failed => Err(SockErr::Invalid),
            },
        }
    }

    pub fn jr_accept(&self) -> SockResult<ClientSocket> {
        let nonblocking = {
            let inner = self.lock();
            inner.nonblocking
        };
        loop {
            let mut inner = self.lock();
            match &mut inner.backing {
                Backing::Closed => return Err(SockErr::Closed),
                Backing::Kernel(k) => {
                    let (child, _, _) = k.accept()?;
                    drop(inner);
                    return Ok(ClientSocket::from_backing(
                        Protocol::Tcp,
                        Backing::Kernel(child),
                        false,
                    ));
                }
                Backing::Joy(j) => {
                    if j.state != JState::Listening {
                        return Err(SockErr::Invalid);
                    }
                    match accept_joy(j) {
                        Ok(child) => {
                            drop(inner);
                            return Ok(ClientSocket::from_backing(
                                Protocol::Tcp,
                                Backing::Joy(child),
                                false,
                            ));
                        }
                        Err(SockErr::WouldBlock) if !nonblocking => {
                            let shared = j.shared.clone();
                            drop(inner);
                            shared.wake.wait(WAIT_TICK);
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }

    pub fn jr_connect(&self, addr: Ipv4Addr, port: u16) -> SockResult<()> {
        let mut inner = self.lock();
        let nonblocking = inner.nonblocking;
        // Destination-prefix fallback: an untouched joyride socket whose
        // destination lies outside the configured prefixes migrates to the
        // kernel path before anything is committed service-side.
        if let Backing::Joy(j) = &mut inner.backing {
            if j.state == JState::Idle && !j.prefix_match(addr) {
                j.close();
                let k = KSock::open(self.cell.proto)?;
                if nonblocking {
                    k.set_nonblocking(true)?;
                }
                inner.backing = Backing::Kernel(k);
            }
        }
        match &mut inner.backing {
            Backing::Closed => Err(SockErr::Closed),
            Backing::Kernel(k) => k.connect(addr, port),
            Backing::Joy(j) => match (self.cell.proto, j.state) {
                (Protocol::Udp, JState::Idle | JState::Bound) => {
                    j.udp_peer = Some((addr, port));
                    Ok(())
                }
                (Protocol::Udp, _) => Err(SockErr::Invalid),
                (Protocol::Tcp, JState::Idle | JState::Bound) => {
                    let msg = j.msg(MsgType::Connect).with_addr_port(addr, port);
                    {
                        let mut ctl = j.shared.lock();
                        ctl.send(&msg)?;
                    }
                    j.state = JState::Connecting;
                    j.peer = Some((addr, port));
                    if nonblocking {
                        return Err(SockErr::InProgress);
                    }
                    connect_wait(j)
                }
                (Protocol::Tcp, JState::Connecting) => Err(SockErr::InProgress),
                (Protocol::Tcp, JState::Connected | JState::Listening) => Err(SockErr::IsConn),
                (Protocol::Tcp, JState::Failed) => Err(j.err.unwrap_or(SockErr::ConnRefused)),
            },
        }
    }

    pub fn jr_send(&self, data: &[u8]) -> SockResult<usize> {
        match self.cell.proto {
            Protocol::Udp => {
                let peer = {
                    let inner = self.lock();
                    match &inner.backing {
                        Backing::Kernel(k) => return k.send(data),
                        Backing::Closed => return Err(SockErr::Closed),
                        Backing::Joy(j) => j.udp_peer,
                    }
                };
                let Some((addr, port)) = peer else {
                    return Err(SockErr::DestRequired);
                };
                self.jr_send_to(data, addr, port)
            }
            Protocol::Tcp => self.tcp_send(data),
        }
    }

    fn tcp_send(&self, data: &[u8]) -> SockResult<usize> {
        loop {
            let mut inner = self.lock();
            let nonblocking = inner.nonblocking;
            match &mut inner.backing {
                Backing::Closed => return Err(SockErr::Closed),
                Backing::Kernel(k) => return k.send(data),
                Backing::Joy(j) => {
                    j.pump();
                    match j.state {
                        JState::Connected => {}
                        JState::Connecting => {
                            if nonblocking {
                                return Err(SockErr::WouldBlock);
                            }
                            connect_wait(j)?;
                        }
                        // The kernel answers EPIPE for every other shape.
                        _ => return Err(SockErr::Pipe),
                    }
                    if let Some(e) = j.err.take() {
                        j.state = JState::Failed;
                        return Err(e);
                    }
                    let n = j.tx.produce(data);
                    if n > 0 {
                        j.notify(MsgType::SendNotify);
                        return Ok(n);
                    }
                    if nonblocking {
                        return Err(SockErr::WouldBlock);
                    }
                    let shared = j.shared.clone();
                    drop(inner);
                    shared.wake.wait(WAIT_TICK);
                }
            }
        }
    }

    pub fn jr_send_to(&self, data: &[u8], addr: Ipv4Addr, port: u16) -> SockResult<usize> {
        if self.cell.proto != Protocol::Tcp {
            loop {
                let mut inner = self.lock();
                let nonblocking = inner.nonblocking;
                match &mut inner.backing {
                    Backing::Closed => return Err(SockErr::Closed),
                    Backing::Kernel(k) => return k.send_to(data, addr, port),
                    Backing::Joy(j) => {
                        if j.state == JState::Idle {
                            // sendto auto-binds, as the kernel does.
                            bind_joy(j, Ipv4Addr::UNSPECIFIED, 0)?;
                        }
                        let total = UDP_FRAME_HEADER_LEN + data.len();
                        if total > j.tx.capacity() {
                            return Err(SockErr::MsgSize);
                        }
                        if j.tx.free_space() >= total {
                            let mut buf = Vec::with_capacity(total);
                            buf.extend_from_slice(&addr.octets());
                            buf.extend_from_slice(&port.to_le_bytes());
                            buf.extend_from_slice(&[0, 0]);
                            buf.extend_from_slice(&(data.len() as u32).to_le_bytes());
                            buf.extend_from_slice(data);
                            j.tx.produce(&buf);
                            j.notify(MsgType::SendNotify);
                            return Ok(data.len());
                        }
                        if nonblocking {
                            return Err(SockErr::WouldBlock);
                        }
                        let shared = j.shared.clone();
                        drop(inner);
                        shared.wake.wait(WAIT_TICK);
                    }
                }
            }
        } else {
            self.jr_send(data)
        }
    }

    /// Empty result = orderly EOF (TCP).
    pub fn jr_recv(&self, max: usize) -> SockResult<Vec<u8>> {
        match self.cell.proto {
            Protocol::Udp => self.jr_recv_from(max).map(|(d, _, _)| d),
            Protocol::Tcp => self.tcp_recv(max),
        }
    }

    fn tcp_recv(&self, max: usize) -> SockResult<Vec<u8>> {
        loop {
            let mut inner = self.lock();
            let nonblocking = inner.nonblocking;
            match &mut inner.backing {
                Backing::Closed => return Err(SockErr::Closed),
                Backing::Kernel(k) => return k.recv(max),
                Backing::Joy(j) => {
                    j.pump();
                    match j.state {
                        JState::Connected | JState::Failed => {}
                        _ => return Err(SockErr::NotConn),
                    }
                    if !j.rx.is_empty() {
                        let data = j.rx.consume(max);
                        j.notify(MsgType::RecvNotify);
                        return Ok(data);
                    }
                    if let Some(e) = j.err.take() {
                        j.state = JState::Failed;
                        return Err(e);
                    }
                    if j.state == JState::Failed {
                        return Err(SockErr::Invalid);
                    }
                    if j.hup {
                        return Ok(Vec::new());
                    }
                    if nonblocking {
                        return Err(SockErr::WouldBlock);
                    }
                    let shared = j.shared.clone();
                    drop(inner);
                    shared.wake.wait(WAIT_TICK);
                }
            }
        }
    }

    /// UDP receive with the source address; a datagram longer than `max` is
    /// truncated and the remainder discarded.
    pub fn jr_recv_from(&self, max: usize) -> SockResult<(Vec<u8>, Ipv4Addr, u16)> {
        if self.cell.proto == Protocol::Tcp {
            return self.tcp_recv(max).map(|d| (d, Ipv4Addr::UNSPECIFIED, 0));
        }
        loop {
            let mut inner = self.lock();
            let nonblocking = inner.nonblocking;
            match &mut inner.backing {
                Backing::Closed => return Err(SockErr::Closed),
                Backing::Kernel(k) => return k.recv_from(max),
                Backing::Joy(j) => {
                    j.pump();
                    let header = j.rx.peek(UDP_FRAME_HEADER_LEN);
                    if header.len() == UDP_FRAME_HEADER_LEN {
                        let src = Ipv4Addr::new(header[0], header[1], header[2], header[3]);
                        let sport = u16::from_le_bytes([header[4], header[5]]);
                        let len = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
                        j.rx.advance(UDP_FRAME_HEADER_LEN);
                        let mut data = j.rx.consume(len);
                        data.truncate(max);
                        j.notify(MsgType::RecvNotify);
                        return Ok((data, src, sport));
                    }
                    if nonblocking {
                        return Err(SockErr::WouldBlock);
                    }
                    let shared = j.shared.clone();
                    drop(inner);
                    shared.wake.wait(WAIT_TICK);
                }
            }
        }
    }

    pub fn jr_close(&self) -> SockResult<()> {
        let mut inner = self.lock();
        match &mut inner.backing {
            Backing::Closed => Err(SockErr::Closed),
            Backing::Kernel(_) => {
                inner.backing = Backing::Closed; // fd closes on drop
                Ok(())
            }
            Backing::Joy(j) => {
                j.close();
                inner.backing = Backing::Closed;
                Ok(())
            }
        }
    }

    /// Level-triggered readiness, masked by `interest` (error and hangup
    /// always reported). Never waits.
    pub(crate) fn readiness(&self, interest: u32) -> u32 {
        let mask = interest | ready::ERROR | ready::HUP;
        let mut inner = self.lock();
        let flags = match &mut inner.backing {
            Backing::Closed => 0,
            Backing::Kernel(k) => k.readiness(interest),
            Backing::Joy(j) => {
                j.pump();
                let cached = j.shared.lock().readiness(j.sid);
                let mut flags = 0u32;
                match j.state {
                    JState::Listening => flags |= cached & ready::READABLE,
                    JState::Connected => {
                        if !j.rx.is_empty() || j.hup || j.err.is_some() {
                            flags |= ready::READABLE;
                        }
                        if j.tx.free_space() > 0 {
                            flags |= ready::WRITABLE;
                        }
                        if j.hup {
                            flags |= ready::HUP;
                        }
                    }
                    JState::Failed => flags |= ready::WRITABLE | ready::HUP,
                    JState::Connecting => {}
                    JState::Idle | JState::Bound => {
                        if self.cell.proto == Protocol::Udp {
                            if !j.rx.is_empty() {
                                flags |= ready::READABLE;
                            }
                            if j.tx.free_space() > 0 {
                                flags |= ready::WRITABLE;
                            }
                        }
                    }
                }
                if j.err.is_some() {
                    flags |= ready::ERROR;
                }
                flags
            }
        };
        flags & mask
    }

    /// The stack's wake source, if this is a joyride socket.
    pub(crate) fn wake_shared(&self) -> Option<Arc<StackShared>> {
        let inner = self.lock();
        match &inner.backing {
            Backing::Joy(j) => Some(j.shared.clone()),
            _ => None,
        }
    }

    pub(crate) fn kernel_fd(&self) -> Option<i32> {
        let inner = self.lock();
        match &inner.backing {
            Backing::Kernel(k) => Some(k.raw_fd()),
            _ => None,
        }
    }
}

impl JoySock {
    /// Empty prefix list ⇒ every destination is joyride-eligible.
    fn prefix_match(&self, addr: Ipv4Addr) -> bool {
        self.prefixes.is_empty() || self.prefixes.iter().any(|p| p.contains(addr))
    }
}

impl Drop for Inner {
    fn drop(&mut self) {
        if let Backing::Joy(j) = &mut self.backing {
            j.close();
        }
    }
}

fn open_joy(
    shared: Arc<StackShared>,
    prefixes: Arc<Vec<Cidr>>,
    proto: Protocol,
) -> SockResult<JoySock> {
    let code = match proto {
        Protocol::Tcp => 6u32,
        Protocol::Udp => 17u32,
    };
    let msg = ControlMessage::new(MsgType::Socket, 0, [0u8; 16]).with_u32(code);
    {
        let mut ctl = shared.lock();
        ctl.send(&msg)?;
    }
    let deadline = Instant::now() + REPLY_TIMEOUT;
    loop {
        {
            let mut ctl = shared.lock();
            ctl.pump();
            if let Some((sid, token, slot)) = ctl.pop_socket_reply() {
                drop(ctl);
                let (tx, rx) = shared.region.ring_pair(slot);
                return Ok(JoySock {
                    shared,
                    prefixes,
                    sid,
                    token,
                    tx,
                    rx,
                    state: JState::Idle,
                    err: None,
                    local_port: 0,
                    peer: None,
                    udp_peer: None,
                    want_nodelay: false,
                    hup: false,
                });
            }
            if let Some(EventBody::Err { code }) = ctl.pop_event(0) {
                return Err(SockErr::from_code(code));
            }
            if ctl.dead {
                return Err(SockErr::ConnReset);
            }
        }
        if Instant::now() >= deadline {
            return Err(SockErr::TimedOut);
        }
        shared.wake.wait(WAIT_TICK);
    }
}

fn bind_joy(j: &mut JoySock, addr: Ipv4Addr, port: u16) -> SockResult<u16> {
    let msg = j.msg(MsgType::Bind).with_addr_port(addr, port);
    let bound = j.roundtrip(msg)?;
    j.local_port = bound;
    j.state = JState::Bound;
    Ok(bound)
}

/// One ACCEPT round trip; WouldBlock when the backlog is empty.
fn accept_joy(j: &mut JoySock) -> SockResult<JoySock> {
    let msg = j.msg(MsgType::Accept);
    let shared = j.shared.clone();
    {
        let mut ctl = shared.lock();
        ctl.send(&msg)?;
    }
    let deadline = Instant::now() + REPLY_TIMEOUT;
    loop {
        {
            let mut ctl = shared.lock();
            ctl.pump();
            while let Some(ev) = ctl.pop_event(j.sid) {
                match ev {
                    EventBody::Accepted {
                        socket_id,
                        token,
                        slot,
                        peer_addr,
                        peer_port,
                    } => {
                        drop(ctl);
                        let (tx, rx) = shared.region.ring_pair(slot);
                        return Ok(JoySock {
                            shared,
                            prefixes: j.prefixes.clone(),
                            sid: socket_id,
                            token,
                            tx,
                            rx,
                            state: JState::Connected,
                            err: None,
                            local_port: j.local_port,
                            peer: Some((peer_addr, peer_port)),
                            udp_peer: None,
                            want_nodelay: false,
                            hup: false,
                        });
                    }
                    EventBody::Err { code } => return Err(SockErr::from_code(code)),
                    other => j.apply(other),
                }
            }
            if ctl.dead {
                return Err(SockErr::ConnReset);
            }
        }
        if Instant::now() >= deadline {
            return Err(SockErr::TimedOut);
        }
        shared.wake.wait(WAIT_TICK);
    }
}

/// Blocks until an in-flight connect resolves.
fn connect_wait(j: &mut JoySock) -> SockResult<()> {
    loop {
        j.pump();
        match j.state {
            JState::Connected => return Ok(()),
            JState::Failed => {
                return Err(j.err.take().unwrap_or(SockErr::ConnRefused));
            }
            JState::Connecting => {}
            _ => return Err(SockErr::Invalid),
        }
        if j.shared.lock().dead {
            return Err(SockErr::ConnReset);
        }
        j.shared.wake.wait(WAIT_TICK);
    }
}
