//! Table-driven POSIX-sequencing conformance: every script runs unchanged
//! against kernel sockets and joyride sockets, and the per-step result
//! classifications must be identical.

use std::net::Ipv4Addr;

use crate::ipc::control::ready;
use crate::linklayer::LinkConfig;
use crate::netcore::ether::MacAddr;
use crate::service::{build_link, LinkSpec, Service, ServiceConfig, ServiceRunner};

use super::poll::PollSet;
use super::socket::{ClientSocket, Protocol};
use super::stack::JrStack;
use super::{SockErr, SockResult};

/// Outcome classification of one scripted call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Ok,
    Eof,
    Err(SockErr),
}

impl Class {
    pub fn of<T>(r: &SockResult<T>) -> Class {
        match r {
            Ok(_) => Class::Ok,
            Err(e) => Class::Err(*e),
        }
    }

    pub fn of_recv(r: &SockResult<Vec<u8>>) -> Class {
        match r {
            Ok(d) if d.is_empty() => Class::Eof,
            Ok(_) => Class::Ok,
            Err(e) => Class::Err(*e),
        }
    }

    /// Boolean checks inside a script (content equality, lengths).
    pub fn check(ok: bool) -> Class {
        if ok {
            Class::Ok
        } else {
            Class::Err(SockErr::Io)
        }
    }
}

/// Supplies sockets and addresses; the scripts themselves are path-blind.
pub trait Backend {
    fn tcp(&mut self) -> SockResult<ClientSocket>;
    fn udp(&mut self) -> SockResult<ClientSocket>;
    /// Address local sockets bind to and connect against.
    fn addr(&self) -> Ipv4Addr;
    /// A port guaranteed to refuse TCP connections.
    fn dead_port(&self) -> u16;
}

pub struct KernelBackend {
    dead: u16,
}

impl KernelBackend {
    pub fn new() -> KernelBackend {
        // Reserve-and-release: an ephemeral port that was just bound is
        // free again and connecting to it gets refused.
        let stack = JrStack::kernel_only();
        let probe = stack.jr_socket(Protocol::Tcp).expect("probe socket");
        let dead = probe
            .jr_bind(Ipv4Addr::LOCALHOST, 0)
            .expect("probe bind");
        probe.jr_close().expect("probe close");
        KernelBackend { dead }
    }
}

impl Default for KernelBackend {
    fn default() -> Self {
        KernelBackend::new()
    }
}

impl Backend for KernelBackend {
    fn tcp(&mut self) -> SockResult<ClientSocket> {
        JrStack::kernel_only().jr_socket(Protocol::Tcp)
    }

    fn udp(&mut self) -> SockResult<ClientSocket> {
        JrStack::kernel_only().jr_socket(Protocol::Udp)
    }

    fn addr(&self) -> Ipv4Addr {
        Ipv4Addr::LOCALHOST
    }

    fn dead_port(&self) -> u16 {
        self.dead
    }
}

/// A private in-process service on a loopback-only memory link.
pub struct JoyBackend {
    _runner: ServiceRunner,
    stack: JrStack,
    ip: Ipv4Addr,
}

impl JoyBackend {
    #[cfg(test)]
    pub(crate) fn stack_shared(&self) -> Option<std::sync::Arc<super::stack::StackShared>> {
        self.stack.shared.clone()
    }

    pub fn new() -> JoyBackend {
        let ip = Ipv4Addr::new(10, 77, 0, 1);
        let cfg = ServiceConfig::new(ip, MacAddr([0x02, 0, 0, 0x77, 0, 1]));
        let link = build_link(&LinkSpec::Mem, LinkConfig::default()).expect("mem link");
        let runner = ServiceRunner::spawn(Service::new(cfg, link));
        let port = runner.service.lock().unwrap().attach_inproc();
        let stack = JrStack::attach_port(port).expect("attach");
        JoyBackend {
            _runner: runner,
            stack,
            ip,
        }
    }
}

impl Default for JoyBackend {
    fn default() -> Self {
        JoyBackend::new()
    }
}

impl Backend for JoyBackend {
    fn tcp(&mut self) -> SockResult<ClientSocket> {
        self.stack.jr_socket(Protocol::Tcp)
    }

    fn udp(&mut self) -> SockResult<ClientSocket> {
        self.stack.jr_socket(Protocol::Udp)
    }

    fn addr(&self) -> Ipv4Addr {
        self.ip
    }

    fn dead_port(&self) -> u16 {
        9 // nothing ever listens here on the private service
    }
}

type Script = fn(&mut dyn Backend) -> Vec<Class>;

/// Receives exactly `n` bytes or gives up on error.
fn recv_exact(sock: &ClientSocket, n: usize) -> SockResult<Vec<u8>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let chunk = sock.jr_recv(n - out.len())?;
        if chunk.is_empty() {
            break;
        }
        out.extend_from_slice(&chunk);
    }
    Ok(out)
}

fn established(b: &mut dyn Backend) -> SockResult<(ClientSocket, ClientSocket)> {
    let listener = b.tcp()?;
    listener.jr_bind(b.addr(), 0)?;
    listener.jr_listen(8)?;
    let port = listener.jr_local_port()?;
    let client = b.tcp()?;
    client.jr_connect(b.addr(), port)?;
    let server = listener.jr_accept()?;
    Ok((client, server))
}

fn s_tcp_socket(b: &mut dyn Backend) -> Vec<Class> {
    vec![Class::of(&b.tcp())]
}

fn s_udp_socket(b: &mut dyn Backend) -> Vec<Class> {
    vec![Class::of(&b.udp())]
}

fn s_bind_ephemeral(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.tcp().unwrap();
    let r = s.jr_bind(b.addr(), 0);
    vec![Class::of(&r), Class::check(matches!(r, Ok(p) if p > 0))]
}

fn s_bind_twice(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.tcp().unwrap();
    vec![
        Class::of(&s.jr_bind(b.addr(), 0)),
        Class::of(&s.jr_bind(b.addr(), 0)),
    ]
}

fn s_bind_conflict_tcp(b: &mut dyn Backend) -> Vec<Class> {
    let a = b.tcp().unwrap();
    let p = a.jr_bind(b.addr(), 0).unwrap();
    let c = b.tcp().unwrap();
    vec![Class::of(&c.jr_bind(b.addr(), p))]
}

fn s_bind_conflict_udp(b: &mut dyn Backend) -> Vec<Class> {
    let a = b.udp().unwrap();
    let p = a.jr_bind(b.addr(), 0).unwrap();
    let c = b.udp().unwrap();
    vec![Class::of(&c.jr_bind(b.addr(), p))]
}

fn s_listen_without_bind(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.tcp().unwrap();
    vec![Class::of(&s.jr_listen(8))]
}

fn s_listen_on_udp(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.udp().unwrap();
    vec![Class::of(&s.jr_listen(8))]
}

fn s_listen_twice(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.tcp().unwrap();
    s.jr_bind(b.addr(), 0).unwrap();
    vec![Class::of(&s.jr_listen(4)), Class::of(&s.jr_listen(8))]
}

fn s_bind_after_listen(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.tcp().unwrap();
    s.jr_bind(b.addr(), 0).unwrap();
    s.jr_listen(8).unwrap();
    vec![Class::of(&s.jr_bind(b.addr(), 0))]
}

fn s_accept_non_listener(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.tcp().unwrap();
    vec![Class::of(&s.jr_accept())]
}

fn s_accept_nb_empty(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.tcp().unwrap();
    s.jr_bind(b.addr(), 0).unwrap();
    s.jr_listen(8).unwrap();
    s.jr_set_nonblocking(true).unwrap();
    vec![Class::of(&s.jr_accept())]
}

fn s_connect_refused(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.tcp().unwrap();
    vec![Class::of(&s.jr_connect(b.addr(), b.dead_port()))]
}

fn s_connect_nb_in_progress(b: &mut dyn Backend) -> Vec<Class> {
    let l = b.tcp().unwrap();
    l.jr_bind(b.addr(), 0).unwrap();
    l.jr_listen(8).unwrap();
    let c = b.tcp().unwrap();
    c.jr_set_nonblocking(true).unwrap();
    vec![Class::of(&c.jr_connect(b.addr(), l.jr_local_port().unwrap()))]
}

fn s_connect_accept(b: &mut dyn Backend) -> Vec<Class> {
    match established(b) {
        Ok(_) => vec![Class::Ok, Class::Ok],
        Err(e) => vec![Class::Err(e), Class::Err(e)],
    }
}

fn s_connect_twice(b: &mut dyn Backend) -> Vec<Class> {
    let l = b.tcp().unwrap();
    l.jr_bind(b.addr(), 0).unwrap();
    l.jr_listen(8).unwrap();
    let port = l.jr_local_port().unwrap();
    let c = b.tcp().unwrap();
    vec![
        Class::of(&c.jr_connect(b.addr(), port)),
        Class::of(&c.jr_connect(b.addr(), port)),
    ]
}

fn s_connect_on_listener(b: &mut dyn Backend) -> Vec<Class> {
    let l = b.tcp().unwrap();
    l.jr_bind(b.addr(), 0).unwrap();
    l.jr_listen(8).unwrap();
    let port = l.jr_local_port().unwrap();
    vec![Class::of(&l.jr_connect(b.addr(), port))]
}

fn s_send_unconnected(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.tcp().unwrap();
    vec![Class::of(&s.jr_send(b"x"))]
}

fn s_recv_unconnected(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.tcp().unwrap();
    vec![Class::of(&s.jr_recv(16))]
}

fn s_recv_on_listener(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.tcp().unwrap();
    s.jr_bind(b.addr(), 0).unwrap();
    s.jr_listen(8).unwrap();
    vec![Class::of(&s.jr_recv(16))]
}

fn s_send_on_listener(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.tcp().unwrap();
    s.jr_bind(b.addr(), 0).unwrap();
    s.jr_listen(8).unwrap();
    vec![Class::of(&s.jr_send(b"x"))]
}

fn s_echo_roundtrip(b: &mut dyn Backend) -> Vec<Class> {
    let (client, server) = established(b).unwrap();
    let sent = client.jr_send(b"hello");
    let got = recv_exact(&server, 5);
    vec![
        Class::of(&sent),
        Class::of(&got),
        Class::check(got.as_deref().map(|d| d == b"hello").unwrap_or(false)),
    ]
}

fn s_recv_nb_empty(b: &mut dyn Backend) -> Vec<Class> {
    let (client, _server) = established(b).unwrap();
    client.jr_set_nonblocking(true).unwrap();
    vec![Class::of(&client.jr_recv(16))]
}

fn s_eof_after_peer_close(b: &mut dyn Backend) -> Vec<Class> {
    let (client, server) = established(b).unwrap();
    server.jr_close().unwrap();
    vec![Class::of_recv(&client.jr_recv(16))]
}

fn s_send_after_close(b: &mut dyn Backend) -> Vec<Class> {
    let (client, _server) = established(b).unwrap();
    client.jr_close().unwrap();
    vec![Class::of(&client.jr_send(b"x"))]
}

fn s_double_close(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.tcp().unwrap();
    vec![Class::of(&s.jr_close()), Class::of(&s.jr_close())]
}

fn s_udp_roundtrip(b: &mut dyn Backend) -> Vec<Class> {
    let rx = b.udp().unwrap();
    let port = rx.jr_bind(b.addr(), 0).unwrap();
    let tx = b.udp().unwrap();
    let sent = tx.jr_send_to(b"datagram", b.addr(), port);
    let got = rx.jr_recv_from(64);
    vec![
        Class::of(&sent),
        Class::of(&got),
        Class::check(got.as_ref().map(|(d, _, _)| d == b"datagram").unwrap_or(false)),
    ]
}

fn s_udp_truncation(b: &mut dyn Backend) -> Vec<Class> {
    let rx = b.udp().unwrap();
    let port = rx.jr_bind(b.addr(), 0).unwrap();
    let tx = b.udp().unwrap();
    tx.jr_send_to(&[7u8; 100], b.addr(), port).unwrap();
    let got = rx.jr_recv(10);
    vec![
        Class::of(&got),
        Class::check(got.map(|d| d.len()).unwrap_or(0) == 10),
    ]
}

fn s_udp_nb_empty(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.udp().unwrap();
    s.jr_bind(b.addr(), 0).unwrap();
    s.jr_set_nonblocking(true).unwrap();
    vec![Class::of(&s.jr_recv(16))]
}

fn s_udp_autobind_sendto(b: &mut dyn Backend) -> Vec<Class> {
    let rx = b.udp().unwrap();
    let port = rx.jr_bind(b.addr(), 0).unwrap();
    let tx = b.udp().unwrap();
    vec![Class::of(&tx.jr_send_to(b"x", b.addr(), port))]
}

fn s_udp_send_no_dest(b: &mut dyn Backend) -> Vec<Class> {
    let s = b.udp().unwrap();
    vec![Class::of(&s.jr_send(b"x"))]
}

fn s_udp_connect_send(b: &mut dyn Backend) -> Vec<Class> {
    let rx = b.udp().unwrap();
    let port = rx.jr_bind(b.addr(), 0).unwrap();
    let tx = b.udp().unwrap();
    let conn = tx.jr_connect(b.addr(), port);
    let sent = tx.jr_send(b"via-default-peer");
    let got = rx.jr_recv(64);
    vec![
        Class::of(&conn),
        Class::of(&sent),
        Class::check(got.as_deref().map(|d| d == b"via-default-peer").unwrap_or(false)),
    ]
}

fn s_nodelay_on_connected(b: &mut dyn Backend) -> Vec<Class> {
    let (client, _server) = established(b).unwrap();
    vec![Class::of(&client.jr_set_nodelay(true))]
}

fn s_nb_connect_poll_writable(b: &mut dyn Backend) -> Vec<Class> {
    let l = b.tcp().unwrap();
    l.jr_bind(b.addr(), 0).unwrap();
    l.jr_listen(8).unwrap();
    let c = b.tcp().unwrap();
    c.jr_set_nonblocking(true).unwrap();
    let first = c.jr_connect(b.addr(), l.jr_local_port().unwrap());
    let mut set = PollSet::new();
    set.jr_poll_ctl(&c, ready::WRITABLE);
    let events = set.jr_poll_wait(2000);
    let writable = events
        .iter()
        .any(|(s, f)| s.handle() == c.handle() && f & ready::WRITABLE != 0);
    vec![
        Class::of(&first),
        Class::check(writable),
        Class::check(c.jr_take_error().is_none()),
    ]
}

fn s_bulk_64k(b: &mut dyn Backend) -> Vec<Class> {
    let (client, server) = established(b).unwrap();
    let payload: Vec<u8> = (0..64 * 1024u32).map(|i| (i * 31 + 7) as u8).collect();
    let mut off = 0;
    while off < payload.len() {
        match client.jr_send(&payload[off..]) {
            Ok(n) => off += n,
            Err(e) => return vec![Class::Err(e)],
        }
    }
    let got = recv_exact(&server, payload.len());
    vec![
        Class::of(&got),
        Class::check(got.map(|d| d == payload).unwrap_or(false)),
    ]
}

fn s_accept_after_connect(b: &mut dyn Backend) -> Vec<Class> {
    let l = b.tcp().unwrap();
    l.jr_bind(b.addr(), 0).unwrap();
    l.jr_listen(8).unwrap();
    let c = b.tcp().unwrap();
    let conn = c.jr_connect(b.addr(), l.jr_local_port().unwrap());
    let acc = l.jr_accept();
    vec![Class::of(&conn), Class::of(&acc)]
}

const SCRIPTS: &[(&str, Script)] = &[
    ("tcp_socket_create", s_tcp_socket),
    ("udp_socket_create", s_udp_socket),
    ("bind_ephemeral", s_bind_ephemeral),
    ("bind_twice_same_socket", s_bind_twice),
    ("bind_port_conflict_tcp", s_bind_conflict_tcp),
    ("bind_port_conflict_udp", s_bind_conflict_udp),
    ("listen_without_bind", s_listen_without_bind),
    ("listen_on_udp", s_listen_on_udp),
    ("listen_twice", s_listen_twice),
    ("bind_after_listen", s_bind_after_listen),
    ("accept_on_non_listener", s_accept_non_listener),
    ("accept_nonblocking_empty", s_accept_nb_empty),
    ("connect_refused", s_connect_refused),
    ("connect_nonblocking_in_progress", s_connect_nb_in_progress),
    ("connect_accept", s_connect_accept),
    ("connect_twice", s_connect_twice),
    ("connect_on_listener", s_connect_on_listener),
    ("send_unconnected_tcp", s_send_unconnected),
    ("recv_unconnected_tcp", s_recv_unconnected),
    ("recv_on_listener", s_recv_on_listener),
    ("send_on_listener", s_send_on_listener),
    ("echo_roundtrip", s_echo_roundtrip),
    ("recv_nonblocking_empty", s_recv_nb_empty),
    ("eof_after_peer_close", s_eof_after_peer_close),
    ("send_after_close", s_send_after_close),
    ("double_close", s_double_close),
    ("udp_roundtrip", s_udp_roundtrip),
    ("udp_truncation", s_udp_truncation),
    ("udp_nonblocking_empty", s_udp_nb_empty),
    ("udp_autobind_sendto", s_udp_autobind_sendto),
    ("udp_send_no_dest", s_udp_send_no_dest),
    ("udp_connect_send", s_udp_connect_send),
    ("nodelay_on_connected", s_nodelay_on_connected),
    ("nb_connect_poll_writable", s_nb_connect_poll_writable),
    ("bulk_64k", s_bulk_64k),
    ("accept_after_connect", s_accept_after_connect),
];

pub fn scripts() -> &'static [(&'static str, Script)] {
    SCRIPTS
}

pub fn script_names() -> Vec<&'static str> {
    SCRIPTS.iter().map(|(n, _)| *n).collect()
}

pub fn run_script(name: &str, backend: &mut dyn Backend) -> Vec<Class> {
    let (_, f) = SCRIPTS
        .iter()
        .find(|(n, _)| *n == name)
        .unwrap_or_else(|| panic!("unknown script {name}"));
    f(backend)
}
