//! Attachment to the service: control-channel wiring, the event pump that
//! routes EVENT frames to per-socket queues, and the stack handle sockets
//! hang off.

use std::collections::{HashMap, VecDeque};
use std::os::fd::{AsRawFd, RawFd};
use std::os::unix::net::UnixStream;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use crate::ipc::{ControlMessage, Doorbell, EventBody, MsgType, SharedRegion};
use crate::service::{Conduit, InProcPort, UdsConduit, PROTOCOL_VERSION};
use crate::util::log;

use super::policy::Cidr;
use super::socket::{ClientSocket, Protocol};
use super::{SockErr, SockResult};

/// How long a blocking wait naps before re-checking rings and events. The
/// doorbell (in-process) or control-stream readability (cross-process)
/// usually wakes it far sooner; the tick only bounds the rare race where an
/// edge was consumed between the check and the wait.
pub(crate) const WAIT_TICK: Duration = Duration::from_millis(5);

const HELLO_TIMEOUT: Duration = Duration::from_secs(5);

pub struct StackOptions {
    pub service_path: Option<PathBuf>,
    /// When the service is unreachable: true → kernel path, false → error.
    pub fallback: bool,
    /// Force the kernel path for every socket.
    pub disable: bool,
    pub prefixes: Vec<Cidr>,
}

impl StackOptions {
    pub fn from_env() -> StackOptions {
        let disable = std::env::var("JOYRIDE_DISABLE").map(|v| v == "1").unwrap_or(false);
        let service_path = std::env::var_os("JOYRIDE_SERVICE_PATH").map(PathBuf::from);
        let prefixes = std::env::var("JOYRIDE_PREFIXES")
            .ok()
            .map(|s| Cidr::parse_list(&s).unwrap_or_default())
            .unwrap_or_default();
        StackOptions {
            service_path,
            fallback: true,
            disable,
            prefixes,
        }
    }
}

enum Wire {
    Port(InProcPort),
    Uds(UdsConduit),
}

impl Wire {
    fn send(&mut self, frame: &[u8; 64]) -> bool {
        match self {
            Wire::Port(p) => {
                if p.is_closed() {
                    return false;
                }
                p.send(frame);
                true
            }
            Wire::Uds(c) => c.send(frame),
        }
    }

    fn try_recv(&mut self) -> Result<Option<[u8; 64]>, ()> {
        match self {
            Wire::Port(p) => {
                if let Some(f) = p.try_recv() {
                    return Ok(Some(f));
                }
                if p.is_closed() {
                    return Err(());
                }
                Ok(None)
            }
            Wire::Uds(c) => c.try_recv(),
        }
    }
}

/// Wakeup source for blocking waits, usable without holding the control
/// lock.
pub(crate) enum Wake {
    Bell(Doorbell),
    Fd(RawFd),
}

impl Wake {
    pub(crate) fn wait(&self, timeout: Duration) {
        match self {
            Wake::Bell(bell) => {
                bell.wait(timeout);
            }
            Wake::Fd(fd) => {
                let mut pfd = libc::pollfd {
                    fd: *fd,
                    events: libc::POLLIN,
                    revents: 0,
                };
                let ms = timeout.as_millis().min(i32::MAX as u128) as i32;
                unsafe {
                    libc::poll(&mut pfd, 1, ms);
                }
            }
        }
    }
}

/// Control-channel state: the wire plus routed-but-unconsumed events.
pub(crate) struct Ctl {
    wire: Wire,
    replies: HashMap<u32, VecDeque<EventBody>>,
    readiness: HashMap<u32, u32>,
    /// SOCKET replies carry a socket id the client has not seen yet, so
    /// they cannot be routed by id: (sid, token, slot).
    socket_replies: VecDeque<(u32, [u8; 16], u32)>,
    pub(crate) dead: bool,
}

impl Ctl {
    /// Drains the wire, routing Readiness into the cache and everything
    /// else into the per-socket queues. A malformed frame kills the stack.
    pub(crate) fn pump(&mut self) {
        if self.dead {
            return;
        }
        loop {
            match self.wire.try_recv() {
                Ok(Some(frame)) => {
                    let parsed = ControlMessage::decode(&frame)
                        .and_then(|m| m.event().map(|e| (m.socket_id, e)));
                    match parsed {
                        Ok((sid, EventBody::Readiness { flags })) => {
                            self.readiness.insert(sid, flags);
                        }
                        Ok((sid, EventBody::SocketOk { slot })) => {
                            let token = ControlMessage::decode(&frame)
                                .map(|m| m.token)
                                .unwrap_or([0u8; 16]);
                            self.socket_replies.push_back((sid, token, slot));
                        }
                        Ok((sid, ev)) => {
                            self.replies.entry(sid).or_default().push_back(ev);
                        }
                        Err(_) => {
                            self.dead = true;
                            return;
                        }
                    }
                }
                Ok(None) => return,
                Err(()) => {
                    self.dead = true;
                    return;
                }
            }
        }
    }

    pub(crate) fn send(&mut self, msg: &ControlMessage) -> SockResult<()> {
        if self.dead || !self.wire.send(&msg.encode()) {
            self.dead = true;
            return Err(SockErr::ConnReset);
        }
        Ok(())
    }

    pub(crate) fn pop_event(&mut self, sid: u32) -> Option<EventBody> {
        self.replies.get_mut(&sid).and_then(|q| q.pop_front())
    }

    pub(crate) fn pop_socket_reply(&mut self) -> Option<(u32, [u8; 16], u32)> {
        self.socket_replies.pop_front()
    }

    pub(crate) fn readiness(&self, sid: u32) -> u32 {
        self.readiness.get(&sid).copied().unwrap_or(0)
    }

    pub(crate) fn forget(&mut self, sid: u32) {
        self.replies.remove(&sid);
        self.readiness.remove(&sid);
    }
}

pub(crate) struct StackShared {
    pub(crate) ctl: Mutex<Ctl>,
    pub(crate) wake: Wake,
    pub(crate) region: SharedRegion,
    pub(crate) client_id: u32,
}

impl StackShared {
    pub(crate) fn lock(&self) -> MutexGuard<'_, Ctl> {
        self.ctl.lock().unwrap()
    }
}

/// Handle to an attached (or kernel-only) stack. Cloning shares the
/// attachment.
#[derive(Clone)]
pub struct JrStack {
    pub(crate) shared: Option<Arc<StackShared>>,
    pub(crate) prefixes: Arc<Vec<Cidr>>,
}

impl JrStack {
    /// Attaches per policy: explicit disable or an unreachable service
    /// yields a kernel-only stack (or an error when fallback is off).
    pub fn attach(opts: StackOptions) -> SockResult<JrStack> {
        if opts.disable {
            return Ok(JrStack::kernel_only());
        }
        let Some(path) = &opts.service_path else {
            return if opts.fallback {
                Ok(JrStack::kernel_only())
            } else {
                Err(SockErr::ConnRefused)
            };
        };
        match JrStack::attach_uds(path, opts.prefixes.clone()) {
            Ok(stack) => Ok(stack),
            Err(_) if opts.fallback => Ok(JrStack::kernel_only()),
            Err(e) => Err(e),
        }
    }

    pub fn from_env() -> SockResult<JrStack> {
        JrStack::attach(StackOptions::from_env())
    }

    /// A stack with no service: every socket takes the kernel path.
    pub fn kernel_only() -> JrStack {
        JrStack {
            shared: None,
            prefixes: Arc::new(Vec::new()),
        }
    }

    /// Attaches over a Unix stream at the service's rendezvous path.
    pub fn attach_uds(path: &Path, prefixes: Vec<Cidr>) -> SockResult<JrStack> {
        let stream = UnixStream::connect(path).map_err(|_| SockErr::ConnRefused)?;
        let fd = stream.as_raw_fd();
        let conduit = UdsConduit::new(stream).map_err(|_| SockErr::Io)?;
        let mut ctl = Ctl {
            wire: Wire::Uds(conduit),
            replies: HashMap::new(),
            readiness: HashMap::new(),
            socket_replies: VecDeque::new(),
            dead: false,
        };
        let wake = Wake::Fd(fd);
        let client_id = hello(&mut ctl, &wake)?;
        let region_file = {
            let mut s = path.as_os_str().to_os_string();
            s.push(format!(".region.{client_id}"));
            PathBuf::from(s)
        };
        let region = SharedRegion::open_file(&region_file).map_err(|e| {
            log("warn", "region_open_failed", &[("err", e.to_string())]);
            SockErr::Proto
        })?;
        Ok(JrStack {
            shared: Some(Arc::new(StackShared {
                ctl: Mutex::new(ctl),
                wake,
                region,
                client_id,
            })),
            prefixes: Arc::new(prefixes),
        })
    }

    /// Attaches through an in-process port obtained from
    /// `Service::attach_inproc`. The service loop must already be running.
    pub fn attach_port(port: InProcPort) -> SockResult<JrStack> {
        let wake = Wake::Bell(port.doorbell.clone());
        let region_cell = port.region.clone();
        let mut ctl = Ctl {
            wire: Wire::Port(port),
            replies: HashMap::new(),
            readiness: HashMap::new(),
            socket_replies: VecDeque::new(),
            dead: false,
        };
        let client_id = hello(&mut ctl, &wake)?;
        let region = region_cell
            .lock()
            .unwrap()
            .clone()
            .ok_or(SockErr::Proto)?;
        Ok(JrStack {
            shared: Some(Arc::new(StackShared {
                ctl: Mutex::new(ctl),
                wake,
                region,
                client_id,
            })),
            prefixes: Arc::new(Vec::new()),
        })
    }

    pub fn is_joyride(&self) -> bool {
        self.shared.is_some()
    }

    pub fn client_id(&self) -> Option<u32> {
        self.shared.as_ref().map(|s| s.client_id)
    }

    pub fn jr_socket(&self, proto: Protocol) -> SockResult<ClientSocket> {
        ClientSocket::open(self, proto)
    }
}

fn hello(ctl: &mut Ctl, wake: &Wake) -> SockResult<u32> {
    let msg = ControlMessage::new(MsgType::Hello, 0, [0u8; 16]).with_u32(PROTOCOL_VERSION);
    ctl.send(&msg)?;
    let deadline = Instant::now() + HELLO_TIMEOUT;
    loop {
        ctl.pump();
        if let Some(ev) = ctl.pop_event(0) {
            return match ev {
                EventBody::HelloOk { client_id, .. } => Ok(client_id),
                EventBody::Err { code } => Err(SockErr::from_code(code)),
                _ => Err(SockErr::Proto),
            };
        }
        if ctl.dead || Instant::now() >= deadline {
            return Err(SockErr::ConnRefused);
        }
        wake.wait(WAIT_TICK);
    }
}
