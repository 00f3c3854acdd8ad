//! Control-channel transports between a client and the service: an
//! in-process queue pair for embedded/co-simulated clients, and a Unix
//! domain socket stream for separate processes.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::os::unix::net::UnixStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use crate::ipc::{Doorbell, SharedRegion, CONTROL_FRAME_LEN};

pub type Frame = [u8; CONTROL_FRAME_LEN];

/// Service-side view of one client's control channel.
pub trait Conduit: Send {
    /// Next complete frame, if any. `Err(())` means the channel is dead
    /// (closed or framing violation) and the session must be torn down.
    fn try_recv(&mut self) -> Result<Option<Frame>, ()>;
    /// Queues a frame toward the client. Returns false if the channel died.
    fn send(&mut self, frame: &Frame) -> bool;
}

type FrameQueue = Arc<Mutex<VecDeque<Frame>>>;

/// Client-side handle for an in-process attachment: a queue pair, the
/// doorbell, and a cell the service fills with the shared region at HELLO.
#[derive(Clone)]
pub struct InProcPort {
    pub to_service: FrameQueue,
    pub from_service: FrameQueue,
    pub doorbell: Doorbell,
    pub region: Arc<Mutex<Option<SharedRegion>>>,
    pub closed: Arc<AtomicBool>,
}

impl InProcPort {
    pub fn send(&self, frame: &Frame) {
        self.to_service.lock().unwrap().push_back(*frame);
    }

    pub fn try_recv(&self) -> Option<Frame> {
        self.from_service.lock().unwrap().pop_front()
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }
}

pub struct InProcConduit {
    from_client: FrameQueue,
    to_client: FrameQueue,
    closed: Arc<AtomicBool>,
}

impl InProcConduit {
    /// Builds the matched (service conduit, client port) pair.
    pub fn pair(doorbell: Doorbell) -> (InProcConduit, InProcPort) {
        let a: FrameQueue = Arc::default();
        let b: FrameQueue = Arc::default();
        let closed = Arc::new(AtomicBool::new(false));
        let region = Arc::new(Mutex::new(None));
        let conduit = InProcConduit {
            from_client: a.clone(),
            to_client: b.clone(),
            closed: closed.clone(),
        };
        let port = InProcPort {
            to_service: a,
            from_service: b,
            doorbell,
            region,
            closed,
        };
        (conduit, port)
    }

    /// The region cell shared with the client port.
    pub fn region_cell(port: &InProcPort) -> Arc<Mutex<Option<SharedRegion>>> {
        port.region.clone()
    }
}

impl Drop for InProcConduit {
    fn drop(&mut self) {
        self.closed.store(true, Ordering::Release);
    }
}

impl Conduit for InProcConduit {
    fn try_recv(&mut self) -> Result<Option<Frame>, ()> {
        Ok(self.from_client.lock().unwrap().pop_front())
    }

    fn send(&mut self, frame: &Frame) -> bool {
        self.to_client.lock().unwrap().push_back(*frame);
        true
    }
}

/// Nonblocking Unix-socket conduit with partial-frame buffering on both
/// directions. Frames are exactly 64 bytes on the wire, no extra framing.
pub struct UdsConduit {
    stream: UnixStream,
    in_buf: Vec<u8>,
    out_buf: VecDeque<u8>,
    dead: bool,
}

impl UdsConduit {
    pub fn new(stream: UnixStream) -> std::io::Result<UdsConduit> {
        stream.set_nonblocking(true)?;
        Ok(UdsConduit {
            stream,
            in_buf: Vec::new(),
            out_buf: VecDeque::new(),
            dead: false,
        })
    }

    fn flush_out(&mut self) {
        while !self.out_buf.is_empty() {
            let (head, _) = self.out_buf.as_slices();
            match self.stream.write(head) {
                Ok(0) => {
                    self.dead = true;
                    return;
                }
                Ok(n) => {
                    self.out_buf.drain(..n);
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => return,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(_) => {
                    self.dead = true;
                    return;
                }
            }
        }
    }
}

impl Conduit for UdsConduit {
    fn try_recv(&mut self) -> Result<Option<Frame>, ()> {
        if self.dead {
            return Err(());
        }
        self.flush_out();
        let mut chunk = [0u8; 512];
        loop {
            if self.in_buf.len() >= CONTROL_FRAME_LEN {
                let mut frame = [0u8; CONTROL_FRAME_LEN];
                frame.copy_from_slice(&self.in_buf[..CONTROL_FRAME_LEN]);
                self.in_buf.drain(..CONTROL_FRAME_LEN);
                return Ok(Some(frame));
            }
            match self.stream.read(&mut chunk) {
                Ok(0) => {
                    self.dead = true;
                    return Err(());
                }
                Ok(n) => self.in_buf.extend_from_slice(&chunk[..n]),
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => return Ok(None),
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(_) => {
                    self.dead = true;
                    return Err(());
                }
            }
        }
    }

    fn send(&mut self, frame: &Frame) -> bool {
        if self.dead {
            return false;
        }
        self.out_buf.extend(frame.iter());
        self.flush_out();
        !self.dead
    }
}
