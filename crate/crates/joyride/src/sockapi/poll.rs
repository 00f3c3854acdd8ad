//! Level-triggered readiness multiplexing over a mixed set of joyride and
//! kernel sockets. Waiting uses the stack doorbell (or control-stream
//! readability) plus a bounded tick so neither source can be starved.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use super::socket::ClientSocket;
use super::stack::WAIT_TICK;
use super::{SockErr, SockResult};

pub struct PollSet {
    entries: BTreeMap<u64, (ClientSocket, u32)>,
}

impl Default for PollSet {
    fn default() -> Self {
        PollSet::new()
    }
}

impl PollSet {
    pub fn new() -> PollSet {
        PollSet {
            entries: BTreeMap::new(),
        }
    }

    /// Registers or re-arms `sock` with the given interest flags
    /// (`ipc::control::ready` values).
    pub fn jr_poll_ctl(&mut self, sock: &ClientSocket, interest: u32) {
        self.entries
            .insert(sock.handle(), (sock.clone(), interest));
    }

    pub fn jr_poll_del(&mut self, sock: &ClientSocket) -> SockResult<()> {
        match self.entries.remove(&sock.handle()) {
            Some(_) => Ok(()),
            None => Err(SockErr::NotFound),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ready sockets with their current readiness. `timeout_ms` 0 = pure
    /// poll, negative = wait forever.
    pub fn jr_poll_wait(&mut self, timeout_ms: i64) -> Vec<(ClientSocket, u32)> {
        let deadline = if timeout_ms < 0 {
            None
        } else {
            Some(Instant::now() + Duration::from_millis(timeout_ms as u64))
        };
        loop {
            let mut ready = Vec::new();
            for (sock, interest) in self.entries.values() {
                let flags = sock.readiness(*interest);
                if flags != 0 {
                    ready.push((sock.clone(), flags));
                }
            }
            if !ready.is_empty() {
                return ready;
            }
            let remaining = match deadline {
                None => WAIT_TICK,
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Vec::new();
                    }
                    (d - now).min(WAIT_TICK)
                }
            };
            self.wait_any(remaining);
        }
    }

    /// One bounded nap on whichever wake source is available. With kernel
    /// fds in the set we poll(2) them so a kernel event wakes us early;
    /// otherwise the stack doorbell (or the tick) does.
    fn wait_any(&self, timeout: Duration) {
        let fds: Vec<i32> = self
            .entries
            .values()
            .filter_map(|(s, _)| s.kernel_fd())
            .collect();
        if !fds.is_empty() {
            let mut pfds: Vec<libc::pollfd> = fds
                .iter()
                .map(|&fd| libc::pollfd {
                    fd,
                    events: libc::POLLIN | libc::POLLOUT,
                    revents: 0,
                })
                .collect();
            let ms = timeout.as_millis().min(i32::MAX as u128) as i32;
            unsafe {
                libc::poll(pfds.as_mut_ptr(), pfds.len() as libc::nfds_t, ms);
            }
            return;
        }
        if let Some(shared) = self
            .entries
            .values()
            .find_map(|(s, _)| s.wake_shared())
        {
            shared.wake.wait(timeout);
            return;
        }
        std::thread::sleep(timeout);
    }
}
