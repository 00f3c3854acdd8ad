//! Client-side socket library: the POSIX-shaped call surface over the
//! service's IPC protocol, with an epoll-style readiness set and a kernel
//! fallback path. Application code is identical on either path; only the
//! attach step decides where a socket lives.

mod conformance;
mod kernel;
mod poll;
mod policy;
mod socket;
mod stack;

pub use conformance::{run_script, script_names, scripts, Backend, Class, JoyBackend, KernelBackend};
pub use poll::PollSet;
pub use policy::{fallback_route, Cidr, Route, RoutePolicy};
pub use socket::{ClientSocket, Protocol};
pub use stack::{JrStack, StackOptions};

use crate::ipc::errno;

/// Socket-call failure classes. Both the joyride path and the kernel path
/// collapse their native error codes into this one enum so that conformance
/// scripts can compare the two directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SockErr {
    WouldBlock,
    InProgress,
    AddrInUse,
    ConnRefused,
    ConnReset,
    TimedOut,
    /// EINVAL-shaped sequencing violations (bind twice, accept on a
    /// non-listener, ...).
    Invalid,
    NotConn,
    IsConn,
    /// EPIPE: send on a socket with no usable peer.
    Pipe,
    /// Operation on a closed handle (EBADF / double close).
    Closed,
    /// EDESTADDRREQ: UDP send with no destination.
    DestRequired,
    MsgSize,
    TooManyOpen,
    Unsupported,
    NotFound,
    Proto,
    /// Anything that does not map onto a dedicated class.
    Io,
}

pub type SockResult<T> = Result<T, SockErr>;

impl SockErr {
    /// From the service's wire error codes.
    pub fn from_code(code: u32) -> SockErr {
        match code {
            errno::EAGAIN => SockErr::WouldBlock,
            errno::EINPROGRESS => SockErr::InProgress,
            errno::EADDRINUSE => SockErr::AddrInUse,
            errno::ECONNREFUSED => SockErr::ConnRefused,
            errno::ECONNRESET => SockErr::ConnReset,
            errno::ETIMEDOUT => SockErr::TimedOut,
            errno::EINVAL => SockErr::Invalid,
            errno::ENOTCONN => SockErr::NotConn,
            errno::EISCONN => SockErr::IsConn,
            errno::EPIPE => SockErr::Pipe,
            errno::EBADF => SockErr::Closed,
            errno::EMFILE => SockErr::TooManyOpen,
            errno::EOPNOTSUPP => SockErr::Unsupported,
            errno::ENOENT => SockErr::NotFound,
            errno::EPROTO => SockErr::Proto,
            _ => SockErr::Io,
        }
    }

    /// From the OS errno of a failed kernel-path call.
    pub fn from_os(e: i32) -> SockErr {
        match e {
            libc::EAGAIN => SockErr::WouldBlock,
            libc::EINPROGRESS | libc::EALREADY => SockErr::InProgress,
            libc::EADDRINUSE => SockErr::AddrInUse,
            libc::ECONNREFUSED => SockErr::ConnRefused,
            libc::ECONNRESET => SockErr::ConnReset,
            libc::ETIMEDOUT => SockErr::TimedOut,
            libc::EINVAL => SockErr::Invalid,
            libc::ENOTCONN => SockErr::NotConn,
            libc::EISCONN => SockErr::IsConn,
            libc::EPIPE => SockErr::Pipe,
            libc::EBADF => SockErr::Closed,
            libc::EDESTADDRREQ => SockErr::DestRequired,
            libc::EMSGSIZE => SockErr::MsgSize,
            libc::EMFILE | libc::ENFILE => SockErr::TooManyOpen,
            libc::EOPNOTSUPP => SockErr::Unsupported,
            libc::ENOENT => SockErr::NotFound,
            libc::EPROTO => SockErr::Proto,
            _ => SockErr::Io,
        }
    }
}

#[cfg(test)]
mod tests;
