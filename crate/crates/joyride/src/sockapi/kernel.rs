//! Kernel fallback path: thin raw-fd wrappers whose error surface is
//! collapsed into the same classes as the joyride path.

use std::io;
use std::mem;
use std::net::Ipv4Addr;
use std::os::fd::RawFd;

use super::{Protocol, SockErr, SockResult};

pub(crate) struct KSock {
    fd: RawFd,
}

fn os_err() -> SockErr {
    SockErr::from_os(io::Error::last_os_error().raw_os_error().unwrap_or(0))
}

fn sockaddr(addr: Ipv4Addr, port: u16) -> libc::sockaddr_in {
    libc::sockaddr_in {
        sin_family: libc::AF_INET as libc::sa_family_t,
        sin_port: port.to_be(),
        sin_addr: libc::in_addr {
            s_addr: u32::from(addr).to_be(),
        },
        sin_zero: [0; 8],
    }
}

fn addr_of(sa: &libc::sockaddr_in) -> (Ipv4Addr, u16) {
    (
        Ipv4Addr::from(u32::from_be(sa.sin_addr.s_addr)),
        u16::from_be(sa.sin_port),
    )
}

impl KSock {
    pub(crate) fn open(proto: Protocol) -> SockResult<KSock> {
        let ty = match proto {
            Protocol::Tcp => libc::SOCK_STREAM,
            Protocol::Udp => libc::SOCK_DGRAM,
        };
        let fd = unsafe { libc::socket(libc::AF_INET, ty | libc::SOCK_CLOEXEC, 0) };
        if fd < 0 {
            return Err(os_err());
        }
        Ok(KSock { fd })
    }

    pub(crate) fn raw_fd(&self) -> RawFd {
        self.fd
    }

    pub(crate) fn bind(&self, addr: Ipv4Addr, port: u16) -> SockResult<u16> {
        let sa = sockaddr(addr, port);
        let rc = unsafe {
            libc::bind(
                self.fd,
                &sa as *const _ as *const libc::sockaddr,
                mem::size_of::<libc::sockaddr_in>() as libc::socklen_t,
            )
        };
        if rc < 0 {
            return Err(os_err());
        }
        self.local_port()
    }

    pub(crate) fn local_port(&self) -> SockResult<u16> {
        let mut sa: libc::sockaddr_in = unsafe { mem::zeroed() };
        let mut len = mem::size_of::<libc::sockaddr_in>() as libc::socklen_t;
        let rc = unsafe {
            libc::getsockname(self.fd, &mut sa as *mut _ as *mut libc::sockaddr, &mut len)
        };
        if rc < 0 {
            return Err(os_err());
        }
        Ok(addr_of(&sa).1)
    }

    pub(crate) fn listen(&self, backlog: u32) -> SockResult<()> {
        let rc = unsafe { libc::listen(self.fd, backlog.min(1024) as i32) };
        if rc < 0 {
            return Err(os_err());
        }
        Ok(())
    }

    pub(crate) fn accept(&self) -> SockResult<(KSock, Ipv4Addr, u16)> {
        let mut sa: libc::sockaddr_in = unsafe { mem::zeroed() };
        let mut len = mem::size_of::<libc::sockaddr_in>() as libc::socklen_t;
        let fd = unsafe {
            libc::accept4(
                self.fd,
                &mut sa as *mut _ as *mut libc::sockaddr,
                &mut len,
                libc::SOCK_CLOEXEC,
            )
        };
        if fd < 0 {
            return Err(os_err());
        }
        let (ip, port) = addr_of(&sa);
        Ok((KSock { fd }, ip, port))
    }

    pub(crate) fn connect(&self, addr: Ipv4Addr, port: u16) -> SockResult<()> {
        let sa = sockaddr(addr, port);
        let rc = unsafe {
            libc::connect(
                self.fd,
                &sa as *const _ as *const libc::sockaddr,
                mem::size_of::<libc::sockaddr_in>() as libc::socklen_t,
            )
        };
        if rc < 0 {
            return Err(os_err());
        }
        Ok(())
    }

    pub(crate) fn send(&self, data: &[u8]) -> SockResult<usize> {
        let n = unsafe {
            libc::send(
                self.fd,
                data.as_ptr() as *const libc::c_void,
                data.len(),
                libc::MSG_NOSIGNAL,
            )
        };
        if n < 0 {
            return Err(os_err());
        }
        Ok(n as usize)
    }

    pub(crate) fn send_to(&self, data: &[u8], addr: Ipv4Addr, port: u16) -> SockResult<usize> {
        let sa = sockaddr(addr, port);
        let n = unsafe {
            libc::sendto(
                self.fd,
                data.as_ptr() as *const libc::c_void,
                data.len(),
                libc::MSG_NOSIGNAL,
                &sa as *const _ as *const libc::sockaddr,
                mem::size_of::<libc::sockaddr_in>() as libc::socklen_t,
            )
        };
        if n < 0 {
            return Err(os_err());
        }
        Ok(n as usize)
    }

    pub(crate) fn recv(&self, max: usize) -> SockResult<Vec<u8>> {
        let mut buf = vec![0u8; max];
        let n = unsafe { libc::recv(self.fd, buf.as_mut_ptr() as *mut libc::c_void, max, 0) };
        if n < 0 {
            return Err(os_err());
        }
        buf.truncate(n as usize);
        Ok(buf)
    }

    pub(crate) fn recv_from(&self, max: usize) -> SockResult<(Vec<u8>, Ipv4Addr, u16)> {
        let mut buf = vec![0u8; max];
        let mut sa: libc::sockaddr_in = unsafe { mem::zeroed() };
        let mut len = mem::size_of::<libc::sockaddr_in>() as libc::socklen_t;
        let n = unsafe {
            libc::recvfrom(
                self.fd,
                buf.as_mut_ptr() as *mut libc::c_void,
                max,
                0,
                &mut sa as *mut _ as *mut libc::sockaddr,
                &mut len,
            )
        };
        if n < 0 {
            return Err(os_err());
        }
        buf.truncate(n as usize);
        let (ip, port) = addr_of(&sa);
        Ok((buf, ip, port))
    }

    pub(crate) fn set_nonblocking(&self, on: bool) -> SockResult<()> {
        let flags = unsafe { libc::fcntl(self.fd, libc::F_GETFL) };
        if flags < 0 {
            return Err(os_err());
        }
        let flags = if on {
            flags | libc::O_NONBLOCK
        } else {
            flags & !libc::O_NONBLOCK
        };
        if unsafe { libc::fcntl(self.fd, libc::F_SETFL, flags) } < 0 {
            return Err(os_err());
        }
        Ok(())
    }

    pub(crate) fn set_nodelay(&self, on: bool) -> SockResult<()> {
        let v: libc::c_int = on as libc::c_int;
        let rc = unsafe {
            libc::setsockopt(
                self.fd,
                libc::IPPROTO_TCP,
                libc::TCP_NODELAY,
                &v as *const _ as *const libc::c_void,
                mem::size_of::<libc::c_int>() as libc::socklen_t,
            )
        };
        if rc < 0 {
            return Err(os_err());
        }
        Ok(())
    }

    pub(crate) fn take_error(&self) -> Option<SockErr> {
        let mut v: libc::c_int = 0;
        let mut len = mem::size_of::<libc::c_int>() as libc::socklen_t;
        let rc = unsafe {
            libc::getsockopt(
                self.fd,
                libc::SOL_SOCKET,
                libc::SO_ERROR,
                &mut v as *mut _ as *mut libc::c_void,
                &mut len,
            )
        };
        if rc < 0 || v == 0 {
            None
        } else {
            Some(SockErr::from_os(v))
        }
    }

    /// Non-waiting readiness probe; `interest` is in `ipc::control::ready`
    /// flag terms.
    pub(crate) fn readiness(&self, interest: u32) -> u32 {
        use crate::ipc::control::ready;
        let mut events = 0i16;
        if interest & ready::READABLE != 0 {
            events |= libc::POLLIN;
        }
        if interest & ready::WRITABLE != 0 {
            events |= libc::POLLOUT;
        }
        let mut pfd = libc::pollfd {
            fd: self.fd,
            events,
            revents: 0,
        };
        let rc = unsafe { libc::poll(&mut pfd, 1, 0) };
        if rc <= 0 {
            return 0;
        }
        let mut flags = 0u32;
        if pfd.revents & libc::POLLIN != 0 {
            flags |= ready::READABLE;
        }
        if pfd.revents & libc::POLLOUT != 0 {
            flags |= ready::WRITABLE;
        }
        if pfd.revents & libc::POLLERR != 0 {
            flags |= ready::ERROR;
        }
        if pfd.revents & libc::POLLHUP != 0 {
            flags |= ready::HUP;
        }
        flags
    }
}

impl Drop for KSock {
    fn drop(&mut self) {
        unsafe {
            libc::close(self.fd);
        }
    }
}
