//! Path selection: joyride when the service is live and the destination is
//! inside the configured prefixes, kernel otherwise.

use std::net::Ipv4Addr;

/// An IPv4 prefix in `a.b.c.d/len` form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cidr {
    pub addr: Ipv4Addr,
    pub len: u8,
}

impl Cidr {
    pub fn parse(s: &str) -> Result<Cidr, String> {
        let (addr, len) = match s.split_once('/') {
            Some((a, l)) => (a, l.parse::<u8>().map_err(|e| e.to_string())?),
            None => (s, 32),
        };
        if len > 32 {
            return Err(format!("prefix length {len} out of range"));
        }
        let addr: Ipv4Addr = addr.trim().parse().map_err(|_| format!("bad address in {s:?}"))?;
        Ok(Cidr { addr, len })
    }

    /// Comma-separated list, as carried by `JOYRIDE_PREFIXES`.
    pub fn parse_list(s: &str) -> Result<Vec<Cidr>, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(Cidr::parse)
            .collect()
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        if self.len == 0 {
            return true;
        }
        let mask = u32::MAX << (32 - self.len);
        (u32::from(self.addr) & mask) == (u32::from(ip) & mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Joyride,
    Kernel,
}

#[derive(Debug, Clone, Default)]
pub struct RoutePolicy {
    /// `JOYRIDE_DISABLE=1`: kernel for everything.
    pub disable: bool,
    pub service_live: bool,
    /// Empty = all destinations eligible for the joyride path.
    pub prefixes: Vec<Cidr>,
}

/// Deterministic path decision for one destination.
pub fn fallback_route(dst: Ipv4Addr, policy: &RoutePolicy) -> Route {
    if policy.disable || !policy.service_live {
        return Route::Kernel;
    }
    if policy.prefixes.is_empty() || policy.prefixes.iter().any(|p| p.contains(dst)) {
        Route::Joyride
    } else {
        Route::Kernel
    }
}
