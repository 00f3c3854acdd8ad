//! Standalone daemon mode: a Unix-socket attach point for out-of-process
//! clients plus the service loop, run on the calling thread.

use std::io;
use std::os::unix::net::UnixListener;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::{Service, ServiceConfig};
use crate::linklayer::{create_mem_link_pair, create_udp_tunnel_link, Link, LinkConfig};
use crate::util::{log, now_micros};

#[derive(Debug, Clone)]
pub enum LinkSpec {
    /// Self-contained in-memory link: only loopback (own-IP) traffic flows.
    Mem,
    /// UDP tunnel to a peer service instance.
    Udp { local: String, peer: String },
}

impl LinkSpec {
    /// Parses `mem` or `udp:<local>:<peer>` where each endpoint is
    /// `host:port`.
    pub fn parse(s: &str) -> Result<LinkSpec, String> {
        if s == "mem" {
            return Ok(LinkSpec::Mem);
        }
        if let Some(rest) = s.strip_prefix("udp:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() == 4 {
                return Ok(LinkSpec::Udp {
                    local: format!("{}:{}", parts[0], parts[1]),
                    peer: format!("{}:{}", parts[2], parts[3]),
                });
            }
            return Err("udp link spec must be udp:<host>:<port>:<host>:<port>".into());
        }
        Err(format!("unknown link spec: {s}"))
    }
}

pub struct DaemonConfig {
    pub service: ServiceConfig,
    pub link_spec: LinkSpec,
    pub link: LinkConfig,
    pub socket_path: PathBuf,
}

pub fn build_link(spec: &LinkSpec, cfg: LinkConfig) -> Result<Box<dyn Link>, String> {
    match spec {
        LinkSpec::Mem => {
            let (a, _b) = create_mem_link_pair(cfg).map_err(|e| e.to_string())?;
            Ok(Box::new(a))
        }
        LinkSpec::Udp { local, peer } => {
            let link = create_udp_tunnel_link(local.as_str(), peer.as_str(), cfg)
                .map_err(|e| e.to_string())?;
            Ok(Box::new(link))
        }
    }
}

/// Runs the daemon until `stop` flips (or forever). Blocks the caller.
pub fn run_daemon(cfg: DaemonConfig, stop: Option<Arc<AtomicBool>>) -> io::Result<()> {
    let link = build_link(&cfg.link_spec, cfg.link.clone())
        .map_err(io::Error::other)?;
    let mut service = Service::new(cfg.service, link);
    let _ = std::fs::remove_file(&cfg.socket_path);
    let listener = UnixListener::bind(&cfg.socket_path)?;
    listener.set_nonblocking(true)?;
    log(
        "info",
        "daemon_started",
        &[
            ("path", cfg.socket_path.display().to_string()),
            ("ip", service.config().ip.to_string()),
        ],
    );
    let tick = Duration::from_micros(service.config().tick_us);
    loop {
        if let Some(flag) = &stop {
            if flag.load(Ordering::Relaxed) {
                break;
            }
        }
        match listener.accept() {
            Ok((stream, _)) => {
                log("info", "client_attached", &[]);
                service.attach_uds(stream, cfg.socket_path.clone());
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {}
            Err(e) => log("warn", "accept_failed", &[("err", e.to_string())]),
        }
        let work = service.iteration(now_micros());
        if work == 0 {
            std::thread::sleep(tick);
        }
    }
    let _ = std::fs::remove_file(&cfg.socket_path);
    log("info", "daemon_stopped", &[]);
    Ok(())
}
