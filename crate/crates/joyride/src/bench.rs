//! ttcp-style benchmark harness: verified throughput runs over the joyride
//! or kernel transport, buffer sweeps, stream scaling, and an adverse-link
//! suite driving two in-process service instances over an impaired memory
//! link.
//!
//! Payload is a seeded PRNG stream, so content verification is a rolling
//! hash on both ends — O(1) memory at any transfer size — and the receiver
//! can recompute the expected hashes independently of the sender.

use std::collections::HashMap;
use std::io::Write;
use std::net::Ipv4Addr;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use crate::ipc::control::ready;
use crate::linklayer::{create_mem_link_pair, LinkConfig};
use crate::netcore::ether::MacAddr;
use crate::service::{Service, ServiceConfig, ServiceRunner};
use crate::sockapi::{ClientSocket, JrStack, PollSet, Protocol, SockErr};
use crate::util::DetRng;

pub const CSV_HEADER: &str = "transport,mode,buffer,streams,bytes,seconds,gbps,verified";

/// Fixed Ethernet wire overhead per frame: preamble+SFD (8) + FCS (4) +
/// inter-frame gap (12) + MAC headers are already in the frame size, so this
/// is the 38 bytes a 1500-byte MTU frame grows to 1538 by.
pub const ETH_WIRE_OVERHEAD: u64 = 38;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Send,
    Recv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Joyride,
    Kernel,
}

impl Transport {
    pub fn parse(s: &str) -> Result<Transport, String> {
        match s {
            "joyride" => Ok(Transport::Joyride),
            "kernel" => Ok(Transport::Kernel),
            _ => Err(format!("unknown transport: {s}")),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Transport::Joyride => "joyride",
            Transport::Kernel => "kernel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Blocking,
    NonBlocking,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode, String> {
        match s {
            "blocking" => Ok(Mode::Blocking),
            "nonblocking" => Ok(Mode::NonBlocking),
            _ => Err(format!("unknown mode: {s}")),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Blocking => "blocking",
            Mode::NonBlocking => "nonblocking",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub role: Role,
    pub transport: Transport,
    pub mode: Mode,
    /// Per-call buffer size in bytes; powers of two.
    pub buffer: usize,
    pub streams: usize,
    /// Bytes per stream.
    pub bytes: u64,
    /// Link scenario name; empty or "loopback" = a single clean service.
    pub scenario: String,
    pub seed: u64,
    /// Honored by non-blocking runs; a blocking run uses true blocking calls.
    pub deadline: Option<Duration>,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.buffer == 0 || !self.buffer.is_power_of_two() {
            return Err(format!("buffer {} must be a power of two", self.buffer));
        }
        if self.streams == 0 {
            return Err("streams must be >= 1".into());
        }
        if self.bytes == 0 {
            return Err("bytes must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StreamStat {
    pub bytes: u64,
    pub seconds: f64,
    pub hash: String,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub transport: Transport,
    pub mode: Mode,
    pub buffer: usize,
    pub streams: usize,
    /// Total bytes moved across all streams.
    pub bytes: u64,
    pub seconds: f64,
    pub verified: bool,
    pub per_stream: Vec<StreamStat>,
    /// Hash over the sorted per-stream content hashes.
    pub hash: String,
}

impl BenchResult {
    pub fn gbps(&self) -> f64 {
        8.0 * self.bytes as f64 / self.seconds / 1e9
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.4},{}",
            self.transport.as_str(),
            self.mode.as_str(),
            self.buffer,
            self.streams,
            self.bytes,
            self.seconds,
            self.gbps(),
            self.verified
        )
    }
}

pub fn write_csv(path: &Path, rows: &[BenchResult]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(f, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Packets per second a link sustains at `rate_bps` with `frame_bytes`
/// frames.
pub fn pps_calc(rate_bps: f64, frame_bytes: u64) -> u64 {
    assert!(rate_bps > 0.0 && frame_bytes > 0);
    (rate_bps / (8.0 * frame_bytes as f64)) as u64
}

/// Companion figure counting the 38 bytes of on-wire overhead per frame.
pub fn pps_with_overhead(rate_bps: f64, frame_bytes: u64) -> u64 {
    pps_calc(rate_bps, frame_bytes + ETH_WIRE_OVERHEAD)
}

// ---------------------------------------------------------------------------
// Environments

/// Stacks for both roles plus the address the receiver binds and the sender
/// dials. Service instances, when any, live on background runner threads.
pub struct BenchEnv {
    pub send_stack: JrStack,
    pub recv_stack: JrStack,
    pub recv_addr: Ipv4Addr,
    _runners: Vec<ServiceRunner>,
}

impl BenchEnv {
    pub fn for_config(cfg: &BenchConfig) -> Result<BenchEnv, String> {
        match cfg.transport {
            Transport::Kernel => Ok(BenchEnv::kernel()),
            Transport::Joyride => match cfg.scenario.as_str() {
                "" | "loopback" => BenchEnv::joyride_loopback(cfg.seed),
                name => {
                    let link = scenario_link(name, cfg.seed)
                        .ok_or_else(|| format!("unknown scenario: {name}"))?;
                    BenchEnv::joyride_pair(link)
                }
            },
        }
    }

    pub fn kernel() -> BenchEnv {
        BenchEnv {
            send_stack: JrStack::kernel_only(),
            recv_stack: JrStack::kernel_only(),
            recv_addr: Ipv4Addr::LOCALHOST,
            _runners: Vec::new(),
        }
    }

    /// One service; traffic hairpins through its loopback path.
    pub fn joyride_loopback(seed: u64) -> Result<BenchEnv, String> {
        let ip = Ipv4Addr::new(10, 66, 0, 1);
        let mut cfg = ServiceConfig::new(ip, MacAddr([0x02, 0, 0, 0x66, 0, 1]));
        cfg.seed = seed;
        let (link, _peer) = create_mem_link_pair(LinkConfig::default()).map_err(|e| e.to_string())?;
        let runner = ServiceRunner::spawn(Service::new(cfg, Box::new(link)));
        let send_stack = attach(&runner)?;
        let recv_stack = attach(&runner)?;
        Ok(BenchEnv {
            send_stack,
            recv_stack,
            recv_addr: ip,
            _runners: vec![runner],
        })
    }

    /// Two services joined by an (optionally impaired) memory link pair; the
    /// sender attaches to the first, the receiver to the second.
    pub fn joyride_pair(link: LinkConfig) -> Result<BenchEnv, String> {
        let (la, lb) = create_mem_link_pair(link).map_err(|e| e.to_string())?;
        let ip_a = Ipv4Addr::new(10, 88, 0, 1);
        let ip_b = Ipv4Addr::new(10, 88, 0, 2);
        let mut cfg_a = ServiceConfig::new(ip_a, MacAddr([0x02, 0, 0, 0x88, 0, 1]));
        cfg_a.seed = link.seed;
        let mut cfg_b = ServiceConfig::new(ip_b, MacAddr([0x02, 0, 0, 0x88, 0, 2]));
        cfg_b.seed = link.seed.wrapping_add(7);
        let runner_a = ServiceRunner::spawn(Service::new(cfg_a, Box::new(la)));
        let runner_b = ServiceRunner::spawn(Service::new(cfg_b, Box::new(lb)));
        let send_stack = attach(&runner_a)?;
        let recv_stack = attach(&runner_b)?;
        Ok(BenchEnv {
            send_stack,
            recv_stack,
            recv_addr: ip_b,
            _runners: vec![runner_a, runner_b],
        })
    }
}

fn attach(runner: &ServiceRunner) -> Result<JrStack, String> {
    let port = runner.service.lock().unwrap().attach_inproc();
    JrStack::attach_port(port).map_err(|e| format!("attach failed: {e:?}"))
}

// ---------------------------------------------------------------------------
// Scenarios

/// Adverse-suite scenario names, in run order.
pub fn adverse_scenarios() -> &'static [&'static str] {
    &["clean", "loss5", "reorder5", "dup2", "loss10+reorder10", "frag576"]
}

/// Link parameters for a named scenario; `None` for unknown names.
pub fn scenario_link(name: &str, seed: u64) -> Option<LinkConfig> {
    let mut cfg = LinkConfig {
        seed,
        ..LinkConfig::default()
    };
    match name {
        "clean" => {}
        "loss5" => cfg.loss_prob = 0.05,
        "reorder5" => cfg.reorder_prob = 0.05,
        "dup2" => cfg.dup_prob = 0.02,
        "loss10+reorder10" => {
            cfg.loss_prob = 0.10;
            cfg.reorder_prob = 0.10;
        }
        "frag576" => cfg.mtu = 576,
        // Harness sanity check: nothing gets through.
        "blackhole" => cfg.loss_prob = 1.0,
        _ => return None,
    }
    Some(cfg)
}

// ---------------------------------------------------------------------------
// Core transfer machinery

fn se(e: SockErr) -> String {
    format!("socket error: {e:?}")
}

fn stream_seed(seed: u64, idx: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(idx as u64 + 1)
}

/// Per-stream content hashes the receiver must observe, recomputed from the
/// seeds alone.
pub fn expected_hashes(cfg: &BenchConfig) -> Vec<String> {
    (0..cfg.streams)
        .map(|i| {
            let mut rng = DetRng::seed_from_u64(stream_seed(cfg.seed, i));
            let mut hasher = Sha256::new();
            let mut buf = vec![0u8; 64 * 1024];
            let mut left = cfg.bytes;
            while left > 0 {
                let n = (buf.len() as u64).min(left) as usize;
                rng.fill_bytes(&mut buf[..n]);
                hasher.update(&buf[..n]);
                left -= n as u64;
            }
            hex::encode(hasher.finalize())
        })
        .collect()
}

fn combined_hash(hashes: &[String]) -> String {
    let mut sorted: Vec<&String> = hashes.iter().collect();
    sorted.sort();
    let mut hasher = Sha256::new();
    for h in sorted {
        hasher.update(h.as_bytes());
    }
    hex::encode(hasher.finalize())
}

fn check_deadline(deadline: Option<Instant>, what: &str) -> Result<(), String> {
    match deadline {
        Some(d) if Instant::now() >= d => Err(format!("deadline exceeded during {what}")),
        _ => Ok(()),
    }
}

/// Sends `cfg.bytes` of seeded payload on one fresh connection.
fn send_stream(
    stack: JrStack,
    addr: Ipv4Addr,
    port: u16,
    cfg: &BenchConfig,
    seed: u64,
    deadline: Option<Instant>,
) -> Result<StreamStat, String> {
    let t0 = Instant::now();
    let s = stack.jr_socket(Protocol::Tcp).map_err(se)?;
    let nonblocking = cfg.mode == Mode::NonBlocking;
    let mut set = PollSet::new();
    if nonblocking {
        s.jr_set_nonblocking(true).map_err(se)?;
        set.jr_poll_ctl(&s, ready::WRITABLE);
        match s.jr_connect(addr, port) {
            Ok(()) => {}
            Err(SockErr::InProgress) | Err(SockErr::WouldBlock) => loop {
                check_deadline(deadline, "connect")?;
                let events = set.jr_poll_wait(5);
                if !events.is_empty() {
                    if let Some(e) = s.jr_take_error() {
                        return Err(se(e));
                    }
                    break;
                }
            },
            Err(e) => return Err(se(e)),
        }
    } else {
        s.jr_connect(addr, port).map_err(se)?;
    }

    let mut rng = DetRng::seed_from_u64(seed);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; cfg.buffer];
    let mut sent = 0u64;
    while sent < cfg.bytes {
        let n = (cfg.buffer as u64).min(cfg.bytes - sent) as usize;
        rng.fill_bytes(&mut buf[..n]);
        hasher.update(&buf[..n]);
        let mut off = 0;
        while off < n {
            match s.jr_send(&buf[off..n]) {
                Ok(k) => off += k,
                Err(SockErr::WouldBlock) => {
                    check_deadline(deadline, "send")?;
                    set.jr_poll_wait(5);
                }
                Err(e) => return Err(se(e)),
            }
        }
        sent += n as u64;
    }
    s.jr_close().map_err(se)?;
    Ok(StreamStat {
        bytes: sent,
        seconds: t0.elapsed().as_secs_f64(),
        hash: hex::encode(hasher.finalize()),
    })
}

/// Reads exactly `cfg.bytes` from one accepted connection, hashing as it
/// goes.
fn recv_stream(
    s: ClientSocket,
    cfg: &BenchConfig,
    deadline: Option<Instant>,
) -> Result<StreamStat, String> {
    let t0 = Instant::now();
    let nonblocking = cfg.mode == Mode::NonBlocking;
    let mut set = PollSet::new();
    if nonblocking {
        s.jr_set_nonblocking(true).map_err(se)?;
        set.jr_poll_ctl(&s, ready::READABLE);
    }
    let mut hasher = Sha256::new();
    let mut got = 0u64;
    while got < cfg.bytes {
        match s.jr_recv(cfg.buffer) {
            Ok(chunk) if chunk.is_empty() => {
                return Err(format!("eof after {got} of {} bytes", cfg.bytes));
            }
            Ok(chunk) => {
                hasher.update(&chunk);
                got += chunk.len() as u64;
            }
            Err(SockErr::WouldBlock) => {
                check_deadline(deadline, "recv")?;
                set.jr_poll_wait(5);
            }
            Err(e) => return Err(se(e)),
        }
    }
    Ok(StreamStat {
        bytes: got,
        seconds: t0.elapsed().as_secs_f64(),
        hash: hex::encode(hasher.finalize()),
    })
}

/// Accepts `cfg.streams` connections and drains each on its own thread.
fn recv_streams(
    listener: ClientSocket,
    cfg: BenchConfig,
    deadline: Option<Instant>,
) -> Result<Vec<StreamStat>, String> {
    let nonblocking = cfg.mode == Mode::NonBlocking;
    let mut set = PollSet::new();
    if nonblocking {
        listener.jr_set_nonblocking(true).map_err(se)?;
        set.jr_poll_ctl(&listener, ready::READABLE);
    }
    let mut handles = Vec::new();
    for _ in 0..cfg.streams {
        let child = loop {
            match listener.jr_accept() {
                Ok(c) => break c,
                Err(SockErr::WouldBlock) => {
                    check_deadline(deadline, "accept")?;
                    set.jr_poll_wait(5);
                }
                Err(e) => return Err(se(e)),
            }
        };
        let scfg = cfg.clone();
        handles.push(thread::spawn(move || recv_stream(child, &scfg, deadline)));
    }
    let mut out = Vec::new();
    for h in handles {
        out.push(h.join().map_err(|_| "receiver thread panicked".to_string())??);
    }
    Ok(out)
}

/// One complete verified run inside an existing environment; both roles run
/// in this process on their own threads.
pub fn run_throughput_env(cfg: &BenchConfig, env: &BenchEnv) -> Result<BenchResult, String> {
    cfg.validate()?;
    let listener = env.recv_stack.jr_socket(Protocol::Tcp).map_err(se)?;
    listener.jr_bind(env.recv_addr, 0).map_err(se)?;
    listener.jr_listen(cfg.streams as u32).map_err(se)?;
    let port = listener.jr_local_port().map_err(se)?;

    let deadline = cfg.deadline.map(|d| Instant::now() + d);
    let t0 = Instant::now();
    let rcfg = cfg.clone();
    let receiver = thread::spawn(move || recv_streams(listener, rcfg, deadline));
    let mut senders = Vec::new();
    for i in 0..cfg.streams {
        let stack = env.send_stack.clone();
        let scfg = cfg.clone();
        let addr = env.recv_addr;
        senders.push(thread::spawn(move || {
            send_stream(stack, addr, port, &scfg, stream_seed(scfg.seed, i), deadline)
        }));
    }

    let mut send_errors = Vec::new();
    for h in senders {
        match h.join().map_err(|_| "sender thread panicked".to_string())? {
            Ok(_) => {}
            Err(e) => send_errors.push(e),
        }
    }
    let stats = receiver
        .join()
        .map_err(|_| "receiver thread panicked".to_string())?;
    let stats = match stats {
        Ok(s) => s,
        Err(e) => {
            return Err(match send_errors.first() {
                Some(s) => format!("{e}; sender: {s}"),
                None => e,
            })
        }
    };
    if let Some(e) = send_errors.first() {
        return Err(e.clone());
    }
    let seconds = t0.elapsed().as_secs_f64();

    let mut got: Vec<String> = stats.iter().map(|s| s.hash.clone()).collect();
    got.sort();
    let mut expect = expected_hashes(cfg);
    expect.sort();
    if got != expect {
        return Err("content hash mismatch".into());
    }

    let bytes = stats.iter().map(|s| s.bytes).sum();
    let hash = combined_hash(&got);
    Ok(BenchResult {
        transport: cfg.transport,
        mode: cfg.mode,
        buffer: cfg.buffer,
        streams: cfg.streams,
        bytes,
        seconds,
        verified: true,
        per_stream: stats,
        hash,
    })
}

/// Builds the environment the config describes and runs one verified
/// transfer.
pub fn run_throughput(cfg: &BenchConfig) -> Result<BenchResult, String> {
    cfg.validate()?;
    let env = BenchEnv::for_config(cfg)?;
    run_throughput_env(cfg, &env)
}

/// Sender half for split-process runs: dials `addr:port` once per stream.
pub fn run_send_role(
    cfg: &BenchConfig,
    stack: &JrStack,
    addr: Ipv4Addr,
    port: u16,
) -> Result<BenchResult, String> {
    cfg.validate()?;
    let deadline = cfg.deadline.map(|d| Instant::now() + d);
    let t0 = Instant::now();
    let mut handles = Vec::new();
    for i in 0..cfg.streams {
        let stack = stack.clone();
        let scfg = cfg.clone();
        handles.push(thread::spawn(move || {
            send_stream(stack, addr, port, &scfg, stream_seed(scfg.seed, i), deadline)
        }));
    }
    let mut stats = Vec::new();
    for h in handles {
        stats.push(h.join().map_err(|_| "sender thread panicked".to_string())??);
    }
    let bytes = stats.iter().map(|s| s.bytes).sum();
    let hashes: Vec<String> = stats.iter().map(|s| s.hash.clone()).collect();
    Ok(BenchResult {
        transport: cfg.transport,
        mode: cfg.mode,
        buffer: cfg.buffer,
        streams: cfg.streams,
        bytes,
        seconds: t0.elapsed().as_secs_f64(),
        verified: true,
        per_stream: stats,
        hash: combined_hash(&hashes),
    })
}

/// Receiver half for split-process runs: verification recomputes the
/// expected hashes from the shared seed, so no side channel is needed.
pub fn run_recv_role(
    cfg: &BenchConfig,
    stack: &JrStack,
    bind_addr: Ipv4Addr,
    port: u16,
) -> Result<BenchResult, String> {
    cfg.validate()?;
    let listener = stack.jr_socket(Protocol::Tcp).map_err(se)?;
    listener.jr_bind(bind_addr, port).map_err(se)?;
    listener.jr_listen(cfg.streams as u32).map_err(se)?;
    let deadline = cfg.deadline.map(|d| Instant::now() + d);
    let t0 = Instant::now();
    let stats = recv_streams(listener, cfg.clone(), deadline)?;
    let seconds = t0.elapsed().as_secs_f64();

    let mut got: Vec<String> = stats.iter().map(|s| s.hash.clone()).collect();
    got.sort();
    let mut expect = expected_hashes(cfg);
    expect.sort();
    if got != expect {
        return Err("content hash mismatch".into());
    }
    let bytes = stats.iter().map(|s| s.bytes).sum();
    let hash = combined_hash(&got);
    Ok(BenchResult {
        transport: cfg.transport,
        mode: cfg.mode,
        buffer: cfg.buffer,
        streams: cfg.streams,
        bytes,
        seconds,
        verified: true,
        per_stream: stats,
        hash,
    })
}

// ---------------------------------------------------------------------------
// Sweeps

/// 4 KiB through 1 MiB, powers of two.
pub fn default_sweep_sizes() -> Vec<usize> {
    (12..=20).map(|p| 1usize << p).collect()
}

/// One run per buffer size per mode; fresh environment per run.
pub fn run_buffer_sweep(base: &BenchConfig, sizes: &[usize]) -> Result<Vec<BenchResult>, String> {
    let mut rows = Vec::new();
    for mode in [Mode::Blocking, Mode::NonBlocking] {
        for &buffer in sizes {
            let cfg = BenchConfig {
                mode,
                buffer,
                ..base.clone()
            };
            rows.push(run_throughput(&cfg)?);
        }
    }
    Ok(rows)
}

/// One run per stream count; per-stream breakdown is kept on each row.
pub fn run_stream_scaling(base: &BenchConfig, counts: &[usize]) -> Result<Vec<BenchResult>, String> {
    let mut rows = Vec::new();
    for &streams in counts {
        let cfg = BenchConfig {
            streams,
            ..base.clone()
        };
        rows.push(run_throughput(&cfg)?);
    }
    Ok(rows)
}

/// (non-blocking wins, comparisons) over buffer sizes present in both modes.
/// Informational: the trend is machine-dependent.
pub fn nonblocking_wins(rows: &[BenchResult]) -> (usize, usize) {
    let mut by_buffer: HashMap<usize, (Option<f64>, Option<f64>)> = HashMap::new();
    for r in rows {
        let slot = by_buffer.entry(r.buffer).or_default();
        match r.mode {
            Mode::Blocking => slot.0 = Some(r.gbps()),
            Mode::NonBlocking => slot.1 = Some(r.gbps()),
        }
    }
    let mut wins = 0;
    let mut total = 0;
    for (blocking, nonblocking) in by_buffer.values() {
        if let (Some(b), Some(nb)) = (blocking, nonblocking) {
            total += 1;
            if nb >= b {
                wins += 1;
            }
        }
    }
    (wins, total)
}

/// True when a mode dips at the 8 KiB buffer relative to both neighbors.
/// Reported, never asserted.
pub fn anomaly_8k(rows: &[BenchResult]) -> bool {
    for mode in [Mode::Blocking, Mode::NonBlocking] {
        let at = |buffer: usize| {
            rows.iter()
                .find(|r| r.mode == mode && r.buffer == buffer)
                .map(|r| r.gbps())
        };
        if let (Some(a), Some(b), Some(c)) = (at(4096), at(8192), at(16384)) {
            if b < a && b < c {
                return true;
            }
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Adverse suite

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub name: String,
    pub seconds: f64,
    pub pass: bool,
    pub detail: String,
}

/// One scenario: a verified transfer between two in-process service
/// instances over the named impaired link. `frag576` instead round-trips a
/// UDP datagram large enough to force IPv4 fragmentation.
pub fn run_scenario(name: &str, bytes: u64, seed: u64, deadline: Duration) -> ScenarioReport {
    let t0 = Instant::now();
    let outcome = (|| -> Result<(), String> {
        let link =
            scenario_link(name, seed).ok_or_else(|| format!("unknown scenario: {name}"))?;
        let env = BenchEnv::joyride_pair(link)?;
        if name == "frag576" {
            return frag_roundtrip(&env, seed, deadline);
        }
        let cfg = BenchConfig {
            role: Role::Send,
            transport: Transport::Joyride,
            mode: Mode::NonBlocking,
            buffer: 64 * 1024,
            streams: 1,
            bytes,
            scenario: name.into(),
            seed,
            deadline: Some(deadline),
        };
        run_throughput_env(&cfg, &env).map(|_| ())
    })();
    ScenarioReport {
        name: name.into(),
        seconds: t0.elapsed().as_secs_f64(),
        pass: outcome.is_ok(),
        detail: outcome.err().unwrap_or_default(),
    }
}

pub fn run_adverse_suite(bytes: u64, seed: u64, deadline: Duration) -> Vec<ScenarioReport> {
    adverse_scenarios()
        .iter()
        .map(|name| run_scenario(name, bytes, seed, deadline))
        .collect()
}

/// 1400 payload bytes over a 576-byte MTU: three fragments each way of the
/// service boundary, reassembled before delivery.
fn frag_roundtrip(env: &BenchEnv, seed: u64, deadline: Duration) -> Result<(), String> {
    let r = env.recv_stack.jr_socket(Protocol::Udp).map_err(se)?;
    let port = r.jr_bind(env.recv_addr, 0).map_err(se)?;
    r.jr_set_nonblocking(true).map_err(se)?;
    let s = env.send_stack.jr_socket(Protocol::Udp).map_err(se)?;
    let mut payload = vec![0u8; 1400];
    DetRng::seed_from_u64(seed).fill_bytes(&mut payload);
    s.jr_send_to(&payload, env.recv_addr, port).map_err(se)?;
    let end = Instant::now() + deadline;
    loop {
        match r.jr_recv_from(2048) {
            Ok((data, _, _)) => {
                return if data == payload {
                    Ok(())
                } else {
                    Err("fragmented datagram corrupted".into())
                };
            }
            Err(SockErr::WouldBlock) => {
                if Instant::now() >= end {
                    return Err("no datagram before deadline".into());
                }
                thread::sleep(Duration::from_millis(2));
            }
            Err(e) => return Err(se(e)),
        }
    }
}
