//! The service daemon: owns the link, runs the stack, accepts clients over
//! a Unix socket.

use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use joyride::linklayer::{LinkConfig, DEFAULT_MTU};
use joyride::netcore::ether::MacAddr;
use joyride::service::{run_daemon, DaemonConfig, LinkSpec, ServiceConfig};

#[derive(Parser)]
#[command(name = "joyrided", version, about = "centralized user-space network service")]
struct Args {
    /// IPv4 address the service owns on its link.
    #[arg(long)]
    ip: Ipv4Addr,

    /// Link-layer address, e.g. 02:00:00:00:00:01.
    #[arg(long)]
    mac: String,

    /// Link backend: `mem` or `udp:<host>:<port>:<host>:<port>`
    /// (local endpoint, then the peer service's endpoint).
    #[arg(long, default_value = "mem")]
    link: String,

    /// Frame loss probability applied to outgoing frames.
    #[arg(long, default_value_t = 0.0)]
    loss: f64,

    /// Frame reorder probability.
    #[arg(long, default_value_t = 0.0)]
    reorder: f64,

    /// Frame duplication probability.
    #[arg(long, default_value_t = 0.0)]
    dup: f64,

    /// Link MTU in bytes.
    #[arg(long, default_value_t = DEFAULT_MTU)]
    mtu: usize,

    /// Impairment RNG seed; the same seed replays the same decisions.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Service loop tick in microseconds.
    #[arg(long = "tick-us", default_value_t = 100)]
    tick_us: u64,

    /// Attach point for clients; falls back to $JOYRIDE_SERVICE_PATH, then
    /// /tmp/joyride.sock.
    #[arg(long)]
    socket: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("joyrided: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> Result<(), String> {
    let mac = MacAddr::parse(&args.mac).map_err(|e| format!("bad --mac: {e}"))?;
    let link_spec = LinkSpec::parse(&args.link)?;
    let socket_path = args
        .socket
        .or_else(|| std::env::var_os("JOYRIDE_SERVICE_PATH").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("/tmp/joyride.sock"));

    let mut service = ServiceConfig::new(args.ip, mac);
    service.tick_us = args.tick_us;
    service.seed = args.seed;

    let link = LinkConfig {
        mtu: args.mtu,
        loss_prob: args.loss,
        reorder_prob: args.reorder,
        dup_prob: args.dup,
        seed: args.seed,
        ..LinkConfig::default()
    };
    link.validate().map_err(|e| e.to_string())?;

    let cfg = DaemonConfig {
        service,
        link_spec,
        link,
        socket_path,
    };
    run_daemon(cfg, None).map_err(|e| e.to_string())
}
