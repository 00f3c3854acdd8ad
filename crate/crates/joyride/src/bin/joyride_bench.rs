//! ttcp-style benchmark client: seeded payload generation on the sender,
//! independent hash verification on the receiver.

use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args as ClapArgs, Parser, Subcommand};
use joyride::bench::{
    run_recv_role, run_send_role, run_throughput, BenchConfig, BenchResult, Mode, Role,
    Transport, CSV_HEADER,
};
use joyride::sockapi::JrStack;

#[derive(Parser)]
#[command(name = "joyride-bench", version, about = "throughput benchmark with content verification")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate and send the seeded payload streams.
    Send(RoleArgs),
    /// Accept the streams and verify their content against the seed.
    Recv(RoleArgs),
}

#[derive(ClapArgs)]
struct RoleArgs {
    /// Which stack carries the transfer.
    #[arg(long, default_value = "joyride")]
    transport: String,

    /// blocking or nonblocking socket calls.
    #[arg(long, default_value = "blocking")]
    mode: String,

    /// Per-call buffer size in bytes; must be a power of two.
    #[arg(long, default_value_t = 64 * 1024)]
    buffer: usize,

    /// Concurrent TCP streams.
    #[arg(long, default_value_t = 1)]
    streams: usize,

    /// Bytes per stream.
    #[arg(long, default_value_t = 16 * 1024 * 1024)]
    bytes: u64,

    /// Self-contained scenario (clean, loss5, reorder5, dup2,
    /// loss10+reorder10, frag576, or loopback). When set, this process runs
    /// both ends over an internal service pair and ignores --host/--port.
    #[arg(long, default_value = "")]
    scenario: String,

    /// Append the result row to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Peer address: dialed by send, bound by recv.
    #[arg(long, default_value = "127.0.0.1")]
    host: Ipv4Addr,

    /// TCP port; 0 lets recv pick (printed on start).
    #[arg(long, default_value_t = 5201)]
    port: u16,

    /// Payload RNG seed; sender and receiver must agree.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Abort a non-blocking run after this many seconds.
    #[arg(long = "deadline-secs")]
    deadline_secs: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (role, args) = match cli.cmd {
        Cmd::Send(a) => (Role::Send, a),
        Cmd::Recv(a) => (Role::Recv, a),
    };
    match run(role, &args) {
        Ok(result) => {
            println!("{CSV_HEADER}");
            println!("{}", result.csv_row());
            if let Some(path) = &args.csv {
                if let Err(e) = append_csv(path, &result) {
                    eprintln!("joyride-bench: csv write failed: {e}");
                    return ExitCode::FAILURE;
                }
            }
            if result.verified {
                ExitCode::SUCCESS
            } else {
                eprintln!("joyride-bench: transfer not verified");
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("joyride-bench: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(role: Role, args: &RoleArgs) -> Result<BenchResult, String> {
    let cfg = BenchConfig {
        role,
        transport: Transport::parse(&args.transport)?,
        mode: Mode::parse(&args.mode)?,
        buffer: args.buffer,
        streams: args.streams,
        bytes: args.bytes,
        scenario: args.scenario.clone(),
        seed: args.seed,
        deadline: args.deadline_secs.map(Duration::from_secs),
    };
    if !cfg.scenario.is_empty() {
        // Self-contained: both roles inside this process.
        return run_throughput(&cfg);
    }
    let stack = match cfg.transport {
        Transport::Kernel => JrStack::kernel_only(),
        Transport::Joyride => JrStack::from_env().map_err(|e| format!("stack attach: {e:?}"))?,
    };
    match role {
        Role::Send => run_send_role(&cfg, &stack, args.host, args.port),
        Role::Recv => run_recv_role(&cfg, &stack, args.host, args.port),
    }
}

fn append_csv(path: &PathBuf, row: &BenchResult) -> std::io::Result<()> {
    use std::io::Write;
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{CSV_HEADER}")?;
    }
    writeln!(f, "{}", row.csv_row())
}
