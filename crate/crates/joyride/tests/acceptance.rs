//! End-to-end acceptance gate. Each test prints exactly one
//! `ACCEPTANCE <n>: PASS/FAIL` line for its criterion.

use std::net::Ipv4Addr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use joyride::bench;
use joyride::ipc::{ControlMessage, EventBody, MsgType};
use joyride::linklayer::{create_mem_link_pair, LinkConfig};
use joyride::netcore::checksum::{inet_checksum, verify};
use joyride::netcore::ether::MacAddr;
use joyride::netcore::udp::{udp_decode, udp_encode};
use joyride::netcore::{ipv4_fragment, Ipv4Packet, ReasmResult, ReassemblyTable, IPPROTO_TCP, IPPROTO_UDP};
use joyride::service::{InProcPort, Service, ServiceConfig, ServiceRunner, PROTOCOL_VERSION};
use joyride::sockapi::{
    run_script, script_names, Backend, JoyBackend, JrStack, KernelBackend, Protocol, StackOptions,
};
use joyride::tcp::{
    CongestionControl, Reno, State, Tcb, TcpConfig, TcpSegment, INITIAL_SSTHRESH,
};
use joyride::util::{DetRng, Micros};

fn gate(n: u32, body: impl FnOnce() -> Result<(), String>) {
    // One criterion at a time: several tests measure wall-clock throughput
    // and would otherwise contend for the CPU.
    static LOCK: Mutex<()> = Mutex::new(());
    let _serial = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    // Written straight to stdout so the verdict lines survive the test
    // harness's output capture.
    let verdict = |v: &str| {
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), "ACCEPTANCE {n}: {v}");
    };
    match body() {
        Ok(()) => verdict("PASS"),
        Err(e) => {
            verdict("FAIL");
            panic!("acceptance {n}: {e}");
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

// ---------------------------------------------------------------------------
// 1. Adverse-network integrity

#[test]
fn acceptance_01_adverse_network_integrity() {
    gate(1, || {
        let reports = bench::run_adverse_suite(10 * 1024 * 1024, 42, Duration::from_secs(60));
        ensure!(reports.len() == 6, "expected 6 scenarios, got {}", reports.len());
        for r in &reports {
            println!("  scenario {} {:.2}s {}", r.name, r.seconds, if r.pass { "pass" } else { "FAIL" });
            ensure!(r.pass, "scenario {} failed: {}", r.name, r.detail);
            ensure!(r.seconds <= 60.0, "scenario {} overran: {:.1}s", r.name, r.seconds);
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 2. Fragmentation round-trip property

#[test]
fn acceptance_02_fragmentation_round_trip() {
    gate(2, || {
        let mut rng = DetRng::seed_from_u64(0xF7A6);
        for case in 0..1000u32 {
            let len = 64 + rng.below(12_000) as usize;
            let mtu = 576 + rng.below(925) as usize; // [576, 1500]
            let mut payload = vec![0u8; len];
            rng.fill_bytes(&mut payload);
            let mut pkt = Ipv4Packet::new(
                Ipv4Addr::new(10, 0, 0, 1),
                Ipv4Addr::new(10, 0, 0, 2),
                IPPROTO_UDP,
                payload,
            );
            pkt.identification = (case % 65_536) as u16;
            let frags = ipv4_fragment(pkt.clone(), mtu)
                .map_err(|e| format!("case {case}: fragment failed: {e}"))?;
            if frags.len() == 1 {
                ensure!(frags[0] == pkt, "case {case}: single-fragment identity broken");
                continue;
            }
            // Random reorder (Fisher-Yates) plus random duplication.
            let mut feed = frags.clone();
            for i in (1..feed.len()).rev() {
                let j = rng.below(i as u64 + 1) as usize;
                feed.swap(i, j);
            }
            let dups: Vec<Ipv4Packet> = feed
                .iter()
                .filter(|_| rng.next_f64() < 0.3)
                .cloned()
                .collect();
            feed.extend(dups);

            let mut table = ReassemblyTable::new(16);
            let mut complete = None;
            for frag in feed {
                match table.input(frag, 0) {
                    Ok(ReasmResult::Complete(p)) => {
                        if complete.is_none() {
                            complete = Some(p);
                        }
                    }
                    Ok(ReasmResult::Pending) => {}
                    Err(e) => return Err(format!("case {case}: reasm error: {e}")),
                }
            }
            let got = complete.ok_or_else(|| format!("case {case}: never completed"))?;
            ensure!(
                got.payload == pkt.payload
                    && got.src == pkt.src
                    && got.dst == pkt.dst
                    && got.protocol == pkt.protocol
                    && got.identification == pkt.identification,
                "case {case}: reassembled packet differs"
            );
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 3. TCP state-machine soundness

/// RFC 9293 figure 5 arcs (self-loops implicit; any state may fall to
/// Closed via RST, abort, or the retransmission cap).
fn transition_allowed(from: State, to: State) -> bool {
    use State::*;
    if from == to || to == Closed {
        return true;
    }
    matches!(
        (from, to),
        (SynSent, Established)
            | (SynSent, SynReceived)
            | (SynReceived, Established)
            | (SynReceived, FinWait1)
            // Not drawn in the figure, but the event-processing rules admit
            // a FIN arriving in SYN-RECEIVED directly.
            | (SynReceived, CloseWait)
            | (Established, FinWait1)
            | (Established, CloseWait)
            | (FinWait1, FinWait2)
            | (FinWait1, Closing)
            | (FinWait1, TimeWait)
            | (FinWait2, TimeWait)
            | (CloseWait, LastAck)
            | (Closing, TimeWait)
            | (LastAck, Closed)
            | (TimeWait, Closed)
    )
}

#[test]
fn acceptance_03_tcp_state_machine_soundness() {
    gate(3, || {
        let local = (Ipv4Addr::new(10, 0, 0, 1), 5001);
        let remote = (Ipv4Addr::new(10, 0, 0, 2), 80);
        let mut events_total = 0u64;
        for episode in 0..2500u64 {
            let mut rng = DetRng::seed_from_u64(0x7C9 ^ episode);
            let mut now: Micros = 1_000;
            let cfg = TcpConfig::default();
            let mut tcb = if rng.next_f64() < 0.5 {
                Tcb::open_active(local, remote, cfg, rng.next_u32(), now).0
            } else {
                let syn = TcpSegment {
                    src_port: remote.1,
                    dst_port: local.1,
                    seq: rng.next_u32(),
                    syn: true,
                    window: 65_535,
                    mss_option: Some(1460),
                    ..TcpSegment::default()
                };
                Tcb::accept_syn(local, remote, &syn, cfg, rng.next_u32(), now).0
            };
            let mut prev_flight = 0u32;
            for step in 0..500u32 {
                let before = tcb.state();
                now += rng.below(50_000);
                match rng.below(6) {
                    0 | 1 => {
                        let seg = craft_segment(&tcb, remote, local, &mut rng);
                        tcb.input(seg, now);
                    }
                    2 => {
                        let mut data = vec![0u8; rng.below(1200) as usize];
                        rng.fill_bytes(&mut data);
                        tcb.write(&data);
                        tcb.emit(now);
                    }
                    3 => {
                        tcb.read(rng.below(2048) as usize);
                    }
                    4 => {
                        let _ = tcb.close(now);
                    }
                    _ => {
                        now += rng.below(2_000_000);
                        tcb.on_timer(now);
                    }
                }
                tcb.take_events();
                let after = tcb.state();
                ensure!(
                    transition_allowed(before, after),
                    "episode {episode} step {step}: illegal transition {before} -> {after}"
                );
                // Send-time invariant: flight may only grow while within the
                // window bound (one segment of slack for the boundary case,
                // two more for limited transmit). A timeout legitimately
                // collapses cwnd underneath existing flight, so a shrinking
                // or unchanged flight is not checked against the bound.
                let flight = tcb.snd_nxt().wrapping_sub(tcb.snd_una());
                let bound = tcb.cwnd().min(tcb.snd_wnd()).saturating_add(3 * tcb.mss());
                ensure!(
                    flight <= prev_flight || flight <= bound,
                    "episode {episode} step {step}: flight grew to {flight} > min(cwnd {}, snd_wnd {}) + 3*mss {}",
                    tcb.cwnd(), tcb.snd_wnd(), tcb.mss()
                );
                prev_flight = flight;
                events_total += 1;
                if tcb.is_closed() {
                    break;
                }
            }
        }
        ensure!(events_total >= 100_000, "only {events_total} events exercised");
        println!("  {events_total} fuzzed events, zero violations");
        Ok(())
    });
}

/// A plausible-but-adversarial peer segment. Windows never renege below the
/// post-ACK flight, matching a standards-following peer; everything else
/// (flags, sequence numbers, payload) is randomized.
fn craft_segment(
    tcb: &Tcb,
    remote: (Ipv4Addr, u16),
    local: (Ipv4Addr, u16),
    rng: &mut DetRng,
) -> TcpSegment {
    let seq = match rng.below(4) {
        0 => tcb.rcv_nxt(),
        1 => tcb.rcv_nxt().wrapping_add(rng.below(3000) as u32),
        2 => tcb.rcv_nxt().wrapping_sub(rng.below(3000) as u32),
        _ => rng.next_u32(),
    };
    let ack = match rng.below(4) {
        0 => tcb.snd_nxt(),
        1 => tcb.snd_una(),
        2 => tcb
            .snd_una()
            .wrapping_add(rng.below(1 + tcb.snd_nxt().wrapping_sub(tcb.snd_una()) as u64) as u32),
        _ => rng.next_u32(),
    };
    let flight_after = tcb.snd_nxt().wrapping_sub(ack).min(tcb.snd_nxt().wrapping_sub(tcb.snd_una()));
    let window = (flight_after as u64 + rng.below(65_000)).min(65_535) as u16;
    let mut payload = vec![0u8; rng.below(600) as usize];
    rng.fill_bytes(&mut payload);
    let syn = rng.next_f64() < 0.05;
    TcpSegment {
        src_port: remote.1,
        dst_port: local.1,
        seq,
        ack,
        syn,
        fin: rng.next_f64() < 0.08,
        rst: rng.next_f64() < 0.03,
        psh: rng.next_f64() < 0.3,
        ack_flag: rng.next_f64() < 0.9,
        window,
        mss_option: if syn { Some(1460) } else { None },
        payload,
    }
}

// ---------------------------------------------------------------------------
// 4. Reno oracle equivalence

#[test]
fn acceptance_04_reno_oracle_equivalence() {
    gate(4, || {
        const MSS: u32 = 1460;
        let mut cc = Reno::new(MSS);
        // Independent recurrence state, advanced by plain arithmetic below.
        let mut o_cwnd: u32 = 2 * MSS;
        let mut o_ssthresh: u32 = INITIAL_SSTHRESH;
        let mut acks = 0u32;
        fn check(cc: &Reno, o_cwnd: u32, o_ssthresh: u32, at: &str) -> Result<(), String> {
            if cc.cwnd() != o_cwnd || cc.ssthresh() != o_ssthresh {
                return Err(format!(
                    "{at}: cwnd {} vs oracle {o_cwnd}, ssthresh {} vs oracle {o_ssthresh}",
                    cc.cwnd(),
                    cc.ssthresh()
                ));
            }
            Ok(())
        }
        fn full_ack(cc: &mut Reno, o_cwnd: &mut u32, o_ssthresh: u32, acks: &mut u32) {
            cc.on_ack(MSS);
            if *o_cwnd < o_ssthresh {
                *o_cwnd += MSS;
            } else {
                *o_cwnd += ((MSS * MSS) / *o_cwnd).max(1);
            }
            *acks += 1;
        }

        for i in 0..90 {
            full_ack(&mut cc, &mut o_cwnd, o_ssthresh, &mut acks);
            check(&cc, o_cwnd, o_ssthresh, &format!("ack {i}"))?;
        }

        // Triple-duplicate-ACK episode: fast retransmit, window inflation,
        // recovery exit.
        let flight = o_cwnd;
        cc.on_fast_retransmit(flight);
        o_ssthresh = (flight / 2).max(2 * MSS);
        o_cwnd = o_ssthresh + 3 * MSS;
        check(&cc, o_cwnd, o_ssthresh, "fast retransmit")?;
        for i in 0..5 {
            cc.on_dup_ack_in_recovery();
            o_cwnd += MSS;
            acks += 1;
            check(&cc, o_cwnd, o_ssthresh, &format!("dup ack {i}"))?;
        }
        cc.on_recovery_exit();
        o_cwnd = o_ssthresh;
        check(&cc, o_cwnd, o_ssthresh, "recovery exit")?;

        for i in 0..50 {
            full_ack(&mut cc, &mut o_cwnd, o_ssthresh, &mut acks);
            check(&cc, o_cwnd, o_ssthresh, &format!("post-recovery ack {i}"))?;
        }

        // Timeout episode.
        let flight = o_cwnd;
        cc.on_timeout(flight);
        o_ssthresh = (flight / 2).max(2 * MSS);
        o_cwnd = MSS;
        check(&cc, o_cwnd, o_ssthresh, "timeout")?;

        while acks < 200 {
            full_ack(&mut cc, &mut o_cwnd, o_ssthresh, &mut acks);
            check(&cc, o_cwnd, o_ssthresh, &format!("tail ack {acks}"))?;
        }
        ensure!(acks == 200, "scripted {acks} ACK events, wanted 200");
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 5. Checksum and wire-format oracles

fn naive_fold_checksum(data: &[u8]) -> u16 {
    let mut words: Vec<u16> = data
        .chunks(2)
        .map(|c| if c.len() == 2 { u16::from_be_bytes([c[0], c[1]]) } else { u16::from_be_bytes([c[0], 0]) })
        .collect();
    loop {
        let sum: u64 = words.iter().map(|&w| w as u64).sum();
        if sum <= 0xFFFF {
            return !(sum as u16);
        }
        words = vec![(sum & 0xFFFF) as u16, (sum >> 16) as u16];
    }
}

#[test]
fn acceptance_05_checksum_and_wire_oracles() {
    gate(5, || {
        let mut rng = DetRng::seed_from_u64(0xC4EC);
        // Trivial cases.
        ensure!(inet_checksum(&[0u8; 20]) == 0xFFFF, "all-zero checksum");
        let mut hdr = Ipv4Packet::new(
            Ipv4Addr::new(1, 2, 3, 4),
            Ipv4Addr::new(5, 6, 7, 8),
            IPPROTO_TCP,
            vec![1, 2, 3],
        )
        .encode()
        .map_err(|e| e.to_string())?;
        ensure!(verify(&hdr[..20]), "self-verification of a real header");
        hdr[8] ^= 0xFF;
        ensure!(!verify(&hdr[..20]), "corrupted header must not verify");

        for i in 0..10_000 {
            let mut data = vec![0u8; rng.below(101) as usize];
            rng.fill_bytes(&mut data);
            ensure!(
                inet_checksum(&data) == naive_fold_checksum(&data),
                "checksum mismatch vs naive fold at case {i}"
            );
        }

        let src = Ipv4Addr::new(192, 168, 1, 10);
        let dst = Ipv4Addr::new(192, 168, 1, 20);
        for i in 0..10_000 {
            match rng.below(3) {
                0 => {
                    let mut payload = vec![0u8; rng.below(1200) as usize];
                    rng.fill_bytes(&mut payload);
                    let mut pkt = Ipv4Packet::new(src, dst, rng.below(256) as u8, payload);
                    pkt.identification = rng.next_u32() as u16;
                    pkt.ttl = 1 + rng.below(255) as u8;
                    pkt.dont_fragment = rng.next_f64() < 0.5;
                    pkt.more_fragments = rng.next_f64() < 0.5;
                    pkt.fragment_offset = rng.below(8192) as u16;
                    let bytes = pkt.encode().map_err(|e| e.to_string())?;
                    let back = Ipv4Packet::decode(&bytes).map_err(|e| e.to_string())?;
                    ensure!(back == pkt, "ipv4 decode(encode) differs at case {i}");
                }
                1 => {
                    let syn = rng.next_f64() < 0.3;
                    let mut payload = vec![0u8; rng.below(1000) as usize];
                    rng.fill_bytes(&mut payload);
                    let seg = TcpSegment {
                        src_port: rng.next_u32() as u16,
                        dst_port: rng.next_u32() as u16,
                        seq: rng.next_u32(),
                        ack: rng.next_u32(),
                        syn,
                        fin: rng.next_f64() < 0.2,
                        rst: rng.next_f64() < 0.2,
                        psh: rng.next_f64() < 0.5,
                        ack_flag: rng.next_f64() < 0.8,
                        window: rng.next_u32() as u16,
                        mss_option: if syn { Some(rng.next_u32() as u16) } else { None },
                        payload,
                    };
                    let bytes = seg.encode(src, dst);
                    let back = TcpSegment::decode(&bytes, src, dst).map_err(|e| e.to_string())?;
                    ensure!(back == seg, "tcp decode(encode) differs at case {i}");
                }
                _ => {
                    let mut payload = vec![0u8; rng.below(1400) as usize];
                    rng.fill_bytes(&mut payload);
                    let sport = rng.next_u32() as u16;
                    let dport = rng.next_u32() as u16;
                    let bytes =
                        udp_encode(sport, dport, &payload, src, dst).map_err(|e| e.to_string())?;
                    let (s, d, p) = udp_decode(&bytes, src, dst).map_err(|e| e.to_string())?;
                    ensure!(
                        s == sport && d == dport && p == payload,
                        "udp decode(encode) differs at case {i}"
                    );
                }
            }
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 6. Ring-queue exhaustive interleaving check

#[test]
fn acceptance_06_ring_exhaustive() {
    gate(6, || {
        use std::collections::VecDeque;
        const CAP: usize = 8;
        const DEPTH: usize = 12;
        let mut runs = 0u64;
        for depth in 1..=DEPTH {
            for mask in 0u32..(1 << depth) {
                let ring = joyride::ipc::RingQueue::new_heap(CAP);
                let mut oracle: VecDeque<u8> = VecDeque::new();
                let mut next_byte = 0u8;
                for step in 0..depth {
                    if mask >> step & 1 == 0 {
                        // Producer: offer the next 2 bytes of the stream.
                        let chunk = [next_byte, next_byte.wrapping_add(1)];
                        let accepted = ring.produce(&chunk);
                        let oracle_accepts = (CAP - oracle.len()).min(2);
                        ensure!(
                            accepted == oracle_accepts,
                            "depth {depth} mask {mask:#x} step {step}: accepted {accepted} vs oracle {oracle_accepts}"
                        );
                        for &b in &chunk[..accepted] {
                            oracle.push_back(b);
                        }
                        next_byte = next_byte.wrapping_add(accepted as u8);
                    } else {
                        // Consumer: take up to 3 bytes.
                        let got = ring.consume(3);
                        let want: Vec<u8> =
                            (0..oracle.len().min(3)).filter_map(|_| oracle.pop_front()).collect();
                        ensure!(
                            got == want,
                            "depth {depth} mask {mask:#x} step {step}: consumed {got:?} vs oracle {want:?}"
                        );
                    }
                    ensure!(
                        ring.len() == oracle.len(),
                        "depth {depth} mask {mask:#x} step {step}: len {} vs oracle {}",
                        ring.len(),
                        oracle.len()
                    );
                }
                runs += 1;
            }
        }
        println!("  {runs} interleavings checked");
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 7. Capability isolation under adversarial client fuzzing

struct RawClient {
    port: InProcPort,
}

impl RawClient {
    fn attach(runner: &ServiceRunner) -> RawClient {
        RawClient {
            port: runner.service.lock().unwrap().attach_inproc(),
        }
    }

    fn send(&self, msg: &ControlMessage) {
        self.port.send(&msg.encode());
    }

    fn recv(&self, timeout: Duration) -> Option<ControlMessage> {
        let end = Instant::now() + timeout;
        loop {
            if let Some(f) = self.port.try_recv() {
                return ControlMessage::decode(&f).ok();
            }
            if self.port.is_closed() || Instant::now() >= end {
                return None;
            }
            std::thread::sleep(Duration::from_micros(200));
        }
    }

    /// Like `recv`, but skips asynchronous readiness notifications, which
    /// may interleave with a request's reply.
    fn recv_reply(&self, timeout: Duration) -> Option<ControlMessage> {
        let end = Instant::now() + timeout;
        while let Some(m) = self.recv(end.saturating_duration_since(Instant::now())) {
            if !matches!(m.event(), Ok(EventBody::Readiness { .. })) {
                return Some(m);
            }
        }
        None
    }

    fn hello(&self) -> Result<(), String> {
        self.send(&ControlMessage::new(MsgType::Hello, 0, [0u8; 16]).with_u32(PROTOCOL_VERSION));
        match self.recv(Duration::from_secs(2)) {
            Some(m) if matches!(m.event(), Ok(EventBody::HelloOk { .. })) => Ok(()),
            other => Err(format!("hello failed: {other:?}")),
        }
    }

    /// SOCKET for a TCP socket; returns (socket id, token).
    fn tcp_socket(&self) -> Result<(u32, [u8; 16]), String> {
        self.send(&ControlMessage::new(MsgType::Socket, 0, [0u8; 16]).with_u32(6));
        match self.recv(Duration::from_secs(2)) {
            Some(m) if matches!(m.event(), Ok(EventBody::SocketOk { .. })) => {
                Ok((m.socket_id, m.token))
            }
            other => Err(format!("socket failed: {other:?}")),
        }
    }
}

#[test]
fn acceptance_07_capability_isolation() {
    gate(7, || {
        // The adversary's killed sessions would otherwise emit thousands of
        // termination log lines.
        std::env::set_var("JOYRIDE_LOG", "off");
        let ip = Ipv4Addr::new(10, 55, 0, 1);
        let cfg = ServiceConfig::new(ip, MacAddr([0x02, 0, 0, 0x55, 0, 1]));
        let (link, _peer) = create_mem_link_pair(LinkConfig::default()).map_err(|e| e.to_string())?;
        let runner = ServiceRunner::spawn(Service::new(cfg, Box::new(link)));

        // Victim A: raw client with a listening TCP socket whose token we
        // know, so "stolen token" frames can present the real bytes.
        let victim = RawClient::attach(&runner);
        victim.hello()?;
        let (victim_sid, victim_token) = victim.tcp_socket()?;
        victim.send(
            &ControlMessage::new(MsgType::Bind, victim_sid, victim_token)
                .with_addr_port(ip, 0),
        );
        let victim_port = match victim.recv(Duration::from_secs(2)) {
            Some(m) => match m.event() {
                Ok(EventBody::Ok { port }) => port,
                other => return Err(format!("victim bind reply: {other:?}")),
            },
            None => return Err("victim bind: no reply".into()),
        };
        victim.send(&ControlMessage::new(MsgType::Listen, victim_sid, victim_token).with_u32(8));
        match victim.recv(Duration::from_secs(2)).map(|m| m.event()) {
            Some(Ok(EventBody::Ok { .. })) => {}
            other => return Err(format!("victim listen reply: {other:?}")),
        }

        // Victim B: a normal sockapi client with an established pair.
        let stack = {
            let port = runner.service.lock().unwrap().attach_inproc();
            JrStack::attach_port(port).map_err(|e| format!("attach: {e:?}"))?
        };
        let bl = stack.jr_socket(Protocol::Tcp).map_err(|e| format!("{e:?}"))?;
        bl.jr_bind(ip, 0).map_err(|e| format!("{e:?}"))?;
        bl.jr_listen(4).map_err(|e| format!("{e:?}"))?;
        let bc = stack.jr_socket(Protocol::Tcp).map_err(|e| format!("{e:?}"))?;
        bc.jr_connect(ip, bl.jr_local_port().map_err(|e| format!("{e:?}"))?)
            .map_err(|e| format!("{e:?}"))?;
        let bs = bl.jr_accept().map_err(|e| format!("{e:?}"))?;

        // Adversary: 10^5 hostile control frames. A bad triple kills the
        // session, so the adversary keeps re-attaching; every frame sent
        // counts, delivered or dropped on a dead session.
        let mut rng = DetRng::seed_from_u64(0xADE5);
        let mut sent = 0u64;
        let mut attaches = 0u64;
        while sent < 100_000 {
            let adv = RawClient::attach(&runner);
            attaches += 1;
            if adv.hello().is_err() {
                continue;
            }
            // A socket of its own gives the adversary a *valid* token to
            // replay against the victim's socket id.
            let own = adv.tcp_socket().ok();
            for _ in 0..50 {
                let frame = match rng.below(5) {
                    // Structured: real message type at the victim's socket.
                    0 => {
                        let token = match rng.below(3) {
                            0 => victim_token, // stolen: right bytes, wrong client
                            1 => own.map(|(_, t)| t).unwrap_or([0u8; 16]),
                            _ => {
                                let mut t = [0u8; 16];
                                rng.fill_bytes(&mut t);
                                t
                            }
                        };
                        let ty = match rng.below(5) {
                            0 => MsgType::Close,
                            1 => MsgType::Bind,
                            2 => MsgType::Listen,
                            3 => MsgType::SetOpt,
                            _ => MsgType::Accept,
                        };
                        ControlMessage::new(ty, victim_sid, token)
                            .with_u32(rng.next_u32())
                            .encode()
                    }
                    // Random socket id, random token.
                    1 => {
                        let mut t = [0u8; 16];
                        rng.fill_bytes(&mut t);
                        ControlMessage::new(MsgType::Close, rng.next_u32(), t).encode()
                    }
                    // Raw garbage.
                    _ => {
                        let mut f = [0u8; 64];
                        rng.fill_bytes(&mut f);
                        f
                    }
                };
                adv.port.send(&frame);
                sent += 1;
            }
            // Give the service a moment to chew through the batch.
            std::thread::sleep(Duration::from_micros(300));
        }
        println!("  {sent} hostile frames over {attaches} sessions");

        // Service alive, victims untouched.
        ensure!(!victim.port.is_closed(), "victim session was killed");
        ensure!(
            victim.port.try_recv().is_none(),
            "victim received an unsolicited frame"
        );
        // The raw victim's listener still accepts a fresh connection.
        let probe = stack.jr_socket(Protocol::Tcp).map_err(|e| format!("{e:?}"))?;
        probe
            .jr_connect(ip, victim_port)
            .map_err(|e| format!("victim listener no longer accepts: {e:?}"))?;
        victim.send(&ControlMessage::new(MsgType::Accept, victim_sid, victim_token));
        match victim.recv_reply(Duration::from_secs(2)).map(|m| m.event()) {
            Some(Ok(EventBody::Accepted { .. })) => {}
            other => return Err(format!("victim accept after fuzz: {other:?}")),
        }
        // The established pair still moves intact data.
        bc.jr_send(b"still-private").map_err(|e| format!("{e:?}"))?;
        let mut got = Vec::new();
        while got.len() < 13 {
            let chunk = bs.jr_recv(64).map_err(|e| format!("{e:?}"))?;
            ensure!(!chunk.is_empty(), "unexpected eof on victim pair");
            got.extend(chunk);
        }
        ensure!(got == b"still-private", "victim pair data corrupted");
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 8. POSIX conformance parity

#[test]
fn acceptance_08_posix_conformance_parity() {
    gate(8, || {
        let names = script_names();
        ensure!(names.len() >= 30, "only {} scripts", names.len());
        let mut kernel = KernelBackend::new();
        let mut joy = JoyBackend::new();
        let mut mismatches = Vec::new();
        for name in &names {
            let k = run_script(name, &mut kernel);
            let j = run_script(name, &mut joy);
            if k != j {
                mismatches.push(format!("{name}: kernel={k:?} joyride={j:?}"));
            }
        }
        ensure!(
            mismatches.is_empty(),
            "classification mismatches:\n{}",
            mismatches.join("\n")
        );
        println!("  {} scripts, identical classifications", names.len());
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 9. Benchmark trend reproduction

#[test]
fn acceptance_09_benchmark_trends() {
    gate(9, || {
        // (a) exact pps arithmetic.
        ensure!(bench::pps_calc(100e9, 1500) == 8_333_333, "pps(100G, 1500)");
        ensure!(bench::pps_calc(100e9, 1538) == 8_127_438, "pps(100G, 1538)");
        ensure!(bench::pps_calc(10e9, 1500) == 833_333, "pps(10G, 1500)");
        ensure!(
            bench::pps_with_overhead(100e9, 1500) == bench::pps_calc(100e9, 1538),
            "overhead companion"
        );

        // (b) buffer sweep: all verified, well-formed CSV.
        let base = bench::BenchConfig {
            role: bench::Role::Send,
            transport: bench::Transport::Kernel,
            mode: bench::Mode::Blocking,
            buffer: 4096,
            streams: 1,
            bytes: 256 * 1024,
            scenario: String::new(),
            seed: 9,
            deadline: Some(Duration::from_secs(60)),
        };
        let sizes = bench::default_sweep_sizes();
        let rows = bench::run_buffer_sweep(&base, &sizes)?;
        ensure!(rows.len() == 2 * sizes.len(), "sweep row count {}", rows.len());
        ensure!(rows.iter().all(|r| r.verified), "unverified sweep row");
        let path = std::env::temp_dir().join(format!("jr-acceptance-sweep-{}.csv", std::process::id()));
        bench::write_csv(&path, &rows).map_err(|e| e.to_string())?;
        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let _ = std::fs::remove_file(&path);
        let mut lines = text.lines();
        ensure!(lines.next() == Some(bench::CSV_HEADER), "csv header");
        let mut body = 0;
        for line in lines {
            let cols: Vec<&str> = line.split(',').collect();
            ensure!(cols.len() == 8, "csv column count in {line:?}");
            let bytes: f64 = cols[4].parse().map_err(|_| format!("bytes in {line:?}"))?;
            let seconds: f64 = cols[5].parse().map_err(|_| format!("seconds in {line:?}"))?;
            let gbps: f64 = cols[6].parse().map_err(|_| format!("gbps in {line:?}"))?;
            ensure!(
                (gbps - 8.0 * bytes / seconds / 1e9).abs() < 1e-3,
                "accounting identity in {line:?}"
            );
            ensure!(cols[7] == "true", "verified flag in {line:?}");
            body += 1;
        }
        ensure!(body == rows.len(), "csv body rows {body}");

        // Stream scaling over the joyride transport.
        let jbase = bench::BenchConfig {
            transport: bench::Transport::Joyride,
            mode: bench::Mode::NonBlocking,
            buffer: 64 * 1024,
            bytes: 128 * 1024,
            ..base.clone()
        };
        let scaling = bench::run_stream_scaling(&jbase, &[1, 2, 4, 8])?;
        ensure!(scaling.len() == 4, "scaling row count");
        for r in &scaling {
            let total: u64 = r.per_stream.iter().map(|s| s.bytes).sum();
            ensure!(r.bytes == total, "scaling total != sum of per-stream");
            ensure!(r.verified, "unverified scaling row");
        }

        // (c) informational trend reports, never gated.
        let (wins, total) = bench::nonblocking_wins(&rows);
        println!("  non-blocking >= blocking for {wins}/{total} buffer sizes (informational)");
        println!("  8 KiB anomaly observed: {} (informational)", bench::anomaly_8k(&rows));
        let gbps: Vec<String> = scaling.iter().map(|r| format!("{:.2}", r.gbps())).collect();
        println!("  joyride aggregate gbps by streams {{1,2,4,8}}: {}", gbps.join(", "));
        Ok(())
    });
}

// ---------------------------------------------------------------------------
// 10. Fallback behavior

struct FallbackBackend {
    stack: JrStack,
}

impl Backend for FallbackBackend {
    fn tcp(&mut self) -> joyride::sockapi::SockResult<joyride::sockapi::ClientSocket> {
        self.stack.jr_socket(Protocol::Tcp)
    }

    fn udp(&mut self) -> joyride::sockapi::SockResult<joyride::sockapi::ClientSocket> {
        self.stack.jr_socket(Protocol::Udp)
    }

    fn addr(&self) -> Ipv4Addr {
        Ipv4Addr::LOCALHOST
    }

    fn dead_port(&self) -> u16 {
        // Reserve-and-release: an ephemeral port nothing listens on.
        let probe = JrStack::kernel_only().jr_socket(Protocol::Tcp).unwrap();
        probe.jr_bind(Ipv4Addr::LOCALHOST, 0).unwrap();
        probe.jr_local_port().unwrap()
    }
}

#[test]
fn acceptance_10_fallback_behavior() {
    gate(10, || {
        // Service "stopped": the rendezvous path does not exist. Fallback
        // yields a working kernel-path stack with the same API surface.
        let stack = JrStack::attach(StackOptions {
            service_path: Some("/nonexistent/joyride-acceptance.sock".into()),
            fallback: true,
            disable: false,
            prefixes: Vec::new(),
        })
        .map_err(|e| format!("attach with fallback: {e:?}"))?;
        ensure!(!stack.is_joyride(), "expected kernel-only fallback stack");

        let mut fallback = FallbackBackend { stack };
        let mut kernel = KernelBackend::new();
        let mut mismatches = Vec::new();
        for name in script_names() {
            let k = run_script(name, &mut kernel);
            let f = run_script(name, &mut fallback);
            if k != f {
                mismatches.push(format!("{name}: kernel={k:?} fallback={f:?}"));
            }
        }
        ensure!(
            mismatches.is_empty(),
            "fallback path diverged:\n{}",
            mismatches.join("\n")
        );

        // JOYRIDE_DISABLE=1 forces the kernel path regardless of config.
        std::env::set_var("JOYRIDE_DISABLE", "1");
        std::env::set_var("JOYRIDE_SERVICE_PATH", "/nonexistent/ignored.sock");
        let disabled = JrStack::from_env().map_err(|e| format!("from_env: {e:?}"))?;
        std::env::remove_var("JOYRIDE_DISABLE");
        std::env::remove_var("JOYRIDE_SERVICE_PATH");
        ensure!(!disabled.is_joyride(), "JOYRIDE_DISABLE=1 must force the kernel path");
        let l = disabled.jr_socket(Protocol::Tcp).map_err(|e| format!("{e:?}"))?;
        l.jr_bind(Ipv4Addr::LOCALHOST, 0).map_err(|e| format!("{e:?}"))?;
        l.jr_listen(1).map_err(|e| format!("{e:?}"))?;
        let c = disabled.jr_socket(Protocol::Tcp).map_err(|e| format!("{e:?}"))?;
        c.jr_connect(Ipv4Addr::LOCALHOST, l.jr_local_port().map_err(|e| format!("{e:?}"))?)
            .map_err(|e| format!("{e:?}"))?;
        let s = l.jr_accept().map_err(|e| format!("{e:?}"))?;
        c.jr_send(b"kernel").map_err(|e| format!("{e:?}"))?;
        ensure!(
            s.jr_recv(16).map_err(|e| format!("{e:?}"))? == b"kernel",
            "echo over disabled stack"
        );
        Ok(())
    });
}
