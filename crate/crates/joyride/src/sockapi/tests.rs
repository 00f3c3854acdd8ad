use std::net::Ipv4Addr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::ipc::control::ready;
use crate::linklayer::LinkConfig;
use crate::netcore::ether::MacAddr;
use crate::service::{run_daemon, DaemonConfig, LinkSpec, ServiceConfig};

use super::*;

fn ip(s: &str) -> Ipv4Addr {
    s.parse().unwrap()
}

#[test]
fn cidr_parse_and_contains() {
    let c = Cidr::parse("10.0.0.0/8").unwrap();
    assert!(c.contains(ip("10.255.3.4")));
    assert!(!c.contains(ip("11.0.0.1")));
    let host = Cidr::parse("192.168.1.7").unwrap();
    assert_eq!(host.len, 32);
    assert!(host.contains(ip("192.168.1.7")));
    assert!(!host.contains(ip("192.168.1.8")));
    let all = Cidr::parse("0.0.0.0/0").unwrap();
    assert!(all.contains(ip("1.2.3.4")));
    assert!(Cidr::parse("10.0.0.0/33").is_err());
    assert!(Cidr::parse("not-an-ip/8").is_err());
    let list = Cidr::parse_list("10.0.0.0/8, 192.168.0.0/16").unwrap();
    assert_eq!(list.len(), 2);
}

#[test]
fn fallback_route_decision_table() {
    let prefix = vec![Cidr::parse("10.0.0.0/8").unwrap()];
    let live = RoutePolicy {
        disable: false,
        service_live: true,
        prefixes: prefix.clone(),
    };
    assert_eq!(fallback_route(ip("10.1.2.3"), &live), Route::Joyride);
    assert_eq!(fallback_route(ip("8.8.8.8"), &live), Route::Kernel);

    let disabled = RoutePolicy {
        disable: true,
        ..live.clone()
    };
    assert_eq!(fallback_route(ip("10.1.2.3"), &disabled), Route::Kernel);

    let dead = RoutePolicy {
        service_live: false,
        ..live.clone()
    };
    assert_eq!(fallback_route(ip("10.1.2.3"), &dead), Route::Kernel);

    let open = RoutePolicy {
        disable: false,
        service_live: true,
        prefixes: Vec::new(),
    };
    assert_eq!(fallback_route(ip("8.8.8.8"), &open), Route::Joyride);
}

#[test]
fn kernel_path_echo() {
    let mut b = KernelBackend::new();
    let l = b.tcp().unwrap();
    l.jr_bind(b.addr(), 0).unwrap();
    l.jr_listen(4).unwrap();
    let c = b.tcp().unwrap();
    c.jr_connect(b.addr(), l.jr_local_port().unwrap()).unwrap();
    let s = l.jr_accept().unwrap();
    assert_eq!(c.jr_send(b"ping").unwrap(), 4);
    assert_eq!(s.jr_recv(16).unwrap(), b"ping");
    s.jr_send(b"pong").unwrap();
    assert_eq!(c.jr_recv(16).unwrap(), b"pong");
}

#[test]
fn joyride_path_echo() {
    let mut b = JoyBackend::new();
    let l = b.tcp().unwrap();
    l.jr_bind(b.addr(), 0).unwrap();
    l.jr_listen(4).unwrap();
    let c = b.tcp().unwrap();
    c.jr_connect(b.addr(), l.jr_local_port().unwrap()).unwrap();
    let s = l.jr_accept().unwrap();
    assert_eq!(s.jr_peer().unwrap().0, b.addr());
    assert_eq!(c.jr_send(b"ping").unwrap(), 4);
    assert_eq!(s.jr_recv(16).unwrap(), b"ping");
    s.jr_send(b"pong").unwrap();
    assert_eq!(c.jr_recv(16).unwrap(), b"pong");
}

#[test]
fn conformance_parity_kernel_vs_joyride() {
    let mut kernel = KernelBackend::new();
    let mut joy = JoyBackend::new();
    let mut failures = Vec::new();
    for name in script_names() {
        let k = run_script(name, &mut kernel);
        let j = run_script(name, &mut joy);
        if k != j {
            failures.push(format!("{name}: kernel={k:?} joyride={j:?}"));
        }
    }
    assert!(failures.is_empty(), "classification mismatches:\n{}", failures.join("\n"));
}

#[test]
fn poll_listener_reports_readable() {
    let mut b = JoyBackend::new();
    let l = b.tcp().unwrap();
    l.jr_bind(b.addr(), 0).unwrap();
    l.jr_listen(4).unwrap();
    let mut set = PollSet::new();
    set.jr_poll_ctl(&l, ready::READABLE);
    assert!(set.jr_poll_wait(0).is_empty(), "no pending connection yet");

    let c = b.tcp().unwrap();
    c.jr_connect(b.addr(), l.jr_local_port().unwrap()).unwrap();
    let events = set.jr_poll_wait(2000);
    assert!(
        events.iter().any(|(s, f)| s.handle() == l.handle() && f & ready::READABLE != 0),
        "listener should be readable after a connect: {events:?}",
    );
}

#[test]
fn poll_empty_set_times_out() {
    let mut set = PollSet::new();
    let t0 = Instant::now();
    let events = set.jr_poll_wait(100);
    let dt = t0.elapsed();
    assert!(events.is_empty());
    assert!(dt >= Duration::from_millis(95), "returned early: {dt:?}");
    assert!(dt < Duration::from_millis(2000), "overslept: {dt:?}");
}

#[test]
fn poll_mixed_kernel_and_joyride_sources() {
    let mut joy = JoyBackend::new();
    let mut kernel = KernelBackend::new();

    let jl = joy.tcp().unwrap();
    jl.jr_bind(joy.addr(), 0).unwrap();
    jl.jr_listen(4).unwrap();

    let ku = kernel.udp().unwrap();
    let kport = ku.jr_bind(kernel.addr(), 0).unwrap();

    let mut set = PollSet::new();
    set.jr_poll_ctl(&jl, ready::READABLE);
    set.jr_poll_ctl(&ku, ready::READABLE);
    assert_eq!(set.len(), 2);
    assert!(set.jr_poll_wait(0).is_empty());

    // Event on the kernel member only.
    let ktx = kernel.udp().unwrap();
    ktx.jr_send_to(b"wake", kernel.addr(), kport).unwrap();
    let events = set.jr_poll_wait(2000);
    assert!(events.iter().any(|(s, _)| s.handle() == ku.handle()));
    assert!(!events.iter().any(|(s, _)| s.handle() == jl.handle()));

    // Then on the joyride member.
    let jc = joy.tcp().unwrap();
    jc.jr_connect(joy.addr(), jl.jr_local_port().unwrap()).unwrap();
    let events = set.jr_poll_wait(2000);
    assert!(events.iter().any(|(s, _)| s.handle() == jl.handle()));

    set.jr_poll_del(&ku).unwrap();
    assert_eq!(set.jr_poll_del(&ku), Err(SockErr::NotFound));
}

#[test]
fn poll_del_unregistered_is_not_found() {
    let mut b = KernelBackend::new();
    let s = b.tcp().unwrap();
    let mut set = PollSet::new();
    assert_eq!(set.jr_poll_del(&s), Err(SockErr::NotFound));
}

#[test]
fn uds_attach_cross_process_wire() {
    let path = std::env::temp_dir().join(format!("jr-uds-test-{}.sock", std::process::id()));
    let stop = Arc::new(AtomicBool::new(false));
    let cfg = DaemonConfig {
        service: ServiceConfig::new(ip("10.99.0.1"), MacAddr([0x02, 0, 0, 0x99, 0, 1])),
        link_spec: LinkSpec::Mem,
        link: LinkConfig::default(),
        socket_path: path.clone(),
    };
    let stop2 = stop.clone();
    let daemon = std::thread::spawn(move || run_daemon(cfg, Some(stop2)));

    // The daemon binds asynchronously; retry the attach briefly.
    let deadline = Instant::now() + Duration::from_secs(5);
    let stack = loop {
        match JrStack::attach_uds(&path, Vec::new()) {
            Ok(s) => break s,
            Err(_) if Instant::now() < deadline => {
                std::thread::sleep(Duration::from_millis(10))
            }
            Err(e) => panic!("attach failed: {e:?}"),
        }
    };
    assert!(stack.is_joyride());

    let l = stack.jr_socket(Protocol::Tcp).unwrap();
    l.jr_bind(ip("10.99.0.1"), 0).unwrap();
    l.jr_listen(4).unwrap();
    let c = stack.jr_socket(Protocol::Tcp).unwrap();
    c.jr_connect(ip("10.99.0.1"), l.jr_local_port().unwrap()).unwrap();
    let s = l.jr_accept().unwrap();
    c.jr_send(b"over-the-wire").unwrap();
    let mut got = Vec::new();
    while got.len() < 13 {
        let chunk = s.jr_recv(64).unwrap();
        assert!(!chunk.is_empty());
        got.extend(chunk);
    }
    assert_eq!(got, b"over-the-wire");

    stop.store(true, Ordering::Relaxed);
    daemon.join().unwrap().unwrap();
}

#[test]
fn attach_policy_disable_and_fallback() {
    // disable forces a kernel-only stack even with a (bogus) path set.
    let stack = JrStack::attach(StackOptions {
        service_path: Some("/nonexistent/jr.sock".into()),
        fallback: false,
        disable: true,
        prefixes: Vec::new(),
    })
    .unwrap();
    assert!(!stack.is_joyride());

    // Unreachable service: fallback on → kernel-only, off → refused.
    let stack = JrStack::attach(StackOptions {
        service_path: Some("/nonexistent/jr.sock".into()),
        fallback: true,
        disable: false,
        prefixes: Vec::new(),
    })
    .unwrap();
    assert!(!stack.is_joyride());
    let err = match JrStack::attach(StackOptions {
        service_path: Some("/nonexistent/jr.sock".into()),
        fallback: false,
        disable: false,
        prefixes: Vec::new(),
    }) {
        Ok(_) => panic!("attach should fail with fallback disabled"),
        Err(e) => e,
    };
    assert_eq!(err, SockErr::ConnRefused);
}

#[test]
fn prefix_miss_migrates_connect_to_kernel() {
    // Joyride stack whose prefix list excludes localhost: the connect must
    // transparently take the kernel path and still work.
    let joy = JoyBackend::new();
    let stack = JrStack {
        shared: joy_stack_shared(&joy),
        prefixes: Arc::new(vec![Cidr::parse("10.77.0.0/16").unwrap()]),
    };

    let mut kernel = KernelBackend::new();
    let kl = kernel.tcp().unwrap();
    kl.jr_bind(Ipv4Addr::LOCALHOST, 0).unwrap();
    kl.jr_listen(4).unwrap();

    let c = stack.jr_socket(Protocol::Tcp).unwrap();
    c.jr_connect(Ipv4Addr::LOCALHOST, kl.jr_local_port().unwrap()).unwrap();
    let s = kl.jr_accept().unwrap();
    c.jr_send(b"migrated").unwrap();
    assert_eq!(s.jr_recv(16).unwrap(), b"migrated");

    // A destination inside the prefix stays on the joyride path.
    let jl = stack.jr_socket(Protocol::Tcp).unwrap();
    jl.jr_bind(ip("10.77.0.1"), 0).unwrap();
    jl.jr_listen(4).unwrap();
    let jc = stack.jr_socket(Protocol::Tcp).unwrap();
    jc.jr_connect(ip("10.77.0.1"), jl.jr_local_port().unwrap()).unwrap();
    assert!(jl.jr_accept().is_ok());
}

fn joy_stack_shared(b: &JoyBackend) -> Option<Arc<super::stack::StackShared>> {
    b.stack_shared()
}
