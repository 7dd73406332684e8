use std::collections::BTreeMap;
use std::thread;
use std::time::{Duration, Instant};

use rdis_core::{parse_document, Concept, RdisDocument};
use rdis_runtime::sim::LogEntry;
use rdis_runtime::{
    memory_pipe, run_sim, MemoryFactory, MemoryTransport, ReadOutcome, Runtime, RuntimeConfig, RuntimeError, SimConfig,
    SimHandle, SimProfile, TcpFactory, Transport,
};

fn fixture(name: &str) -> RdisDocument {
    let path = format!("{}/../../fixtures/{name}.rdis.json", env!("CARGO_MANIFEST_DIR"));
    parse_document(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn against_sim(doc: &str, profile: SimProfile, encoders: (i64, i64)) -> (SimHandle, Runtime) {
    let mut cfg = SimConfig::ephemeral(profile);
    cfg.initial_encoders = encoders;
    let sim = run_sim(cfg).unwrap();
    let factory = TcpFactory::with_override(sim.control_addr().to_string());
    let rt = Runtime::start(fixture(doc), &factory, RuntimeConfig::default()).unwrap();
    (sim, rt)
}

fn args(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn wait_until(what: &str, mut cond: impl FnMut() -> bool) {
    let t = Instant::now();
    while !cond() {
        assert!(t.elapsed() < Duration::from_secs(3), "timed out waiting for {what}");
        thread::sleep(Duration::from_millis(10));
    }
}

fn rx_frames(log: &[LogEntry]) -> Vec<String> {
    log.iter().filter(|e| e.dir == "rx").map(|e| e.hex.clone()).collect()
}

/// Replies to each request read from `end` using `respond`, until closed.
fn scripted_device(mut end: MemoryTransport, respond: impl Fn(&[u8]) -> Option<Vec<u8>> + Send + 'static) {
    thread::spawn(move || {
        let mut buf = [0u8; 64];
        loop {
            match end.read_timeout(&mut buf, Duration::from_millis(50)) {
                Ok(ReadOutcome::Data(n)) => {
                    if let Some(r) = respond(&buf[..n]) {
                        if end.write_all(&r).is_err() {
                            return;
                        }
                    }
                }
                Ok(ReadOutcome::Timeout) => {}
                _ => return,
            }
        }
    });
}

fn minimal_doc(extra_primitives: &str) -> RdisDocument {
    let text = format!(
        r#"{{
  "rdis_version": "0.1", "name": "probe", "version": "1",
  "connections": [{{ "id": "c", "transport": {{ "tcp": {{ "host": "127.0.0.1", "port": 1 }} }}, "threading_model": "single" }}],
  "state": [{{ "name": "v", "kind": "int", "initial": 3 }}],
  "primitives": [{extra_primitives}],
  "interfaces": []
}}"#
    );
    parse_document(&text).unwrap()
}

const QUERY: &str = r#"{ "name": "query", "connection": "c", "frequency": "adhoc",
  "write_format": { "delimited": { "prefix": "Q", "fields": ["n"] } },
  "read_format": { "delimited": { "prefix": "q", "fields": ["v"] } },
  "inputs": [{ "name": "n" }],
  "outputs": [{ "field": "v", "to": "return" }] }"#;

fn query_doc() -> RdisDocument {
    let mut doc = minimal_doc(QUERY);
    let iface = r#"{ "rdis_version": "0.1", "name": "x", "version": "1",
      "connections": [{ "id": "c", "transport": { "tcp": { "host": "h", "port": 1 } }, "threading_model": "single" }],
      "primitives": [QUERY],
      "interfaces": [{ "name": "ask", "inputs": [{ "name": "n" }], "calls": [{ "primitive": "query", "args": { "n": "n * 2" } }],
                       "returns": { "v": "query.v + 0.5" } }] }"#
        .replace("QUERY", QUERY);
    doc.interfaces = parse_document(&iface).unwrap().interfaces;
    doc
}

#[test]
fn on_connect_precedes_periodic_traffic() {
    let (sim, rt) = against_sim("finchling", SimProfile::finchling(), (0, 0));
    thread::sleep(Duration::from_millis(350));
    rt.stop();
    let frames = rx_frames(&sim.log());
    assert_eq!(frames[0], "4D 00 00 00 00 00 00 00", "{frames:?}");
    assert!(frames[1..].iter().any(|f| f.starts_with("45")), "{frames:?}");
    assert!(frames[1..].iter().all(|f| f != "4D 00 00 00 00 00 00 00"));
}

#[test]
fn drive_writes_one_symmetric_motor_frame() {
    let (sim, rt) = against_sim("finchling", SimProfile::finchling(), (0, 0));
    let out = rt
        .call_interface("drive", &args(&[("linear", 0.2), ("angular", 0.0)]))
        .unwrap();
    assert!(out.is_empty());
    wait_until("motor frame", || sim.snapshot().commands.get("M") == Some(&2));
    rt.stop();
    let motors: Vec<_> = rx_frames(&sim.log())
        .into_iter()
        .filter(|f| f.starts_with("4D"))
        .collect();
    assert_eq!(motors, ["4D 00 00 00 00 00 00 00", "4D 28 28 00 00 00 00 00"]);
}

#[test]
fn encoder_query_returns_and_stores() {
    let (sim, rt) = against_sim("koalette", SimProfile::koalette(), (5882, -2941));
    let out = rt.call_interface("readEncoders", &BTreeMap::new()).unwrap();
    assert_eq!(out, args(&[("left_m", 1.0), ("right_m", -0.5)]));
    thread::sleep(Duration::from_millis(250));
    let st = rt.read_state(&["enc_left", "enc_right"]).unwrap();
    assert_eq!((st["enc_left"].value, st["enc_right"].value), (5882.0, -2941.0));
    assert!(st["enc_left"].age <= Duration::from_millis(250), "{st:?}");
    rt.stop();
    drop(sim);
}

#[test]
fn state_starts_at_initial_values() {
    let (a, b) = memory_pipe();
    let rt = Runtime::start(minimal_doc(""), &MemoryFactory::new(vec![a]), RuntimeConfig::default()).unwrap();
    let st = rt.read_state(&["v"]).unwrap();
    assert_eq!(st["v"].value, 3.0);
    assert!(matches!(rt.read_state(&["nope"]), Err(RuntimeError::UnknownState(_))));
    rt.stop();
    rt.stop();
    drop(b);
}

#[test]
fn unknown_interface_and_argument_errors() {
    let (_sim, rt) = against_sim("finchling", SimProfile::finchling(), (0, 0));
    let e = rt.call_interface("noSuch", &BTreeMap::new()).unwrap_err();
    assert_eq!(e.code(), "unknown-interface");
    let e = rt.call_interface("drive", &args(&[("linear", 0.2)])).unwrap_err();
    assert_eq!(e.code(), "missing-arg");
    let e = rt
        .call_interface("drive", &args(&[("linear", 0.2), ("angular", 0.0), ("x", 1.0)]))
        .unwrap_err();
    assert_eq!(e.code(), "unknown-arg");
    let e = rt.read_concept(Concept::CommandVelocity).unwrap_err();
    assert_eq!(e.code(), "not-telemetry");
}

#[test]
fn closed_handle_refuses_calls() {
    let (_sim, rt) = against_sim("finchling", SimProfile::finchling(), (0, 0));
    rt.stop();
    rt.stop();
    assert!(rt.is_closed());
    assert!(matches!(
        rt.call_interface("halt", &BTreeMap::new()),
        Err(RuntimeError::Closed)
    ));
}

#[test]
fn serial_transport_is_refused() {
    let mut doc = fixture("finchling");
    doc.connections[0].transport = rdis_core::Transport::Serial {
        device: "/dev/ttyS0".into(),
        baud: 9600,
    };
    let e = Runtime::start(doc, &TcpFactory::new(), RuntimeConfig::default()).unwrap_err();
    assert!(e.to_string().contains("serial not implemented"), "{e}");
}

#[test]
fn open_failure_fails_start() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let e = Runtime::start(
        fixture("koalette"),
        &TcpFactory::with_override(addr.to_string()),
        RuntimeConfig::default(),
    )
    .unwrap_err();
    assert_eq!(e.code(), "transport");
}

#[test]
fn arguments_round_and_returns_use_replies() {
    let (a, b) = memory_pipe();
    scripted_device(b, |req| {
        let text = std::str::from_utf8(req).unwrap();
        let n: i64 = text.trim_end().strip_prefix("Q,").unwrap().parse().unwrap();
        // An unrelated frame first; it must be skipped.
        Some(format!("x,1\nq,{}\n", n + 1).into_bytes())
    });
    let rt = Runtime::start(query_doc(), &MemoryFactory::new(vec![a]), RuntimeConfig::default()).unwrap();
    // n * 2 = 5.5 rounds half away from zero to 6 on the wire
    let out = rt.call_interface("ask", &args(&[("n", 2.75)])).unwrap();
    assert_eq!(out, args(&[("v", 7.5)]));
    rt.stop();
}

#[test]
fn missing_reply_times_out() {
    let (a, b) = memory_pipe();
    scripted_device(b, |_| None);
    let cfg = RuntimeConfig {
        reply_timeout: Duration::from_millis(150),
    };
    let rt = Runtime::start(query_doc(), &MemoryFactory::new(vec![a]), cfg).unwrap();
    let t = Instant::now();
    let e = rt.call_interface("ask", &args(&[("n", 1.0)])).unwrap_err();
    assert_eq!(e.code(), "timeout");
    assert!(t.elapsed() >= Duration::from_millis(150));
    rt.stop();
}

#[test]
fn pending_call_gets_shutdown_error() {
    let (a, b) = memory_pipe();
    scripted_device(b, |_| None);
    let cfg = RuntimeConfig {
        reply_timeout: Duration::from_secs(10),
    };
    let rt = Runtime::start(query_doc(), &MemoryFactory::new(vec![a]), cfg).unwrap();
    let caller = {
        let rt = rt.clone();
        thread::spawn(move || rt.call_interface("ask", &args(&[("n", 1.0)])))
    };
    thread::sleep(Duration::from_millis(100));
    let t = Instant::now();
    rt.stop();
    assert!(t.elapsed() < Duration::from_secs(1));
    assert!(matches!(caller.join().unwrap(), Err(RuntimeError::Shutdown)));
}

#[test]
fn concurrent_calls_are_serialized() {
    let (sim, rt) = against_sim("koalette", SimProfile::koalette(), (0, 0));
    let workers: Vec<_> = (0..8)
        .map(|i| {
            let rt = rt.clone();
            thread::spawn(move || {
                for _ in 0..10 {
                    rt.call_interface("drive", &args(&[("linear", 0.01 * i as f64), ("angular", 0.0)]))
                        .unwrap();
                    rt.call_interface("readEncoders", &BTreeMap::new()).unwrap();
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    rt.stop();
    let snap = sim.snapshot();
    assert_eq!(snap.frames_dropped, 0);
    assert_eq!(snap.commands["D"], 80);
}

#[test]
fn periodic_poll_keeps_cadence() {
    let (sim, rt) = against_sim("finchling", SimProfile::finchling(), (0, 0));
    let before = sim.snapshot().commands.get("E").copied().unwrap_or(0);
    thread::sleep(Duration::from_millis(1000));
    let after = sim.snapshot().commands["E"];
    rt.stop();
    assert!((9..=11).contains(&(after - before)), "{before} -> {after}");
}

#[test]
fn odometry_subscription_tracks_the_sim() {
    let (sim, rt) = against_sim("koalette", SimProfile::koalette(), (0, 0));
    let sub = rt.subscribe(Concept::Odometry, Duration::from_millis(100)).unwrap();
    rt.call_concept(
        Concept::CommandVelocity,
        &args(&[("linear_mps", 0.0), ("angular_radps", 1.0)]),
    )
    .unwrap();
    thread::sleep(Duration::from_millis(500));
    rt.call_concept(
        Concept::CommandVelocity,
        &args(&[("linear_mps", 0.0), ("angular_radps", 0.0)]),
    )
    .unwrap();
    thread::sleep(Duration::from_millis(300));
    let truth = sim.snapshot().pose;
    let mut last = None;
    while let Some(s) = sub.recv_timeout(Duration::from_millis(10)) {
        last = Some(s);
    }
    let last = last.expect("samples arrived");
    assert!(
        (last.values["theta_rad"] - truth.theta_rad).abs() < 0.01,
        "{last:?} vs {truth:?}"
    );
    assert!(last.age <= Duration::from_millis(250));
    sub.cancel();
    rt.stop();
}

#[test]
fn subscription_requires_a_mapping() {
    let (a, _b) = memory_pipe();
    let rt = Runtime::start(minimal_doc(""), &MemoryFactory::new(vec![a]), RuntimeConfig::default()).unwrap();
    let e = rt
        .subscribe(Concept::Odometry, Duration::from_millis(100))
        .err()
        .unwrap();
    assert_eq!(e.code(), "no-mapping");
}

#[test]
fn subscription_ends_when_runtime_stops() {
    let (_sim, rt) = against_sim("finchling", SimProfile::finchling(), (0, 0));
    let mut sub = rt.subscribe(Concept::Odometry, Duration::from_millis(20)).unwrap();
    assert!(sub.next().is_some());
    rt.stop();
    drop(rt);
    let t = Instant::now();
    for _ in sub.by_ref() {}
    assert!(t.elapsed() < Duration::from_secs(1));
}
