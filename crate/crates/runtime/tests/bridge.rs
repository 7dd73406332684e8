use std::io::{Read, Write};
use std::net::TcpStream;
use std::thread;
use std::time::{Duration, Instant};

use rdis_core::{canonicalize, parse_document};
use rdis_runtime::{
    run_sim, serve, BridgeConfig, BridgeHandle, Runtime, RuntimeConfig, SimConfig, SimHandle, SimProfile, TcpFactory,
};
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{connect, Message, WebSocket};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(format!(
        "{}/../../fixtures/{name}.rdis.json",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap()
}

struct Stack {
    sim: SimHandle,
    rt: Runtime,
    bridge: BridgeHandle,
}

fn stack(name: &str, profile: SimProfile) -> Stack {
    let sim = run_sim(SimConfig::ephemeral(profile)).unwrap();
    let doc = parse_document(&fixture_text(name)).unwrap();
    let rt = Runtime::start(
        doc,
        &TcpFactory::with_override(sim.control_addr().to_string()),
        RuntimeConfig::default(),
    )
    .unwrap();
    let bridge = serve(rt.clone(), BridgeConfig::new("127.0.0.1:0")).unwrap();
    Stack { sim, rt, bridge }
}

fn client(b: &BridgeHandle) -> Client {
    let (ws, _) = connect(b.ws_url()).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(3))).unwrap();
    }
    ws
}

fn send(ws: &mut Client, v: Value) {
    ws.send(Message::text(v.to_string())).unwrap();
}

fn recv(ws: &mut Client) -> Value {
    loop {
        match ws.read().unwrap() {
            Message::Text(t) => return serde_json::from_str(t.as_str()).unwrap(),
            Message::Ping(_) | Message::Pong(_) => continue,
            other => panic!("unexpected frame {other:?}"),
        }
    }
}

/// Next message that is not a `state` update.
fn recv_reply(ws: &mut Client) -> Value {
    loop {
        let v = recv(ws);
        if v["type"] != "state" {
            return v;
        }
    }
}

fn http_get(addr: std::net::SocketAddr, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

#[test]
fn discovery_is_byte_identical() {
    for (name, profile) in [
        ("finchling", SimProfile::finchling()),
        ("koalette", SimProfile::koalette()),
    ] {
        let st = stack(name, profile);
        let expected = canonicalize(&parse_document(&fixture_text(name)).unwrap()).unwrap();
        let mut ws = client(&st.bridge);
        send(&mut ws, json!({"type": "rdis"}));
        let v = recv(&mut ws);
        assert_eq!(v["type"], "rdis");
        assert_eq!(v["document"].as_str().unwrap().as_bytes(), expected.as_bytes());
    }
}

#[test]
fn list_describes_interfaces_and_concepts() {
    let st = stack("finchling", SimProfile::finchling());
    let mut ws = client(&st.bridge);
    send(&mut ws, json!({"type": "list", "id": "l"}));
    let v = recv(&mut ws);
    assert_eq!(v["id"], "l");
    let names: Vec<&str> = v["interfaces"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["drive", "halt", "readEncoders", "wheelTravel"]);
    assert_eq!(v["interfaces"][0]["inputs"], json!(["linear", "angular"]));
    assert_eq!(v["concepts"][0]["concept"], "position2d.command_velocity");
    assert_eq!(v["concepts"][0]["kind"], "command");
    assert_eq!(v["concepts"][1]["fields"], json!(["x_m", "y_m", "theta_rad"]));
}

#[test]
fn call_reaches_the_device() {
    let st = stack("finchling", SimProfile::finchling());
    let mut ws = client(&st.bridge);
    send(
        &mut ws,
        json!({"type": "call", "id": "1", "interface": "drive", "args": {"linear": 0.2, "angular": 0}}),
    );
    let v = recv(&mut ws);
    assert_eq!(v, json!({"type": "result", "id": "1", "values": {}}));
    let t = Instant::now();
    while !st.sim.log().iter().any(|e| e.hex == "4D 28 28 00 00 00 00 00") {
        assert!(t.elapsed() < Duration::from_secs(2), "frame never arrived");
        thread::sleep(Duration::from_millis(10));
    }

    send(&mut ws, json!({"type": "call", "id": "2", "interface": "readEncoders"}));
    let v = recv(&mut ws);
    assert_eq!(v["id"], "2");
    assert!(v["values"]["left_m"].is_number());

    send(
        &mut ws,
        json!({"type": "call", "id": "3", "interface": "position2d.command_velocity", "args": {"linear_mps": 0, "angular_radps": 0}}),
    );
    assert_eq!(recv(&mut ws)["type"], "result");
}

#[test]
fn runtime_errors_carry_codes() {
    let st = stack("koalette", SimProfile::koalette());
    let mut ws = client(&st.bridge);
    send(&mut ws, json!({"type": "call", "id": "a", "interface": "noSuch"}));
    assert_eq!(
        recv(&mut ws),
        json!({"type": "error", "id": "a", "code": "unknown-interface", "message": "unknown interface `noSuch`"})
    );
    send(
        &mut ws,
        json!({"type": "call", "id": "b", "interface": "drive", "args": {"linear": 1}}),
    );
    assert_eq!(recv(&mut ws)["code"], "missing-arg");
    send(
        &mut ws,
        json!({"type": "call", "id": "c", "interface": "position2d.odometry"}),
    );
    assert_eq!(recv(&mut ws)["code"], "not-command");
    send(
        &mut ws,
        json!({"type": "subscribe", "id": "d", "concept": "position2d.command_velocity"}),
    );
    assert_eq!(recv(&mut ws)["code"], "not-telemetry");
    send(&mut ws, json!({"type": "subscribe", "id": "e", "concept": "nope"}));
    assert_eq!(recv(&mut ws)["code"], "unknown-concept");
}

#[test]
fn malformed_frames_get_one_error_and_keep_the_socket() {
    let st = stack("koalette", SimProfile::koalette());
    let mut ws = client(&st.bridge);
    for (frame, code) in [
        ("not json", "bad-json"),
        (r#"{"type":"teleport"}"#, "bad-type"),
        (r#"{"type":"call","interface":"drive"}"#, "bad-request"),
        (r#"{"type":"unsubscribe","id":"ghost"}"#, "unknown-id"),
    ] {
        ws.send(Message::text(frame)).unwrap();
        let v = recv(&mut ws);
        assert_eq!(v["type"], "error");
        assert_eq!(v["code"], code, "{frame}");
    }
    ws.send(Message::binary(vec![1u8, 2, 3])).unwrap();
    assert_eq!(recv(&mut ws)["code"], "binary-unsupported");
    send(&mut ws, json!({"type": "rdis"}));
    assert_eq!(recv(&mut ws)["type"], "rdis");
}

#[test]
fn subscription_cadence_and_isolation() {
    let st = stack("koalette", SimProfile::koalette());
    let mut a = client(&st.bridge);
    let mut b = client(&st.bridge);
    send(
        &mut a,
        json!({"type": "subscribe", "id": "s1", "concept": "position2d.odometry", "period_ms": 100}),
    );
    send(
        &mut b,
        json!({"type": "subscribe", "id": "s1", "concept": "position2d.odometry", "period_ms": 50}),
    );
    send(
        &mut a,
        json!({"type": "subscribe", "id": "s1", "concept": "position2d.odometry"}),
    );
    assert_eq!(recv_reply(&mut a)["code"], "duplicate-id");

    let t = Instant::now();
    let mut count = 0;
    while t.elapsed() < Duration::from_millis(2000) {
        let v = recv(&mut a);
        assert_eq!(v["type"], "state");
        assert_eq!(v["id"], "s1");
        assert!(v["values"]["x_m"].is_number() && v["age_ms"].is_number());
        count += 1;
    }
    assert!((19..=21).contains(&count), "{count} updates in 2 s at 100 ms");

    send(&mut a, json!({"type": "unsubscribe", "id": "s1"}));
    assert_eq!(recv_reply(&mut a), json!({"type": "result", "id": "s1", "values": {}}));
    // b keeps streaming after a unsubscribed
    for _ in 0..5 {
        assert_eq!(recv(&mut b)["type"], "state");
    }
    // and a goes quiet
    if let MaybeTlsStream::Plain(s) = a.get_ref() {
        s.set_read_timeout(Some(Duration::from_millis(300))).unwrap();
    }
    assert!(a.read().is_err(), "no frames after unsubscribe");
}

#[test]
fn health_and_static_root() {
    let st = stack("finchling", SimProfile::finchling());
    let health = http_get(st.bridge.local_addr(), "/healthz");
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    assert!(health.ends_with("\r\n\r\nok"), "{health}");
    let root = http_get(st.bridge.local_addr(), "/");
    assert!(root.starts_with("HTTP/1.1 200") && root.contains("/ws"), "{root}");
}

#[test]
fn static_bundle_is_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>teleop</h1>").unwrap();
    let st = stack("finchling", SimProfile::finchling());
    let mut cfg = BridgeConfig::new("127.0.0.1:0");
    cfg.static_dir = Some(dir.path().to_path_buf());
    let b = serve(st.rt.clone(), cfg).unwrap();
    let root = http_get(b.local_addr(), "/");
    assert!(root.contains("<h1>teleop</h1>"), "{root}");
}

#[test]
fn shutdown_closes_clients_and_refuses_new_ones() {
    let st = stack("finchling", SimProfile::finchling());
    let mut ws = client(&st.bridge);
    send(
        &mut ws,
        json!({"type": "subscribe", "id": "s", "concept": "position2d.odometry", "period_ms": 20}),
    );
    assert_eq!(recv(&mut ws)["type"], "state");
    let addr = st.bridge.local_addr();
    st.bridge.shutdown();
    st.bridge.shutdown();
    let mut closed = false;
    for _ in 0..100 {
        match ws.read() {
            Ok(Message::Close(_)) | Err(tungstenite::Error::ConnectionClosed) => {
                closed = true;
                break;
            }
            Ok(_) => continue,
            Err(e) => panic!("expected close frame, got {e}"),
        }
    }
    assert!(closed);
    assert!(TcpStream::connect(addr).is_err());
    st.rt.stop();
}
