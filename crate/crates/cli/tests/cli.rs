use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::{Child, ChildStdout, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(rel: &str) -> String {
    root().join("fixtures").join(rel).to_string_lossy().into_owned()
}

fn rdis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdis")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Long-running subcommand; killed on drop unless already reaped.
struct Daemon {
    child: Child,
    out: BufReader<ChildStdout>,
}

impl Daemon {
    fn start(args: &[&str]) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_rdis"))
            .args(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let out = BufReader::new(child.stdout.take().unwrap());
        Self { child, out }
    }

    fn line(&mut self) -> String {
        let mut s = String::new();
        self.out.read_line(&mut s).unwrap();
        s.trim_end().to_string()
    }

    fn interrupt(&mut self) -> (i32, String) {
        let ok = Command::new("kill")
            .args(["-INT", &self.child.id().to_string()])
            .status()
            .unwrap();
        assert!(ok.success());
        let t = Instant::now();
        let status = loop {
            if let Some(s) = self.child.try_wait().unwrap() {
                break s;
            }
            assert!(t.elapsed() < Duration::from_secs(5), "did not exit after SIGINT");
            std::thread::sleep(Duration::from_millis(20));
        };
        let mut rest = String::new();
        while self.out.read_line(&mut rest).unwrap_or(0) > 0 {}
        (status.code().unwrap_or(-1), rest)
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Starts `rdis sim` on ephemeral ports; returns the daemon and its control address.
fn sim(profile: &str) -> (Daemon, String) {
    let mut d = Daemon::start(&["sim", "--profile", profile, "--port", "0", "--inspect-port", "0"]);
    let line = d.line();
    let control = line
        .split_whitespace()
        .nth(3)
        .unwrap_or_else(|| panic!("banner `{line}`"))
        .to_string();
    (d, control)
}

fn run(doc: &str, control: &str) -> (Daemon, String) {
    let mut d = Daemon::start(&["run", &fixture(doc), "--connect", control, "--bridge-port", "0"]);
    assert!(d.line().starts_with("runtime "));
    let url = d.line().strip_prefix("bridge ").expect("bridge line").to_string();
    (d, url)
}

#[test]
fn validate_exit_codes() {
    let ok = rdis(&["validate", &fixture("koalette.rdis.json")]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).starts_with("ok: koalette "), "{}", stdout(&ok));

    let bad = rdis(&["validate", &fixture("invalid/dangling-ref.rdis.json")]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("dangling-ref"), "{}", stderr(&bad));

    let missing = rdis(&["validate", "/nonexistent/robot.rdis.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(rdis(&["validate"]).status.code(), Some(2));
    assert_eq!(rdis(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn inspect_views() {
    let text = rdis(&["inspect", &fixture("finchling.rdis.json")]);
    assert!(text.status.success());
    let s = stdout(&text);
    assert!(s.starts_with("finchling "), "{s}");
    assert!(s.contains("position2d.command_velocity -> drive"), "{s}");

    let json = rdis(&["inspect", "--json", &fixture("finchling.rdis.json")]);
    let v: Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["name"], "finchling");
    assert_eq!(v["concepts"][0]["kind"], "command");
    assert!(v["primitives"]
        .as_array()
        .unwrap()
        .iter()
        .any(|p| p["name"] == "setMotor"));
}

#[test]
fn generate_writes_refuses_and_forces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let doc = fixture("koalette.rdis.json");
    let first = rdis(&["generate", &doc, "--out", out]);
    assert!(first.status.success(), "{}", stderr(&first));
    let written: Vec<String> = stdout(&first).lines().map(str::to_string).collect();
    assert_eq!(written.len(), 2);
    let golden = std::fs::read(root().join("fixtures/golden/koalette/c-cli/main.c")).unwrap();
    assert_eq!(std::fs::read(dir.path().join("koalette/c-cli/main.c")).unwrap(), golden);

    let again = rdis(&["generate", &doc, "--out", out]);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("--force"), "{}", stderr(&again));
    assert!(rdis(&["generate", &doc, "--out", out, "--force"]).status.success());

    let unknown = rdis(&["generate", &doc, "--target", "ros2", "--out", out]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(stderr(&unknown).contains("c-cli"), "{}", stderr(&unknown));
}

#[test]
fn sim_port_in_use_is_a_domain_error() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let o = rdis(&["sim", "--port", &port, "--inspect-port", "0"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn run_without_a_device_fails() {
    // bind then drop to get a port with nothing listening
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let o = rdis(&[
        "run",
        &fixture("koalette.rdis.json"),
        "--connect",
        &format!("127.0.0.1:{port}"),
        "--bridge-port",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn discover_without_a_bridge_fails() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let o = rdis(&["discover", "--connect", &format!("ws://127.0.0.1:{port}/ws")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn discover_summary_and_drive_refusal() {
    let (_sim, control) = sim("finchling");
    let (_run, url) = run("finchling-keepalive.rdis.json", &control);

    let o = rdis(&["discover", "--connect", &url, "--summary"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("finchling_keepalive 1.0.0"), "{}", stdout(&o));

    let o = rdis(&["drive", "--connect", &url, "--linear", "0.1", "--duration", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("position2d.command_velocity"), "{}", stderr(&o));
}

#[test]
fn drive_rejects_bad_numbers() {
    let o = rdis(&["drive", "--rate-hz", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rdis(&["drive", "--duration", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn interrupt_shuts_down_cleanly() {
    let (mut sim, control) = sim("koalette");
    let (mut run, url) = run("koalette.rdis.json", &control);
    let (code, rest) = run.interrupt();
    assert_eq!(code, 0);
    assert_eq!(rest.trim(), "stopped");
    let o = rdis(&["discover", "--connect", &url]);
    assert_eq!(o.status.code(), Some(1), "bridge still up after shutdown");

    let (code, rest) = sim.interrupt();
    assert_eq!(code, 0);
    assert_eq!(rest.trim(), "sim stopped");
}
