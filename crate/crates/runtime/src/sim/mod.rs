//! Device simulator served over TCP: a control port speaking the profile's
//! firmware protocol and an inspection port answering `?` with one JSON
//! line describing the device.

mod device;

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;
use tracing::{debug, info, warn};

pub use device::{EncoderView, LogEntry, PoseView, ProfileId, SimDevice, SimProfile, SimSnapshot, WheelView};

const PHYSICS_PERIOD: Duration = Duration::from_millis(10);
const POLL: Duration = Duration::from_millis(10);
const CLIENT_READ_TIMEOUT: Duration = Duration::from_millis(50);

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("inspect {addr}: {source}")]
    Inspect { addr: String, source: io::Error },
    #[error("inspect {addr}: bad reply: {reason}")]
    BadReply { addr: String, reason: String },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub profile: SimProfile,
    /// Control listener address; port 0 picks a free port.
    pub control_addr: String,
    pub inspect_addr: String,
    pub initial_encoders: (i64, i64),
}

impl SimConfig {
    /// Both ports on loopback, chosen by the OS.
    pub fn ephemeral(profile: SimProfile) -> Self {
        Self {
            profile,
            control_addr: "127.0.0.1:0".into(),
            inspect_addr: "127.0.0.1:0".into(),
            initial_encoders: (0, 0),
        }
    }
}

/// A running simulator. Dropping it stops the servers.
pub struct SimHandle {
    control_addr: SocketAddr,
    inspect_addr: SocketAddr,
    device: Arc<Mutex<SimDevice>>,
    stop: Arc<AtomicBool>,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

impl SimHandle {
    pub fn control_addr(&self) -> SocketAddr {
        self.control_addr
    }

    pub fn inspect_addr(&self) -> SocketAddr {
        self.inspect_addr
    }

    pub fn snapshot(&self) -> SimSnapshot {
        self.device.lock().expect("sim lock poisoned").snapshot(Instant::now())
    }

    /// The retained frame log, oldest first.
    pub fn log(&self) -> Vec<LogEntry> {
        self.device.lock().expect("sim lock poisoned").log()
    }

    pub fn is_stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    /// Stops all servers and waits for their threads. Idempotent.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        let threads = std::mem::take(&mut *self.threads.lock().expect("sim threads poisoned"));
        for t in threads {
            let _ = t.join();
        }
    }
}

impl Drop for SimHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn bind(addr: &str) -> Result<TcpListener, SimError> {
    let fail = |source| SimError::Bind {
        addr: addr.to_string(),
        source,
    };
    let l = TcpListener::bind(addr).map_err(fail)?;
    l.set_nonblocking(true).map_err(fail)?;
    Ok(l)
}

pub fn run_sim(config: SimConfig) -> Result<SimHandle, SimError> {
    let control = bind(&config.control_addr)?;
    let inspect = bind(&config.inspect_addr)?;
    let control_addr = control.local_addr().expect("bound listener has an address");
    let inspect_addr = inspect.local_addr().expect("bound listener has an address");
    let device = Arc::new(Mutex::new(SimDevice::new(
        config.profile,
        config.initial_encoders,
        Instant::now(),
    )));
    let stop = Arc::new(AtomicBool::new(false));

    let physics = {
        let (device, stop) = (device.clone(), stop.clone());
        thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                device.lock().expect("sim lock poisoned").advance(Instant::now());
                thread::sleep(PHYSICS_PERIOD);
            }
        })
    };
    let control_thread = {
        let (device, stop) = (device.clone(), stop.clone());
        thread::spawn(move || control_loop(control, device, stop))
    };
    let inspect_thread = {
        let (device, stop) = (device.clone(), stop.clone());
        thread::spawn(move || inspect_loop(inspect, device, stop))
    };
    info!(profile = %config.profile.id, %control_addr, %inspect_addr, "sim listening");
    Ok(SimHandle {
        control_addr,
        inspect_addr,
        device,
        stop,
        threads: Mutex::new(vec![physics, control_thread, inspect_thread]),
    })
}

/// Serves one control client at a time; others wait in the backlog.
fn control_loop(listener: TcpListener, device: Arc<Mutex<SimDevice>>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                debug!(%peer, "control client connected");
                if let Err(e) = serve_control(stream, &device, &stop) {
                    debug!(%peer, "control client: {e}");
                }
                debug!(%peer, "control client gone");
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                warn!("control accept: {e}");
                thread::sleep(POLL);
            }
        }
    }
}

fn serve_control(mut stream: TcpStream, device: &Mutex<SimDevice>, stop: &AtomicBool) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(CLIENT_READ_TIMEOUT))?;
    device
        .lock()
        .expect("sim lock poisoned")
        .client_connected(Instant::now());
    let mut buf = [0u8; 1024];
    while !stop.load(Ordering::SeqCst) {
        match stream.read(&mut buf) {
            Ok(0) => return Ok(()),
            Ok(n) => {
                let reply = device
                    .lock()
                    .expect("sim lock poisoned")
                    .receive(&buf[..n], Instant::now());
                if !reply.is_empty() {
                    stream.write_all(&reply)?;
                }
            }
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut | io::ErrorKind::Interrupted
                ) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn inspect_loop(listener: TcpListener, device: Arc<Mutex<SimDevice>>, stop: Arc<AtomicBool>) {
    let mut clients: Vec<JoinHandle<()>> = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let (device, stop) = (device.clone(), stop.clone());
                clients.push(thread::spawn(move || {
                    if let Err(e) = serve_inspect(stream, &device, &stop) {
                        debug!("inspect client: {e}");
                    }
                }));
                clients.retain(|c| !c.is_finished());
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                warn!("inspect accept: {e}");
                thread::sleep(POLL);
            }
        }
    }
    for c in clients {
        let _ = c.join();
    }
}

fn serve_inspect(stream: TcpStream, device: &Mutex<SimDevice>, stop: &AtomicBool) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(CLIENT_READ_TIMEOUT))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    while !stop.load(Ordering::SeqCst) {
        match reader.read_line(&mut line) {
            Ok(0) => return Ok(()),
            Ok(_) => {
                let reply = match line.trim() {
                    "?" => {
                        let snap = device.lock().expect("sim lock poisoned").snapshot(Instant::now());
                        serde_json::to_string(&snap).expect("snapshot serializes")
                    }
                    other => serde_json::json!({ "error": format!("unknown request `{other}`") }).to_string(),
                };
                writer.write_all(reply.as_bytes())?;
                writer.write_all(b"\n")?;
                line.clear();
            }
            // A partial line stays in `line` and is completed by the next read.
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut | io::ErrorKind::Interrupted
                ) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Connects to an inspection port and fetches one snapshot.
pub fn inspect(addr: &str) -> Result<SimSnapshot, SimError> {
    let fail = |source| SimError::Inspect {
        addr: addr.to_string(),
        source,
    };
    let sock: SocketAddr = std::net::ToSocketAddrs::to_socket_addrs(addr)
        .map_err(fail)?
        .next()
        .ok_or_else(|| fail(io::Error::new(io::ErrorKind::NotFound, "no address")))?;
    let stream = TcpStream::connect_timeout(&sock, Duration::from_secs(2)).map_err(fail)?;
    stream.set_read_timeout(Some(Duration::from_secs(2))).map_err(fail)?;
    (&stream).write_all(b"?\n").map_err(fail)?;
    let mut line = String::new();
    BufReader::new(&stream).read_line(&mut line).map_err(fail)?;
    serde_json::from_str(&line).map_err(|e| SimError::BadReply {
        addr: addr.to_string(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serves_control_and_inspect() {
        let sim = run_sim(SimConfig::ephemeral(SimProfile::koalette())).unwrap();
        let mut c = TcpStream::connect(sim.control_addr()).unwrap();
        c.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
        c.write_all(b"E\n").unwrap();
        let mut buf = [0u8; 32];
        let n = c.read(&mut buf).unwrap();
        assert_eq!(&buf[..n], b"e,0,0\n");

        let snap = inspect(&sim.inspect_addr().to_string()).unwrap();
        assert_eq!(snap.profile, ProfileId::Koalette);
        assert_eq!(snap.commands["E"], 1);
        assert_eq!(snap.log_tail[0].text, "E\\n");
        sim.stop();
        sim.stop();
        assert!(inspect(&sim.inspect_addr().to_string()).is_err());
    }

    #[test]
    fn busy_port_is_a_bind_error() {
        let sim = run_sim(SimConfig::ephemeral(SimProfile::finchling())).unwrap();
        let mut cfg = SimConfig::ephemeral(SimProfile::finchling());
        cfg.control_addr = sim.control_addr().to_string();
        assert!(matches!(run_sim(cfg), Err(SimError::Bind { .. })));
    }
}
