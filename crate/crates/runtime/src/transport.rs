//! Byte-stream endpoints the service loops talk through.

use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use rdis_core::{Connection, Transport as TransportSpec};

use crate::error::RuntimeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadOutcome {
    Data(usize),
    Timeout,
    Closed,
}

pub trait Transport: Send {
    fn write_all(&mut self, bytes: &[u8]) -> io::Result<()>;
    /// Waits up to `timeout` for at least one byte.
    fn read_timeout(&mut self, buf: &mut [u8], timeout: Duration) -> io::Result<ReadOutcome>;
    fn close(&mut self);
}

pub trait TransportFactory: Send + Sync {
    fn open(&self, conn: &Connection) -> Result<Box<dyn Transport>, RuntimeError>;
}

/// Opens TCP connections. `override_addr` replaces the document's
/// host:port, which is how the CLI points a document at a simulator.
#[derive(Debug, Clone, Default)]
pub struct TcpFactory {
    pub override_addr: Option<String>,
    pub connect_timeout: Option<Duration>,
}

impl TcpFactory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_override(addr: impl Into<String>) -> Self {
        Self {
            override_addr: Some(addr.into()),
            connect_timeout: None,
        }
    }
}

const DEFAULT_CONNECT_TIMEOUT: Duration = Duration::from_secs(3);

impl TransportFactory for TcpFactory {
    fn open(&self, conn: &Connection) -> Result<Box<dyn Transport>, RuntimeError> {
        let addr = match (&self.override_addr, &conn.transport) {
            (Some(a), TransportSpec::Tcp { .. }) => a.clone(),
            (None, TransportSpec::Tcp { host, port }) => format!("{host}:{port}"),
            (_, TransportSpec::Serial { .. }) => return Err(RuntimeError::SerialNotImplemented(conn.id.clone())),
        };
        let fail = |e: io::Error| RuntimeError::Transport(format!("connection `{}` to {addr}: {e}", conn.id));
        let timeout = self.connect_timeout.unwrap_or(DEFAULT_CONNECT_TIMEOUT);
        let mut last = None;
        for sa in addr.to_socket_addrs().map_err(fail)? {
            match TcpStream::connect_timeout(&sa, timeout) {
                Ok(s) => {
                    s.set_nodelay(true).map_err(fail)?;
                    return Ok(Box::new(TcpTransport(s)));
                }
                Err(e) => last = Some(e),
            }
        }
        Err(fail(last.unwrap_or_else(|| {
            io::Error::new(io::ErrorKind::NotFound, "no addresses")
        })))
    }
}

pub struct TcpTransport(TcpStream);

impl Transport for TcpTransport {
    fn write_all(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.0.write_all(bytes)
    }

    fn read_timeout(&mut self, buf: &mut [u8], timeout: Duration) -> io::Result<ReadOutcome> {
        self.0.set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        match self.0.read(buf) {
            Ok(0) => Ok(ReadOutcome::Closed),
            Ok(n) => Ok(ReadOutcome::Data(n)),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                Ok(ReadOutcome::Timeout)
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => Ok(ReadOutcome::Timeout),
            Err(e) => Err(e),
        }
    }

    fn close(&mut self) {
        let _ = self.0.shutdown(Shutdown::Both);
    }
}

/// One end of an in-memory byte pipe.
pub struct MemoryTransport {
    tx: Option<Sender<Vec<u8>>>,
    rx: Receiver<Vec<u8>>,
    pending: Vec<u8>,
}

/// Two connected in-memory endpoints.
pub fn memory_pipe() -> (MemoryTransport, MemoryTransport) {
    let (a_tx, a_rx) = mpsc::channel();
    let (b_tx, b_rx) = mpsc::channel();
    (
        MemoryTransport {
            tx: Some(a_tx),
            rx: b_rx,
            pending: Vec::new(),
        },
        MemoryTransport {
            tx: Some(b_tx),
            rx: a_rx,
            pending: Vec::new(),
        },
    )
}

impl Transport for MemoryTransport {
    fn write_all(&mut self, bytes: &[u8]) -> io::Result<()> {
        let tx = self
            .tx
            .as_ref()
            .ok_or_else(|| io::Error::from(io::ErrorKind::NotConnected))?;
        tx.send(bytes.to_vec())
            .map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))
    }

    fn read_timeout(&mut self, buf: &mut [u8], timeout: Duration) -> io::Result<ReadOutcome> {
        if self.pending.is_empty() {
            match self.rx.recv_timeout(timeout) {
                Ok(chunk) => self.pending = chunk,
                Err(RecvTimeoutError::Timeout) => return Ok(ReadOutcome::Timeout),
                Err(RecvTimeoutError::Disconnected) => return Ok(ReadOutcome::Closed),
            }
        }
        let n = buf.len().min(self.pending.len());
        buf[..n].copy_from_slice(&self.pending[..n]);
        self.pending.drain(..n);
        Ok(ReadOutcome::Data(n))
    }

    fn close(&mut self) {
        self.tx = None;
    }
}

/// Hands out pre-built transports in connection order. Used by tests that
/// script the device side by hand.
pub struct MemoryFactory {
    ends: std::sync::Mutex<Vec<MemoryTransport>>,
}

impl MemoryFactory {
    pub fn new(ends: Vec<MemoryTransport>) -> Self {
        Self {
            ends: std::sync::Mutex::new(ends),
        }
    }
}

impl TransportFactory for MemoryFactory {
    fn open(&self, conn: &Connection) -> Result<Box<dyn Transport>, RuntimeError> {
        let mut ends = self.ends.lock().expect("poisoned");
        if ends.is_empty() {
            return Err(RuntimeError::Transport(format!(
                "no memory endpoint left for `{}`",
                conn.id
            )));
        }
        Ok(Box::new(ends.remove(0)))
    }
}
