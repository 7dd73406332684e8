//! Blocking websocket client for the bridge protocol.

use std::net::TcpStream;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

pub struct BridgeClient {
    ws: WebSocket<MaybeTlsStream<TcpStream>>,
    next_id: u64,
}

impl BridgeClient {
    pub fn connect(url: &str) -> Result<Self> {
        let (ws, _) = tungstenite::connect(url).with_context(|| format!("connect {url}"))?;
        if let MaybeTlsStream::Plain(s) = ws.get_ref() {
            s.set_read_timeout(Some(Duration::from_secs(5)))?;
            s.set_nodelay(true)?;
        }
        Ok(Self { ws, next_id: 0 })
    }

    fn send(&mut self, v: Value) -> Result<()> {
        self.ws.send(Message::text(v.to_string())).context("send to bridge")
    }

    fn recv(&mut self) -> Result<Value> {
        loop {
            match self.ws.read().context("read from bridge")? {
                Message::Text(t) => return serde_json::from_str(t.as_str()).context("bridge sent invalid JSON"),
                Message::Close(_) => bail!("bridge closed the connection"),
                _ => continue,
            }
        }
    }

    /// Sends a request and waits for the reply of type `want`. Error
    /// replies become errors.
    fn request(&mut self, v: Value, want: &str) -> Result<Value> {
        let id = v.get("id").cloned();
        self.send(v)?;
        loop {
            let r = self.recv()?;
            if id.is_some() && r.get("id") != id.as_ref() {
                continue;
            }
            match r["type"].as_str() {
                Some(t) if t == want => return Ok(r),
                Some("error") => bail!(
                    "{}: {}",
                    r["code"].as_str().unwrap_or("error"),
                    r["message"].as_str().unwrap_or("")
                ),
                _ => continue,
            }
        }
    }

    /// The device's canonical document text.
    pub fn discover(&mut self) -> Result<String> {
        let r = self.request(json!({"type": "rdis"}), "rdis")?;
        r["document"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| anyhow!("rdis reply without a document"))
    }

    pub fn list(&mut self) -> Result<Value> {
        self.request(json!({"type": "list"}), "list")
    }

    pub fn call(&mut self, target: &str, args: Value) -> Result<Value> {
        self.next_id += 1;
        let id = self.next_id.to_string();
        let r = self.request(
            json!({"type": "call", "id": id, "interface": target, "args": args}),
            "result",
        )?;
        Ok(r["values"].clone())
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
    }
}
