//! Runtime handle and the per-connection service loops.
//!
//! Each connection gets one thread that owns its transport. Adhoc work
//! arrives over a channel; keepalive and periodic primitives come from the
//! loop's [`Scheduler`]. Nothing else ever writes to a transport, so frames
//! on the wire are always whole and in dispatch order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, Weak};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rdis_core::{
    canonical_text, decode, encode, has_errors, validate, Call, Concept, Env, FieldValues, Frame, FrameAssembler,
    OdometrySource, OutputTarget, Primitive, RdisDocument, Transport as TransportSpec, WHEEL_TRACK_CONSTANT,
};
use tracing::{debug, warn};

use crate::error::RuntimeError;
use crate::odometry::OdometryTracker;
use crate::scheduler::{Action, Scheduler};
use crate::state::{StateStore, StateValue};
use crate::transport::{ReadOutcome, Transport, TransportFactory};

pub const DEFAULT_REPLY_TIMEOUT: Duration = Duration::from_millis(500);

/// Longest a loop sleeps before re-checking its stop flag and draining
/// unsolicited input.
const IDLE_SLICE: Duration = Duration::from_millis(100);
/// Read slice while awaiting a reply.
const REPLY_SLICE: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, Copy)]
pub struct RuntimeConfig {
    pub reply_timeout: Duration,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            reply_timeout: DEFAULT_REPLY_TIMEOUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoopStatus {
    Running,
    /// The transport failed; requests on this connection now fail fast.
    Failed(String),
    Stopped,
}

/// One reading of a telemetry concept.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSample {
    pub concept: Concept,
    pub values: BTreeMap<String, f64>,
    /// Age of the oldest state variable the reading depends on.
    pub age: Duration,
}

struct Job {
    calls: Vec<Call>,
    scope: Env,
    reply: Sender<Result<Env, RuntimeError>>,
}

enum Msg {
    Job(Job),
    Wake,
}

struct LoopHandle {
    id: String,
    tx: Sender<Msg>,
    stop: Arc<AtomicBool>,
    status: Arc<Mutex<LoopStatus>>,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl LoopHandle {
    fn halt(&self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.tx.send(Msg::Wake);
        let handle = self.thread.lock().expect("loop handle poisoned").take();
        if let Some(h) = handle {
            if h.join().is_err() {
                warn!(connection = %self.id, "service loop panicked");
            }
        }
        *self.status.lock().expect("status poisoned") = LoopStatus::Stopped;
    }
}

struct Inner {
    doc: Arc<RdisDocument>,
    canonical: String,
    constants: Env,
    state: Arc<StateStore>,
    odometry: Option<Arc<OdometryTracker>>,
    loops: Vec<LoopHandle>,
    closed: AtomicBool,
}

impl Inner {
    fn shutdown(&self) {
        if self.closed.swap(true, Ordering::SeqCst) {
            return;
        }
        for l in &self.loops {
            l.halt();
        }
    }
}

impl Drop for Inner {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Shareable handle to a running document. Clones refer to the same
/// runtime; the loops stop on [`Runtime::stop`] or when the last clone is
/// dropped.
#[derive(Clone)]
pub struct Runtime {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Runtime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runtime")
            .field("document", &self.inner.doc.name)
            .field("closed", &self.is_closed())
            .finish()
    }
}

impl Runtime {
    /// Opens every connection, runs each connection's `on_connect` list and
    /// arms its schedule. On any failure everything opened so far is closed.
    pub fn start(
        doc: RdisDocument,
        factory: &dyn TransportFactory,
        config: RuntimeConfig,
    ) -> Result<Runtime, RuntimeError> {
        let diags = validate(&doc);
        if has_errors(&diags) {
            return Err(RuntimeError::Invalid(diags));
        }
        if let Some(c) = doc
            .connections
            .iter()
            .find(|c| matches!(c.transport, TransportSpec::Serial { .. }))
        {
            return Err(RuntimeError::SerialNotImplemented(c.id.clone()));
        }

        let canonical = canonical_text(&doc);
        let doc = Arc::new(doc);
        let mut constants = Env::new();
        for (k, v) in &doc.constants {
            constants.bind(k.clone(), *v);
        }
        let start = Instant::now();
        let state = Arc::new(StateStore::new(&doc.state_vars, start));
        let odometry = wheel_travel_tracker(&doc).map(Arc::new);

        let mut transports = Vec::new();
        for conn in &doc.connections {
            match factory.open(conn) {
                Ok(t) => transports.push(t),
                Err(e) => {
                    for mut t in transports {
                        t.close();
                    }
                    return Err(e);
                }
            }
        }

        let mut loops = Vec::new();
        let mut ready = Vec::new();
        for (conn, transport) in doc.connections.iter().zip(transports) {
            let (tx, rx) = mpsc::channel();
            let (ready_tx, ready_rx) = mpsc::channel();
            let stop = Arc::new(AtomicBool::new(false));
            let status = Arc::new(Mutex::new(LoopStatus::Running));
            let worker = Worker {
                conn_id: conn.id.clone(),
                doc: doc.clone(),
                transport,
                assembler: connection_framing(&doc, &conn.id).map(FrameAssembler::new),
                inbox: VecDeque::new(),
                broken: None,
                constants: constants.clone(),
                state: state.clone(),
                odometry: odometry.clone(),
                reply_timeout: config.reply_timeout,
                stop: stop.clone(),
                status: status.clone(),
            };
            let thread = thread::Builder::new()
                .name(format!("rdis-{}", conn.id))
                .spawn(move || worker.run(rx, ready_tx))
                .map_err(|e| RuntimeError::Transport(format!("spawn service loop: {e}")))?;
            loops.push(LoopHandle {
                id: conn.id.clone(),
                tx,
                stop,
                status,
                thread: Mutex::new(Some(thread)),
            });
            ready.push(ready_rx);
        }

        let inner = Arc::new(Inner {
            doc,
            canonical,
            constants,
            state,
            odometry,
            loops,
            closed: AtomicBool::new(false),
        });
        for rx in ready {
            let outcome = rx
                .recv()
                .unwrap_or_else(|_| Err(RuntimeError::Transport("service loop exited during start".into())));
            if let Err(e) = outcome {
                inner.shutdown();
                return Err(e);
            }
        }
        Ok(Runtime { inner })
    }

    pub fn document(&self) -> &RdisDocument {
        &self.inner.doc
    }

    /// Canonical serialization of the running document.
    pub fn canonical_text(&self) -> &str {
        &self.inner.canonical
    }

    pub fn is_closed(&self) -> bool {
        self.inner.closed.load(Ordering::SeqCst)
    }

    pub fn connection_status(&self) -> Vec<(String, LoopStatus)> {
        self.inner
            .loops
            .iter()
            .map(|l| (l.id.clone(), l.status.lock().expect("status poisoned").clone()))
            .collect()
    }

    /// Halts the loops and closes the transports. Calls still queued fail
    /// with [`RuntimeError::Shutdown`]; later calls fail with
    /// [`RuntimeError::Closed`]. Safe to call more than once.
    pub fn stop(&self) {
        self.inner.shutdown();
    }

    fn ensure_open(&self) -> Result<(), RuntimeError> {
        if self.is_closed() {
            Err(RuntimeError::Closed)
        } else {
            Ok(())
        }
    }

    pub fn call_interface(
        &self,
        name: &str,
        args: &BTreeMap<String, f64>,
    ) -> Result<BTreeMap<String, f64>, RuntimeError> {
        self.ensure_open()?;
        let doc = &self.inner.doc;
        let iface = doc
            .interface(name)
            .ok_or_else(|| RuntimeError::UnknownInterface(name.to_string()))?;
        for p in &iface.inputs {
            if !args.contains_key(&p.name) {
                return Err(RuntimeError::MissingArg(p.name.clone()));
            }
        }
        let mut scope = Env::new();
        for (k, v) in args {
            if !iface.inputs.iter().any(|p| &p.name == k) {
                return Err(RuntimeError::UnknownArg(k.clone()));
            }
            scope.bind(k.clone(), *v);
        }

        // Consecutive calls on one connection form a segment that the loop
        // runs without interleaving other adhoc work.
        let mut i = 0;
        while i < iface.calls.len() {
            let conn = &doc
                .primitive(&iface.calls[i].primitive)
                .expect("validated call")
                .connection;
            let mut j = i + 1;
            while j < iface.calls.len()
                && &doc
                    .primitive(&iface.calls[j].primitive)
                    .expect("validated call")
                    .connection
                    == conn
            {
                j += 1;
            }
            scope = self.submit(conn, iface.calls[i..j].to_vec(), scope)?;
            i = j;
        }

        let mut env = self.inner.constants.clone();
        self.inner.state.bind_into(&mut env);
        for (k, v) in scope.iter() {
            env.bind(k, v);
        }
        iface
            .returns
            .iter()
            .map(|(k, e)| Ok((k.clone(), e.eval(&env)?)))
            .collect()
    }

    fn submit(&self, conn: &str, calls: Vec<Call>, scope: Env) -> Result<Env, RuntimeError> {
        let handle = self
            .inner
            .loops
            .iter()
            .find(|l| l.id == conn)
            .expect("one loop per connection");
        let (reply, rx) = mpsc::channel();
        handle
            .tx
            .send(Msg::Job(Job { calls, scope, reply }))
            .map_err(|_| RuntimeError::Shutdown)?;
        rx.recv().unwrap_or(Err(RuntimeError::Shutdown))
    }

    /// Invokes a command concept: its fields and the constants feed the
    /// mapping bindings, which produce the interface arguments.
    pub fn call_concept(
        &self,
        concept: Concept,
        fields: &BTreeMap<String, f64>,
    ) -> Result<BTreeMap<String, f64>, RuntimeError> {
        self.ensure_open()?;
        if !concept.is_command() {
            return Err(RuntimeError::NotCommand(concept.to_string()));
        }
        let mapping = self
            .inner
            .doc
            .mapping(concept)
            .ok_or_else(|| RuntimeError::NoMapping(concept.to_string()))?;
        for f in concept.fields() {
            if !fields.contains_key(*f) {
                return Err(RuntimeError::MissingArg(f.to_string()));
            }
        }
        let mut env = self.inner.constants.clone();
        for (k, v) in fields {
            if !concept.fields().contains(&k.as_str()) {
                return Err(RuntimeError::UnknownArg(k.clone()));
            }
            env.bind(k.clone(), *v);
        }
        let args = mapping
            .bindings
            .iter()
            .map(|(k, e)| Ok((k.clone(), e.eval(&env)?)))
            .collect::<Result<BTreeMap<_, _>, RuntimeError>>()?;
        self.call_interface(&mapping.interface, &args)
    }

    pub fn read_state(&self, names: &[&str]) -> Result<BTreeMap<String, StateValue>, RuntimeError> {
        self.ensure_open()?;
        self.inner.state.snapshot(names)
    }

    /// Evaluates a telemetry concept over the current state.
    pub fn read_concept(&self, concept: Concept) -> Result<ConceptSample, RuntimeError> {
        self.ensure_open()?;
        if concept.is_command() {
            return Err(RuntimeError::NotTelemetry(concept.to_string()));
        }
        let doc = &self.inner.doc;
        let mapping = doc
            .mapping(concept)
            .ok_or_else(|| RuntimeError::NoMapping(concept.to_string()))?;
        let iface = doc.interface(&mapping.interface).expect("validated mapping");

        let snapshot = self.inner.state.snapshot_all();
        let mut env = self.inner.constants.clone();
        for (k, v) in &snapshot {
            env.bind(k.clone(), v.value);
        }
        let used: BTreeSet<String> = iface.returns.values().flat_map(|e| e.free_vars()).collect();
        let age = snapshot
            .iter()
            .filter(|(k, _)| used.contains(*k))
            .map(|(_, v)| v.age)
            .max()
            .unwrap_or_default();

        let values = match mapping.odometry_source() {
            Some(OdometrySource::WheelTravel) => {
                let p = self
                    .inner
                    .odometry
                    .as_ref()
                    .expect("tracker built for wheel-travel mapping")
                    .pose();
                BTreeMap::from([
                    ("x_m".to_string(), p.x_m),
                    ("y_m".to_string(), p.y_m),
                    ("theta_rad".to_string(), p.theta_rad),
                ])
            }
            _ => {
                let mut bound = self.inner.constants.clone();
                for (k, e) in &iface.returns {
                    bound.bind(k.clone(), e.eval(&env)?);
                }
                concept
                    .fields()
                    .iter()
                    .map(|f| {
                        let e = mapping.bindings.get(*f).expect("validated binding");
                        Ok((f.to_string(), e.eval(&bound)?))
                    })
                    .collect::<Result<_, RuntimeError>>()?
            }
        };
        Ok(ConceptSample { concept, values, age })
    }

    /// Emits a reading every `period` until the subscription is cancelled
    /// or dropped, or the runtime stops.
    pub fn subscribe(&self, concept: Concept, period: Duration) -> Result<Subscription, RuntimeError> {
        // Fail now rather than in the first tick.
        self.read_concept(concept)?;
        let period = period.max(Duration::from_millis(1));
        let (tx, rx) = mpsc::channel();
        let cancel = Arc::new(AtomicBool::new(false));
        let weak: Weak<Inner> = Arc::downgrade(&self.inner);
        let flag = cancel.clone();
        let thread = thread::Builder::new()
            .name(format!("rdis-sub-{concept}"))
            .spawn(move || {
                let start = Instant::now();
                let mut k: u32 = 1;
                loop {
                    let due = start + period * k;
                    loop {
                        if flag.load(Ordering::SeqCst) {
                            return;
                        }
                        let now = Instant::now();
                        if now >= due {
                            break;
                        }
                        thread::sleep((due - now).min(Duration::from_millis(20)));
                    }
                    k += 1;
                    let Some(inner) = weak.upgrade() else { return };
                    let rt = Runtime { inner };
                    match rt.read_concept(concept) {
                        Ok(sample) => {
                            if tx.send(sample).is_err() {
                                return;
                            }
                        }
                        Err(RuntimeError::Closed) => return,
                        Err(e) => warn!(%concept, "subscription read failed: {e}"),
                    }
                }
            })
            .map_err(|e| RuntimeError::Transport(format!("spawn subscription: {e}")))?;
        Ok(Subscription {
            rx,
            cancel,
            thread: Some(thread),
        })
    }
}

/// A stream of concept readings. Dropping it cancels the stream.
pub struct Subscription {
    rx: Receiver<ConceptSample>,
    cancel: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Subscription {
    /// Next reading, or `None` on timeout or once the stream has ended.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<ConceptSample> {
        self.rx.recv_timeout(timeout).ok()
    }

    pub fn cancel(mut self) {
        self.finish();
    }

    fn finish(&mut self) {
        self.cancel.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Iterator for Subscription {
    type Item = ConceptSample;

    fn next(&mut self) -> Option<ConceptSample> {
        self.rx.recv().ok()
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.finish();
    }
}

fn wheel_travel_tracker(doc: &RdisDocument) -> Option<OdometryTracker> {
    let m = doc.mapping(Concept::Odometry)?;
    if m.odometry_source() != Some(OdometrySource::WheelTravel) {
        return None;
    }
    let iface = doc.interface(&m.interface)?;
    let track = *doc.constants.get(WHEEL_TRACK_CONSTANT)?;
    Some(OdometryTracker::new(iface.returns.clone(), m.bindings.clone(), track))
}

/// Framing used to split inbound bytes. All replies on one connection
/// share framing (validated), so the first read format decides.
fn connection_framing(doc: &RdisDocument, conn: &str) -> Option<rdis_core::MessageFormat> {
    let mut prims = doc.primitives_on(conn);
    let first_read = doc.primitives_on(conn).find_map(|p| p.read_format.clone());
    first_read.or_else(|| prims.next().map(|p| p.write_format.clone()))
}

/// Rounds an evaluated argument to the integer the codec carries.
fn wire_int(name: &str, v: f64) -> Result<i64, RuntimeError> {
    let r = v.round();
    if !r.is_finite() || r.abs() > 9_007_199_254_740_992.0 {
        return Err(RuntimeError::BadValue {
            name: name.to_string(),
            value: v,
        });
    }
    Ok(r as i64)
}

struct Worker {
    conn_id: String,
    doc: Arc<RdisDocument>,
    transport: Box<dyn Transport>,
    assembler: Option<FrameAssembler>,
    inbox: VecDeque<Frame>,
    broken: Option<String>,
    constants: Env,
    state: Arc<StateStore>,
    odometry: Option<Arc<OdometryTracker>>,
    reply_timeout: Duration,
    stop: Arc<AtomicBool>,
    status: Arc<Mutex<LoopStatus>>,
}

impl Worker {
    fn run(mut self, rx: Receiver<Msg>, ready: Sender<Result<(), RuntimeError>>) {
        let conn = self
            .doc
            .connection(&self.conn_id)
            .expect("loop for declared connection")
            .clone();
        for name in &conn.on_connect {
            if let Err(e) = self.run_call(name, None) {
                let _ = ready.send(Err(RuntimeError::OnConnect {
                    primitive: name.clone(),
                    reason: e.to_string(),
                }));
                self.transport.close();
                return;
            }
        }

        let keepalive = conn
            .keepalive
            .as_ref()
            .map(|k| (k.primitive.as_str(), Duration::from_millis(k.period_ms as u64)));
        let periodic: Vec<(&str, Duration)> = self
            .doc
            .primitives_on(&self.conn_id)
            .filter_map(|p| match p.frequency {
                rdis_core::Frequency::Periodic { period_ms } => {
                    Some((p.name.as_str(), Duration::from_millis(period_ms as u64)))
                }
                rdis_core::Frequency::Adhoc => None,
            })
            .collect();
        let mut sched = Scheduler::new(keepalive, &periodic, Instant::now());
        let _ = ready.send(Ok(()));
        let mut queue: VecDeque<Job> = VecDeque::new();

        loop {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            while let Ok(msg) = rx.try_recv() {
                if let Msg::Job(j) = msg {
                    queue.push_back(j);
                }
            }
            match sched.next_action(Instant::now(), !queue.is_empty()) {
                Action::Keepalive(p) | Action::Periodic(p) => {
                    if self.broken.is_none() {
                        if let Err(e) = self.run_call(&p, None) {
                            warn!(connection = %self.conn_id, primitive = %p, "{e}");
                        }
                    }
                }
                Action::Adhoc => {
                    let job = queue.pop_front().expect("adhoc pending");
                    let result = self.run_job(&job.calls, job.scope);
                    let _ = job.reply.send(result);
                }
                Action::Idle(until) => {
                    let wait = until
                        .map(|u| u.saturating_duration_since(Instant::now()))
                        .unwrap_or(IDLE_SLICE)
                        .min(IDLE_SLICE);
                    match rx.recv_timeout(wait) {
                        Ok(Msg::Job(j)) => queue.push_back(j),
                        Ok(Msg::Wake) => {}
                        Err(RecvTimeoutError::Timeout) => self.drain(),
                        Err(RecvTimeoutError::Disconnected) => break,
                    }
                }
            }
        }

        for job in queue {
            let _ = job.reply.send(Err(RuntimeError::Shutdown));
        }
        while let Ok(msg) = rx.try_recv() {
            if let Msg::Job(j) = msg {
                let _ = j.reply.send(Err(RuntimeError::Shutdown));
            }
        }
        self.transport.close();
        debug!(connection = %self.conn_id, "service loop stopped");
    }

    fn run_job(&mut self, calls: &[Call], mut scope: Env) -> Result<Env, RuntimeError> {
        for call in calls {
            let returns = self.run_call(&call.primitive, Some((call, &scope)))?;
            for (k, v) in returns {
                scope.bind(k, v);
            }
        }
        Ok(scope)
    }

    /// Encodes, writes and (if the primitive has a reply) awaits and applies
    /// one primitive. Returns the `prim.field` bindings of return outputs.
    fn run_call(&mut self, name: &str, call: Option<(&Call, &Env)>) -> Result<Vec<(String, f64)>, RuntimeError> {
        if let Some(reason) = &self.broken {
            return Err(RuntimeError::Transport(reason.clone()));
        }
        let doc = self.doc.clone();
        let prim = doc.primitive(name).expect("validated primitive");
        let mut values = FieldValues::new();
        if let Some((call, scope)) = call {
            let mut env = self.constants.clone();
            self.state.bind_into(&mut env);
            for (k, v) in scope.iter() {
                env.bind(k, v);
            }
            for p in &prim.inputs {
                let expr = call.args.get(&p.name).expect("validated call arguments");
                values.insert(p.name.clone(), wire_int(&p.name, expr.eval(&env)?)?);
            }
        }
        let Some(reply) = self.exchange(prim, &values)? else {
            return Ok(Vec::new());
        };

        let mut returns = Vec::new();
        let mut updates = Vec::new();
        for o in &prim.outputs {
            let v = reply[&o.field] as f64;
            match &o.target {
                OutputTarget::Return => returns.push((format!("{}.{}", prim.name, o.field), v)),
                OutputTarget::State(var) => updates.push((var.clone(), v)),
            }
        }
        if !updates.is_empty() {
            self.state.set_many(&updates);
            if let Some(t) = &self.odometry {
                let mut env = self.constants.clone();
                self.state.bind_into(&mut env);
                if let Err(e) = t.update(&env) {
                    warn!("odometry update: {e}");
                }
            }
        }
        Ok(returns)
    }

    fn exchange(&mut self, prim: &Primitive, values: &FieldValues) -> Result<Option<FieldValues>, RuntimeError> {
        let codec_err = |source| RuntimeError::Codec {
            primitive: prim.name.clone(),
            source,
        };
        let frame = encode(&prim.write_format, values).map_err(codec_err)?;
        // Anything already buffered predates this request.
        self.inbox.clear();
        if let Err(e) = self.transport.write_all(frame.as_bytes()) {
            return Err(self.fail(format!("write: {e}")));
        }
        let Some(rf) = &prim.read_format else {
            return Ok(None);
        };
        let reply = self.await_reply(rf.tag(), &prim.name)?;
        decode(rf, reply.as_bytes()).map(Some).map_err(codec_err)
    }

    fn await_reply(&mut self, tag: u8, primitive: &str) -> Result<Frame, RuntimeError> {
        let deadline = Instant::now() + self.reply_timeout;
        let mut buf = [0u8; 512];
        loop {
            while let Some(f) = self.inbox.pop_front() {
                if f.tag() == Some(tag) {
                    return Ok(f);
                }
                debug!(connection = %self.conn_id, frame = %f.hex(), "dropping unmatched frame");
            }
            if self.stop.load(Ordering::SeqCst) {
                return Err(RuntimeError::Shutdown);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(RuntimeError::ReplyTimeout(primitive.to_string()));
            }
            match self.transport.read_timeout(&mut buf, (deadline - now).min(REPLY_SLICE)) {
                Ok(ReadOutcome::Data(n)) => self.accept(&buf[..n]),
                Ok(ReadOutcome::Timeout) => {}
                Ok(ReadOutcome::Closed) => return Err(self.fail("closed by peer".into())),
                Err(e) => return Err(self.fail(format!("read: {e}"))),
            }
        }
    }

    fn accept(&mut self, bytes: &[u8]) {
        if let Some(a) = &mut self.assembler {
            self.inbox.extend(a.push(bytes));
        }
    }

    /// Reads whatever arrived while idle so unsolicited output cannot back
    /// up the transport.
    fn drain(&mut self) {
        if self.broken.is_some() {
            return;
        }
        let mut buf = [0u8; 512];
        loop {
            match self.transport.read_timeout(&mut buf, Duration::from_millis(1)) {
                Ok(ReadOutcome::Data(n)) => self.accept(&buf[..n]),
                Ok(ReadOutcome::Timeout) => break,
                Ok(ReadOutcome::Closed) => {
                    self.fail("closed by peer".into());
                    break;
                }
                Err(e) => {
                    self.fail(format!("read: {e}"));
                    break;
                }
            }
        }
        for f in self.inbox.drain(..) {
            debug!(connection = %self.conn_id, frame = %f.hex(), "dropping unsolicited frame");
        }
    }

    fn fail(&mut self, reason: String) -> RuntimeError {
        let reason = format!("connection `{}`: {reason}", self.conn_id);
        warn!("{reason}");
        self.broken = Some(reason.clone());
        *self.status.lock().expect("status poisoned") = LoopStatus::Failed(reason.clone());
        RuntimeError::Transport(reason)
    }
}
