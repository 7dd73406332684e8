//! Emulated firmware: protocol tables, physics and the safety timer.
//! Time is passed in explicitly so the model is deterministic under test.

use std::collections::{BTreeMap, VecDeque};
use std::time::{Duration, Instant};

use rdis_core::{
    decode, encode, forward, integrate_pose, DelimitedFormat, FieldEncoding, FieldValues, FrameAssembler,
    MessageFormat, Pose, PositionalField, PositionalFormat, WheelSpeeds,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileId {
    Finchling,
    Koalette,
}

impl ProfileId {
    pub const ALL: [ProfileId; 2] = [ProfileId::Finchling, ProfileId::Koalette];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileId::Finchling => "finchling",
            ProfileId::Koalette => "koalette",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl std::fmt::Display for ProfileId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimProfile {
    pub id: ProfileId,
    pub wheel_track_m: f64,
    pub ticks_per_meter: f64,
    pub max_wheel_mps: f64,
    pub keepalive_timeout_ms: u64,
}

impl SimProfile {
    pub fn finchling() -> Self {
        Self {
            id: ProfileId::Finchling,
            wheel_track_m: 0.1,
            ticks_per_meter: 1000.0,
            max_wheel_mps: 0.5,
            keepalive_timeout_ms: 2000,
        }
    }

    pub fn koalette() -> Self {
        Self {
            id: ProfileId::Koalette,
            wheel_track_m: 0.3,
            ticks_per_meter: 5882.0,
            max_wheel_mps: 1.0,
            keepalive_timeout_ms: 2000,
        }
    }

    pub fn of(id: ProfileId) -> Self {
        match id {
            ProfileId::Finchling => Self::finchling(),
            ProfileId::Koalette => Self::koalette(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    SetWheels,
    Keepalive,
    QueryEncoders,
}

#[derive(Debug, Clone)]
struct Entry {
    command: Command,
    request: MessageFormat,
    reply: Option<MessageFormat>,
}

#[derive(Debug, Clone)]
struct Protocol {
    framing: MessageFormat,
    entries: Vec<Entry>,
}

impl Protocol {
    fn for_profile(id: ProfileId) -> Self {
        match id {
            ProfileId::Finchling => {
                let pos = |command: u8, fields: &[(&str, usize, FieldEncoding)]| {
                    MessageFormat::Positional(PositionalFormat {
                        frame_len: 8,
                        command,
                        fields: fields
                            .iter()
                            .map(|(name, offset, encoding)| PositionalField {
                                name: name.to_string(),
                                offset: *offset,
                                width: encoding.width(),
                                encoding: *encoding,
                            })
                            .collect(),
                    })
                };
                Protocol {
                    framing: pos(0, &[]),
                    entries: vec![
                        Entry {
                            command: Command::SetWheels,
                            request: pos(b'M', &[("left", 1, FieldEncoding::I8), ("right", 2, FieldEncoding::I8)]),
                            reply: None,
                        },
                        Entry {
                            command: Command::Keepalive,
                            request: pos(b'K', &[]),
                            reply: None,
                        },
                        Entry {
                            command: Command::QueryEncoders,
                            request: pos(b'E', &[]),
                            reply: Some(pos(
                                b'e',
                                &[("left", 1, FieldEncoding::I16Be), ("right", 3, FieldEncoding::I16Be)],
                            )),
                        },
                    ],
                }
            }
            ProfileId::Koalette => {
                let del =
                    |prefix: char, fields: &[&str]| MessageFormat::Delimited(DelimitedFormat::new(prefix, fields));
                Protocol {
                    framing: del('?', &[]),
                    entries: vec![
                        Entry {
                            command: Command::SetWheels,
                            request: del('D', &["left", "right"]),
                            reply: Some(del('d', &[])),
                        },
                        Entry {
                            command: Command::Keepalive,
                            request: del('K', &[]),
                            reply: Some(del('k', &[])),
                        },
                        Entry {
                            command: Command::QueryEncoders,
                            request: del('E', &[]),
                            reply: Some(del('e', &["left", "right"])),
                        },
                    ],
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Milliseconds since the sim started.
    pub t_ms: f64,
    /// `rx` for frames from the client, `tx` for replies.
    pub dir: String,
    pub hex: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseView {
    pub x_m: f64,
    pub y_m: f64,
    pub theta_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelView {
    pub left_mps: f64,
    pub right_mps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderView {
    pub left: i64,
    pub right: i64,
}

/// Answer to an inspection request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSnapshot {
    pub profile: ProfileId,
    pub pose: PoseView,
    pub wheels: WheelView,
    /// Accumulated ticks, floored, before any wire wrapping.
    pub encoders: EncoderView,
    pub safety_stopped: bool,
    /// Times the safety timer has fired since start.
    pub safety_stops: u64,
    pub frames_received: u64,
    pub frames_dropped: u64,
    pub log_len: u64,
    pub log_tail: Vec<LogEntry>,
    /// Valid inbound frames per command tag.
    pub commands: BTreeMap<String, u64>,
}

const LOG_CAP: usize = 8192;
const LOG_TAIL: usize = 16;

#[derive(Debug)]
pub struct SimDevice {
    profile: SimProfile,
    protocol: Protocol,
    assembler: FrameAssembler,
    start: Instant,
    physics_at: Instant,
    last_valid: Instant,
    pose: Pose,
    wheels: WheelSpeeds,
    encoders: (f64, f64),
    safety_stopped: bool,
    safety_stops: u64,
    frames_received: u64,
    frames_dropped: u64,
    log: VecDeque<LogEntry>,
    log_len: u64,
    commands: BTreeMap<String, u64>,
}

impl SimDevice {
    pub fn new(profile: SimProfile, initial_encoders: (i64, i64), now: Instant) -> Self {
        let protocol = Protocol::for_profile(profile.id);
        Self {
            assembler: FrameAssembler::new(protocol.framing.clone()),
            protocol,
            profile,
            start: now,
            physics_at: now,
            last_valid: now,
            pose: Pose::ORIGIN,
            wheels: WheelSpeeds::ZERO,
            encoders: (initial_encoders.0 as f64, initial_encoders.1 as f64),
            safety_stopped: false,
            safety_stops: 0,
            frames_received: 0,
            frames_dropped: 0,
            log: VecDeque::new(),
            log_len: 0,
            commands: BTreeMap::new(),
        }
    }

    pub fn profile(&self) -> &SimProfile {
        &self.profile
    }

    /// A new control client starts a fresh safety window and framing.
    pub fn client_connected(&mut self, now: Instant) {
        self.advance(now);
        self.assembler.clear();
        self.last_valid = now;
    }

    /// Integrates the physics up to `now`. If the safety deadline falls
    /// inside the interval the wheels stop exactly at the deadline.
    pub fn advance(&mut self, now: Instant) {
        if now <= self.physics_at {
            return;
        }
        if !self.safety_stopped {
            let deadline = self.last_valid + Duration::from_millis(self.profile.keepalive_timeout_ms);
            if deadline <= now {
                if deadline > self.physics_at {
                    self.integrate(deadline - self.physics_at);
                    self.physics_at = deadline;
                }
                self.wheels = WheelSpeeds::ZERO;
                self.safety_stopped = true;
                self.safety_stops += 1;
            }
        }
        self.integrate(now - self.physics_at);
        self.physics_at = now;
    }

    fn integrate(&mut self, dt: Duration) {
        let dt = dt.as_secs_f64();
        let twist = forward(self.wheels, self.profile.wheel_track_m).expect("profile track is positive");
        self.pose = integrate_pose(self.pose, twist, dt).expect("dt is non-negative");
        self.encoders.0 += self.wheels.left_mps * self.profile.ticks_per_meter * dt;
        self.encoders.1 += self.wheels.right_mps * self.profile.ticks_per_meter * dt;
    }

    /// Feeds raw bytes from the control connection; returns reply bytes.
    pub fn receive(&mut self, bytes: &[u8], now: Instant) -> Vec<u8> {
        self.advance(now);
        let mut out = Vec::new();
        for frame in self.assembler.push(bytes) {
            self.frames_received += 1;
            self.record(now, "rx", frame.as_bytes());
            match self.handle(frame.as_bytes(), now) {
                Some(reply) => {
                    if !reply.is_empty() {
                        self.record(now, "tx", &reply);
                        out.extend(reply);
                    }
                }
                None => self.frames_dropped += 1,
            }
        }
        out
    }

    /// Dispatches one frame. `None` means it was malformed.
    fn handle(&mut self, frame: &[u8], now: Instant) -> Option<Vec<u8>> {
        let tag = *frame.first()?;
        let entry = self.protocol.entries.iter().find(|e| e.request.tag() == tag)?.clone();
        let values = decode(&entry.request, frame).ok()?;

        self.last_valid = now;
        self.safety_stopped = false;
        *self.commands.entry((tag as char).to_string()).or_default() += 1;

        let reply_values = match entry.command {
            Command::SetWheels => {
                self.wheels = self.wheel_command(values["left"], values["right"]);
                FieldValues::new()
            }
            Command::Keepalive => FieldValues::new(),
            Command::QueryEncoders => {
                let (l, r) = self.wire_encoders();
                FieldValues::from([("left".to_string(), l), ("right".to_string(), r)])
            }
        };
        match &entry.reply {
            Some(fmt) => Some(
                encode(fmt, &reply_values)
                    .expect("reply values fit the profile format")
                    .into_bytes(),
            ),
            None => Some(Vec::new()),
        }
    }

    fn wheel_command(&self, left: i64, right: i64) -> WheelSpeeds {
        let max = self.profile.max_wheel_mps;
        let to_mps = |raw: i64| match self.profile.id {
            ProfileId::Finchling => raw.clamp(-100, 100) as f64 / 100.0 * max,
            ProfileId::Koalette => (raw as f64 / self.profile.ticks_per_meter).clamp(-max, max),
        };
        WheelSpeeds::new(to_mps(left), to_mps(right))
    }

    fn floored_encoders(&self) -> (i64, i64) {
        (self.encoders.0.floor() as i64, self.encoders.1.floor() as i64)
    }

    /// Encoder counts as the firmware reports them: finchling counters are
    /// 16-bit and wrap.
    fn wire_encoders(&self) -> (i64, i64) {
        let (l, r) = self.floored_encoders();
        match self.profile.id {
            ProfileId::Finchling => (l as i16 as i64, r as i16 as i64),
            ProfileId::Koalette => (l, r),
        }
    }

    fn record(&mut self, now: Instant, dir: &str, bytes: &[u8]) {
        if self.log.len() == LOG_CAP {
            self.log.pop_front();
        }
        self.log.push_back(LogEntry {
            t_ms: now.saturating_duration_since(self.start).as_secs_f64() * 1000.0,
            dir: dir.to_string(),
            hex: bytes.iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" "),
            text: bytes.escape_ascii().to_string(),
        });
        self.log_len += 1;
    }

    /// Up to the most recent 8192 log entries, oldest first.
    pub fn log(&self) -> Vec<LogEntry> {
        self.log.iter().cloned().collect()
    }

    pub fn snapshot(&mut self, now: Instant) -> SimSnapshot {
        self.advance(now);
        let (l, r) = self.floored_encoders();
        SimSnapshot {
            profile: self.profile.id,
            pose: PoseView {
                x_m: self.pose.x_m,
                y_m: self.pose.y_m,
                theta_rad: self.pose.theta_rad,
            },
            wheels: WheelView {
                left_mps: self.wheels.left_mps,
                right_mps: self.wheels.right_mps,
            },
            encoders: EncoderView { left: l, right: r },
            safety_stopped: self.safety_stopped,
            safety_stops: self.safety_stops,
            frames_received: self.frames_received,
            frames_dropped: self.frames_dropped,
            log_len: self.log_len,
            log_tail: self
                .log
                .iter()
                .skip(self.log.len().saturating_sub(LOG_TAIL))
                .cloned()
                .collect(),
            commands: self.commands.clone(),
        }
    }
}
