//! Typed device description.
//!
//! A document is parsed from JSON by [`crate::parse`], checked by
//! [`crate::validate`], and written back out by [`crate::canonical`]. All
//! collections keep declaration order except name-keyed maps, which are
//! sorted.

use std::collections::BTreeMap;
use std::fmt;

use crate::expr::ExprAst;

pub const RDIS_VERSION: &str = "0.1";

#[derive(Debug, Clone, PartialEq)]
pub struct RdisDocument {
    pub rdis_version: String,
    pub name: String,
    pub version: String,
    pub constants: BTreeMap<String, f64>,
    pub connections: Vec<Connection>,
    pub state_vars: Vec<StateVar>,
    pub primitives: Vec<Primitive>,
    pub interfaces: Vec<Interface>,
    pub mappings: Vec<AbstractMapping>,
}

impl RdisDocument {
    pub fn connection(&self, id: &str) -> Option<&Connection> {
        self.connections.iter().find(|c| c.id == id)
    }

    pub fn primitive(&self, name: &str) -> Option<&Primitive> {
        self.primitives.iter().find(|p| p.name == name)
    }

    pub fn interface(&self, name: &str) -> Option<&Interface> {
        self.interfaces.iter().find(|i| i.name == name)
    }

    pub fn state_var(&self, name: &str) -> Option<&StateVar> {
        self.state_vars.iter().find(|s| s.name == name)
    }

    pub fn mapping(&self, concept: Concept) -> Option<&AbstractMapping> {
        self.mappings.iter().find(|m| m.concept == concept)
    }

    pub fn primitives_on<'a>(&'a self, connection: &'a str) -> impl Iterator<Item = &'a Primitive> + 'a {
        self.primitives.iter().filter(move |p| p.connection == connection)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Tcp {
        host: String,
        port: u16,
    },
    /// Accepted by the schema; the runtime refuses to open it.
    Serial {
        device: String,
        baud: u32,
    },
}

impl Transport {
    pub fn kind(&self) -> &'static str {
        match self {
            Transport::Tcp { .. } => "tcp",
            Transport::Serial { .. } => "serial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadingModel {
    Single,
    Dual,
    Multiple,
}

impl ThreadingModel {
    pub fn as_str(self) -> &'static str {
        match self {
            ThreadingModel::Single => "single",
            ThreadingModel::Dual => "dual",
            ThreadingModel::Multiple => "multiple",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "single" => Some(ThreadingModel::Single),
            "dual" => Some(ThreadingModel::Dual),
            "multiple" => Some(ThreadingModel::Multiple),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keepalive {
    pub primitive: String,
    pub period_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connection {
    pub id: String,
    pub transport: Transport,
    pub threading_model: ThreadingModel,
    pub keepalive: Option<Keepalive>,
    pub on_connect: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Int,
    Float,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Int => "int",
            ValueKind::Float => "float",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "int" => Some(ValueKind::Int),
            "float" => Some(ValueKind::Float),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVar {
    pub name: String,
    pub kind: ValueKind,
    pub initial: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    Adhoc,
    Periodic { period_ms: i64 },
}

impl Frequency {
    pub fn is_periodic(self) -> bool {
        matches!(self, Frequency::Periodic { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub kind: ValueKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutputTarget {
    Return,
    State(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputBinding {
    pub field: String,
    pub target: OutputTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub name: String,
    pub connection: String,
    pub frequency: Frequency,
    pub write_format: MessageFormat,
    pub read_format: Option<MessageFormat>,
    pub inputs: Vec<Param>,
    pub outputs: Vec<OutputBinding>,
}

impl Primitive {
    pub fn is_adhoc(&self) -> bool {
        self.frequency == Frequency::Adhoc
    }

    pub fn return_fields(&self) -> impl Iterator<Item = &str> {
        self.outputs
            .iter()
            .filter(|o| o.target == OutputTarget::Return)
            .map(|o| o.field.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldEncoding {
    U8,
    I8,
    U16Be,
    I16Be,
}

impl FieldEncoding {
    pub const ALL: [FieldEncoding; 4] = [
        FieldEncoding::U8,
        FieldEncoding::I8,
        FieldEncoding::U16Be,
        FieldEncoding::I16Be,
    ];

    pub fn width(self) -> usize {
        match self {
            FieldEncoding::U8 | FieldEncoding::I8 => 1,
            FieldEncoding::U16Be | FieldEncoding::I16Be => 2,
        }
    }

    pub fn range(self) -> (i64, i64) {
        match self {
            FieldEncoding::U8 => (0, 255),
            FieldEncoding::I8 => (-128, 127),
            FieldEncoding::U16Be => (0, 65535),
            FieldEncoding::I16Be => (-32768, 32767),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FieldEncoding::U8 => "u8",
            FieldEncoding::I8 => "i8",
            FieldEncoding::U16Be => "u16be",
            FieldEncoding::I16Be => "i16be",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        FieldEncoding::ALL.into_iter().find(|e| e.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionalField {
    pub name: String,
    pub offset: usize,
    pub width: usize,
    pub encoding: FieldEncoding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionalFormat {
    pub frame_len: usize,
    pub command: u8,
    pub fields: Vec<PositionalField>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelimitedFormat {
    pub prefix: char,
    pub separator: char,
    pub terminator: char,
    pub fields: Vec<String>,
}

impl DelimitedFormat {
    pub const DEFAULT_SEPARATOR: char = ',';
    pub const DEFAULT_TERMINATOR: char = '\n';

    pub fn new(prefix: char, fields: &[&str]) -> Self {
        Self {
            prefix,
            separator: Self::DEFAULT_SEPARATOR,
            terminator: Self::DEFAULT_TERMINATOR,
            fields: fields.iter().map(|f| f.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageFormat {
    Positional(PositionalFormat),
    Delimited(DelimitedFormat),
}

impl MessageFormat {
    pub fn kind(&self) -> &'static str {
        match self {
            MessageFormat::Positional(_) => "positional",
            MessageFormat::Delimited(_) => "delimited",
        }
    }

    pub fn field_names(&self) -> Vec<&str> {
        match self {
            MessageFormat::Positional(p) => p.fields.iter().map(|f| f.name.as_str()).collect(),
            MessageFormat::Delimited(d) => d.fields.iter().map(String::as_str).collect(),
        }
    }

    /// The byte that identifies the message: command byte or prefix.
    pub fn tag(&self) -> u8 {
        match self {
            MessageFormat::Positional(p) => p.command,
            MessageFormat::Delimited(d) => d.prefix as u8,
        }
    }

    /// Two formats frame a byte stream identically.
    pub fn same_framing(&self, other: &MessageFormat) -> bool {
        match (self, other) {
            (MessageFormat::Positional(a), MessageFormat::Positional(b)) => a.frame_len == b.frame_len,
            (MessageFormat::Delimited(a), MessageFormat::Delimited(b)) => a.terminator == b.terminator,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub primitive: String,
    pub args: BTreeMap<String, ExprAst>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub name: String,
    pub inputs: Vec<Param>,
    pub calls: Vec<Call>,
    pub returns: BTreeMap<String, ExprAst>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Concept {
    CommandVelocity,
    Odometry,
}

impl Concept {
    pub const ALL: [Concept; 2] = [Concept::CommandVelocity, Concept::Odometry];

    pub fn as_str(self) -> &'static str {
        match self {
            Concept::CommandVelocity => "position2d.command_velocity",
            Concept::Odometry => "position2d.odometry",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Concept::ALL.into_iter().find(|c| c.as_str() == s)
    }

    pub fn is_command(self) -> bool {
        self == Concept::CommandVelocity
    }

    /// Fields a client supplies (command) or receives (telemetry).
    pub fn fields(self) -> &'static [&'static str] {
        match self {
            Concept::CommandVelocity => &["linear_mps", "angular_radps"],
            Concept::Odometry => &["x_m", "y_m", "theta_rad"],
        }
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Wheel-travel sources an odometry mapping may bind instead of the pose
/// fields; the runtime then integrates the pose itself.
pub const ODOMETRY_WHEEL_SOURCES: [&str; 2] = ["left_m", "right_m"];

/// Constant required by wheel-travel odometry and the kinematics bindings.
pub const WHEEL_TRACK_CONSTANT: &str = "wheel_track_m";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdometrySource {
    /// The interface reports the pose directly.
    Pose,
    /// The interface reports cumulative wheel travel in meters.
    WheelTravel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbstractMapping {
    pub concept: Concept,
    pub interface: String,
    pub bindings: BTreeMap<String, ExprAst>,
}

impl AbstractMapping {
    pub fn odometry_source(&self) -> Option<OdometrySource> {
        if self.concept != Concept::Odometry {
            return None;
        }
        if ODOMETRY_WHEEL_SOURCES.iter().all(|k| self.bindings.contains_key(*k)) {
            Some(OdometrySource::WheelTravel)
        } else {
            Some(OdometrySource::Pose)
        }
    }
}
