//! Firmware frame encoding for positional (fixed-length binary) and
//! delimited (ASCII line) message formats.
//!
//! Positional frames carry the command byte at offset 0, fields at their
//! declared offsets big-endian, and zeros everywhere else. Delimited frames
//! are `prefix [sep value]* terminator` with signed decimal integers.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::model::{DelimitedFormat, FieldEncoding, MessageFormat, PositionalFormat};

pub type FieldValues = BTreeMap<String, i64>;

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Frame(pub Vec<u8>);

impl Frame {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tag(&self) -> Option<u8> {
        self.0.first().copied()
    }

    /// Space separated lowercase hex.
    pub fn hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" ")
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match std::str::from_utf8(&self.0) {
            Ok(s) if s.chars().all(|c| c.is_ascii_graphic() || c == ' ' || c == '\n') => {
                write!(f, "Frame({s:?})")
            }
            _ => write!(f, "Frame[{}]", self.hex()),
        }
    }
}

impl From<Vec<u8>> for Frame {
    fn from(v: Vec<u8>) -> Self {
        Frame(v)
    }
}

impl From<&str> for Frame {
    fn from(s: &str) -> Self {
        Frame(s.as_bytes().to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("no value for field `{0}`")]
    MissingField(String),
    #[error("value for `{0}` does not belong to this format")]
    UnknownField(String),
    #[error("`{field}` = {value} is outside {lo}..={hi}")]
    OutOfRange {
        field: String,
        value: i64,
        lo: i64,
        hi: i64,
    },
    #[error("expected command {expected:#04x}, got {got:#04x}")]
    WrongTag { expected: u8, got: u8 },
    #[error("expected {expected} bytes, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("frame does not end with the terminator")]
    MissingTerminator,
    #[error("terminator inside frame body")]
    InteriorTerminator,
    #[error("frame is not ASCII text")]
    NotText,
    #[error("`{0}` is not a signed decimal integer")]
    BadNumber(String),
    #[error("expected {expected} value(s), got {got}")]
    TokenCount { expected: usize, got: usize },
}

pub fn encode(format: &MessageFormat, values: &FieldValues) -> Result<Frame, CodecError> {
    let names = format.field_names();
    for k in values.keys() {
        if !names.contains(&k.as_str()) {
            return Err(CodecError::UnknownField(k.clone()));
        }
    }
    let get = |name: &str| {
        values
            .get(name)
            .copied()
            .ok_or_else(|| CodecError::MissingField(name.to_string()))
    };
    match format {
        MessageFormat::Positional(p) => encode_positional(p, get),
        MessageFormat::Delimited(d) => {
            let mut out = String::new();
            out.push(d.prefix);
            for f in &d.fields {
                out.push(d.separator);
                out.push_str(&get(f)?.to_string());
            }
            out.push(d.terminator);
            Ok(Frame(out.into_bytes()))
        }
    }
}

fn encode_positional(p: &PositionalFormat, get: impl Fn(&str) -> Result<i64, CodecError>) -> Result<Frame, CodecError> {
    let mut bytes = vec![0u8; p.frame_len];
    bytes[0] = p.command;
    for f in &p.fields {
        let v = get(&f.name)?;
        let (lo, hi) = f.encoding.range();
        if v < lo || v > hi {
            return Err(CodecError::OutOfRange {
                field: f.name.clone(),
                value: v,
                lo,
                hi,
            });
        }
        match f.encoding {
            FieldEncoding::U8 | FieldEncoding::I8 => bytes[f.offset] = v as u8,
            FieldEncoding::U16Be | FieldEncoding::I16Be => {
                bytes[f.offset..f.offset + 2].copy_from_slice(&(v as u16).to_be_bytes());
            }
        }
    }
    Ok(Frame(bytes))
}

pub fn decode(format: &MessageFormat, frame: &[u8]) -> Result<FieldValues, CodecError> {
    match format {
        MessageFormat::Positional(p) => decode_positional(p, frame),
        MessageFormat::Delimited(d) => decode_delimited(d, frame),
    }
}

fn decode_positional(p: &PositionalFormat, frame: &[u8]) -> Result<FieldValues, CodecError> {
    if frame.len() != p.frame_len {
        return Err(CodecError::WrongLength {
            expected: p.frame_len,
            got: frame.len(),
        });
    }
    if frame[0] != p.command {
        return Err(CodecError::WrongTag {
            expected: p.command,
            got: frame[0],
        });
    }
    Ok(p.fields
        .iter()
        .map(|f| {
            let at = f.offset;
            let v = match f.encoding {
                FieldEncoding::U8 => frame[at] as i64,
                FieldEncoding::I8 => frame[at] as i8 as i64,
                FieldEncoding::U16Be => u16::from_be_bytes([frame[at], frame[at + 1]]) as i64,
                FieldEncoding::I16Be => i16::from_be_bytes([frame[at], frame[at + 1]]) as i64,
            };
            (f.name.clone(), v)
        })
        .collect())
}

fn parse_decimal(tok: &str) -> Result<i64, CodecError> {
    let digits = tok.strip_prefix('-').unwrap_or(tok);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(CodecError::BadNumber(tok.to_string()));
    }
    tok.parse().map_err(|_| CodecError::BadNumber(tok.to_string()))
}

fn decode_delimited(d: &DelimitedFormat, frame: &[u8]) -> Result<FieldValues, CodecError> {
    let text = std::str::from_utf8(frame).map_err(|_| CodecError::NotText)?;
    let body = text.strip_suffix(d.terminator).ok_or(CodecError::MissingTerminator)?;
    if body.contains(d.terminator) {
        return Err(CodecError::InteriorTerminator);
    }
    let mut tokens = body.split(d.separator);
    let head = tokens.next().unwrap_or("");
    let mut head_chars = head.chars();
    match (head_chars.next(), head_chars.next()) {
        (Some(c), None) if c == d.prefix => {}
        _ => {
            return Err(CodecError::WrongTag {
                expected: d.prefix as u8,
                got: head.bytes().next().unwrap_or(0),
            })
        }
    }
    let tokens: Vec<&str> = tokens.collect();
    if tokens.len() != d.fields.len() {
        return Err(CodecError::TokenCount {
            expected: d.fields.len(),
            got: tokens.len(),
        });
    }
    d.fields
        .iter()
        .zip(tokens)
        .map(|(f, t)| Ok((f.clone(), parse_decimal(t)?)))
        .collect()
}

/// Splits `buffer` into complete frames and the incomplete tail. Frames are
/// not checked here; malformed ones surface in [`decode`].
pub fn frame_scan(format: &MessageFormat, buffer: &[u8]) -> (Vec<Frame>, Vec<u8>) {
    let mut frames = Vec::new();
    match format {
        MessageFormat::Positional(p) => {
            let mut chunks = buffer.chunks_exact(p.frame_len);
            frames.extend(chunks.by_ref().map(|c| Frame(c.to_vec())));
            (frames, chunks.remainder().to_vec())
        }
        MessageFormat::Delimited(d) => {
            let mut term = [0u8; 4];
            let term = d.terminator.encode_utf8(&mut term).as_bytes();
            let mut start = 0;
            let mut i = 0;
            while i + term.len() <= buffer.len() {
                if &buffer[i..i + term.len()] == term {
                    frames.push(Frame(buffer[start..i + term.len()].to_vec()));
                    i += term.len();
                    start = i;
                } else {
                    i += 1;
                }
            }
            (frames, buffer[start..].to_vec())
        }
    }
}

/// Incremental wrapper over [`frame_scan`] for stream readers.
#[derive(Debug, Clone)]
pub struct FrameAssembler {
    framing: MessageFormat,
    pending: Vec<u8>,
}

impl FrameAssembler {
    pub fn new(framing: MessageFormat) -> Self {
        Self {
            framing,
            pending: Vec::new(),
        }
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Frame> {
        self.pending.extend_from_slice(bytes);
        let (frames, rest) = frame_scan(&self.framing, &self.pending);
        self.pending = rest;
        frames
    }

    pub fn pending(&self) -> &[u8] {
        &self.pending
    }

    pub fn clear(&mut self) {
        self.pending.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PositionalField;

    fn field(name: &str, offset: usize, encoding: FieldEncoding) -> PositionalField {
        PositionalField {
            name: name.into(),
            offset,
            width: encoding.width(),
            encoding,
        }
    }

    fn positional(cmd: u8, len: usize, fields: Vec<PositionalField>) -> MessageFormat {
        MessageFormat::Positional(PositionalFormat {
            frame_len: len,
            command: cmd,
            fields,
        })
    }

    fn vals(pairs: &[(&str, i64)]) -> FieldValues {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn positional_i8_twos_complement() {
        let fmt = positional(
            b'M',
            8,
            vec![
                field("left", 1, FieldEncoding::I8),
                field("right", 2, FieldEncoding::I8),
            ],
        );
        let frame = encode(&fmt, &vals(&[("left", 5), ("right", -5)])).unwrap();
        // -5 = 256 - 5 = 0xFB
        assert_eq!(frame.as_bytes(), [0x4D, 0x05, 0xFB, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn delimited_line() {
        let fmt = MessageFormat::Delimited(DelimitedFormat::new('D', &["left", "right"]));
        let frame = encode(&fmt, &vals(&[("left", 10), ("right", -10)])).unwrap();
        assert_eq!(frame.as_bytes(), b"D,10,-10\n");
        let bare = MessageFormat::Delimited(DelimitedFormat::new('E', &[]));
        assert_eq!(encode(&bare, &FieldValues::new()).unwrap().as_bytes(), b"E\n");
    }

    #[test]
    fn encode_errors() {
        let fmt = positional(
            b'M',
            8,
            vec![
                field("left", 1, FieldEncoding::I8),
                field("right", 2, FieldEncoding::I8),
            ],
        );
        assert!(matches!(
            encode(&fmt, &vals(&[("left", 200), ("right", 0)])),
            Err(CodecError::OutOfRange {
                value: 200,
                lo: -128,
                hi: 127,
                ..
            })
        ));
        assert_eq!(
            encode(&fmt, &vals(&[("left", 1)])),
            Err(CodecError::MissingField("right".into()))
        );
        assert_eq!(
            encode(&fmt, &vals(&[("left", 1), ("right", 1), ("up", 1)])),
            Err(CodecError::UnknownField("up".into()))
        );
    }

    #[test]
    fn positional_i16_decode() {
        let fmt = positional(
            b'e',
            8,
            vec![
                field("left", 1, FieldEncoding::I16Be),
                field("right", 3, FieldEncoding::I16Be),
            ],
        );
        // 0x000A = 10, 0xFFF6 = 65526 - 65536 = -10
        let got = decode(&fmt, &[0x65, 0x00, 0x0A, 0xFF, 0xF6, 0, 0, 0]).unwrap();
        assert_eq!(got, vals(&[("left", 10), ("right", -10)]));
        assert_eq!(
            decode(&fmt, &[0x66, 0, 0, 0, 0, 0, 0, 0]),
            Err(CodecError::WrongTag {
                expected: 0x65,
                got: 0x66
            })
        );
        assert_eq!(
            decode(&fmt, &[0x65, 0, 0]),
            Err(CodecError::WrongLength { expected: 8, got: 3 })
        );
    }

    #[test]
    fn delimited_decode() {
        let fmt = MessageFormat::Delimited(DelimitedFormat::new('e', &["left", "right"]));
        assert_eq!(
            decode(&fmt, b"e,42,-7\n").unwrap(),
            vals(&[("left", 42), ("right", -7)])
        );
        let two = MessageFormat::Delimited(DelimitedFormat::new('D', &["left", "right"]));
        assert_eq!(
            decode(&two, b"D,1\n"),
            Err(CodecError::TokenCount { expected: 2, got: 1 })
        );
        assert_eq!(decode(&two, b"D,1,x\n"), Err(CodecError::BadNumber("x".into())));
        assert_eq!(decode(&two, b"D,1,+2\n"), Err(CodecError::BadNumber("+2".into())));
        assert_eq!(decode(&two, b"D,1,2"), Err(CodecError::MissingTerminator));
        assert_eq!(decode(&two, b"D,1\n,2\n"), Err(CodecError::InteriorTerminator));
        assert!(matches!(decode(&two, b"X,1,2\n"), Err(CodecError::WrongTag { .. })));
        assert!(matches!(decode(&two, b"DD,1,2\n"), Err(CodecError::WrongTag { .. })));
    }

    #[test]
    fn scanning() {
        let pos = positional(b'e', 8, vec![]);
        let (frames, rest) = frame_scan(&pos, &[1u8; 12]);
        assert_eq!((frames.len(), rest.len()), (1, 4));

        let del = MessageFormat::Delimited(DelimitedFormat::new('e', &["a", "b"]));
        let (frames, rest) = frame_scan(&del, b"e,1,2\ne,3,");
        assert_eq!(frames, vec![Frame::from("e,1,2\n")]);
        assert_eq!(rest, b"e,3,");

        let (frames, rest) = frame_scan(&del, b"");
        assert!(frames.is_empty() && rest.is_empty());
    }

    #[test]
    fn unnamed_bytes_are_zero() {
        let fmt = positional(0xAA, 6, vec![field("x", 2, FieldEncoding::U16Be)]);
        let frame = encode(&fmt, &vals(&[("x", 0xFFFF)])).unwrap();
        assert_eq!(frame.as_bytes(), [0xAA, 0, 0xFF, 0xFF, 0, 0]);
    }
}
