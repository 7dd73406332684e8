//! Bridge wire messages: one JSON object per websocket text frame, tagged
//! by `type`. Parsing is strict so every malformed frame maps to exactly
//! one error reply.

use std::collections::BTreeMap;

use rdis_core::{Concept, RdisDocument};
use serde_json::{json, Map, Value};

pub const DEFAULT_PERIOD_MS: u64 = 100;
pub const MIN_PERIOD_MS: u64 = 20;
pub const MAX_PERIOD_MS: u64 = 5000;

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Rdis {
        id: Option<String>,
    },
    List {
        id: Option<String>,
    },
    Call {
        id: String,
        interface: String,
        args: BTreeMap<String, f64>,
    },
    Subscribe {
        id: String,
        concept: String,
        period_ms: u64,
    },
    Unsubscribe {
        id: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolError {
    pub id: Option<String>,
    pub code: &'static str,
    pub message: String,
}

impl ProtocolError {
    fn new(id: Option<String>, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            id,
            code,
            message: message.into(),
        }
    }

    pub fn to_message(&self) -> String {
        error_message(self.id.as_deref(), self.code, &self.message)
    }
}

pub fn parse_request(text: &str) -> Result<Request, ProtocolError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ProtocolError::new(None, "bad-json", e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(ProtocolError::new(None, "bad-json", "message must be a JSON object"));
    };
    // Echo the id in errors whenever it is readable.
    let raw_id = obj.get("id").and_then(Value::as_str).map(str::to_string);
    let bad = |msg: String| ProtocolError::new(raw_id.clone(), "bad-request", msg);

    let ty = match obj.get("type") {
        Some(Value::String(s)) => s.as_str(),
        Some(_) => return Err(ProtocolError::new(raw_id, "bad-type", "`type` must be a string")),
        None => return Err(ProtocolError::new(raw_id, "bad-type", "missing `type`")),
    };
    let allowed: &[&str] = match ty {
        "rdis" | "list" => &["type", "id"],
        "call" => &["type", "id", "interface", "args"],
        "subscribe" => &["type", "id", "concept", "period_ms"],
        "unsubscribe" => &["type", "id"],
        other => {
            return Err(ProtocolError::new(
                raw_id,
                "bad-type",
                format!("unknown type `{other}`"),
            ))
        }
    };
    if let Some(k) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(bad(format!("unexpected key `{k}` in `{ty}`")));
    }
    let optional_id = || match obj.get("id") {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(bad("`id` must be a string".into())),
    };
    let id = || optional_id()?.ok_or_else(|| bad(format!("`{ty}` requires an `id`")));
    let string = |key: &str| match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(bad(format!("`{key}` must be a string"))),
        None => Err(bad(format!("missing `{key}`"))),
    };

    match ty {
        "rdis" => Ok(Request::Rdis { id: optional_id()? }),
        "list" => Ok(Request::List { id: optional_id()? }),
        "call" => {
            let id = id()?;
            let interface = string("interface")?;
            let args = match obj.get("args") {
                None => BTreeMap::new(),
                Some(Value::Object(m)) => numbers(m).map_err(bad)?,
                Some(_) => return Err(bad("`args` must be an object".into())),
            };
            Ok(Request::Call { id, interface, args })
        }
        "subscribe" => {
            let id = id()?;
            let concept = string("concept")?;
            let period_ms = match obj.get("period_ms") {
                None => DEFAULT_PERIOD_MS,
                Some(v) => match v.as_f64() {
                    Some(p) if p.is_finite() => (p.round().max(0.0) as u64).clamp(MIN_PERIOD_MS, MAX_PERIOD_MS),
                    _ => return Err(bad("`period_ms` must be a number".into())),
                },
            };
            Ok(Request::Subscribe { id, concept, period_ms })
        }
        "unsubscribe" => Ok(Request::Unsubscribe { id: id()? }),
        _ => unreachable!("type checked above"),
    }
}

fn numbers(m: &Map<String, Value>) -> Result<BTreeMap<String, f64>, String> {
    m.iter()
        .map(|(k, v)| {
            v.as_f64()
                .map(|n| (k.clone(), n))
                .ok_or_else(|| format!("argument `{k}` must be a number"))
        })
        .collect()
}

pub fn error_message(id: Option<&str>, code: &str, message: &str) -> String {
    let mut m = Map::new();
    m.insert("type".into(), "error".into());
    if let Some(id) = id {
        m.insert("id".into(), id.into());
    }
    m.insert("code".into(), code.into());
    m.insert("message".into(), message.into());
    Value::Object(m).to_string()
}

fn with_id(mut v: Value, id: Option<&str>) -> String {
    if let (Some(id), Value::Object(m)) = (id, &mut v) {
        m.insert("id".into(), id.into());
    }
    v.to_string()
}

/// The canonical text travels as a JSON string, so the client gets the
/// exact bytes back after one string decode.
pub fn rdis_message(id: Option<&str>, canonical: &str) -> String {
    with_id(json!({ "type": "rdis", "document": canonical }), id)
}

pub fn list_message(id: Option<&str>, doc: &RdisDocument) -> String {
    let interfaces: Vec<Value> = doc
        .interfaces
        .iter()
        .map(|i| {
            json!({
                "name": i.name,
                "inputs": i.inputs.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(),
                "returns": i.returns.keys().collect::<Vec<_>>(),
            })
        })
        .collect();
    let concepts: Vec<Value> = doc
        .mappings
        .iter()
        .map(|m| {
            json!({
                "concept": m.concept.as_str(),
                "interface": m.interface,
                "kind": if m.concept.is_command() { "command" } else { "telemetry" },
                "fields": m.concept.fields(),
            })
        })
        .collect();
    with_id(
        json!({ "type": "list", "interfaces": interfaces, "concepts": concepts }),
        id,
    )
}

pub fn result_message(id: &str, values: &BTreeMap<String, f64>) -> String {
    json!({ "type": "result", "id": id, "values": values }).to_string()
}

pub fn state_message(id: &str, values: &BTreeMap<String, f64>, age_ms: f64) -> String {
    json!({ "type": "state", "id": id, "values": values, "age_ms": age_ms }).to_string()
}

/// Resolves a call target: concept names route through the mapping.
pub fn concept_of(name: &str) -> Option<Concept> {
    Concept::from_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(text: &str) -> &'static str {
        parse_request(text).unwrap_err().code
    }

    #[test]
    fn parses_every_request() {
        assert_eq!(parse_request(r#"{"type":"rdis"}"#).unwrap(), Request::Rdis { id: None });
        assert_eq!(
            parse_request(r#"{"type":"list","id":"x"}"#).unwrap(),
            Request::List { id: Some("x".into()) }
        );
        assert_eq!(
            parse_request(r#"{"type":"call","id":"1","interface":"drive","args":{"linear":0.2,"angular":0}}"#).unwrap(),
            Request::Call {
                id: "1".into(),
                interface: "drive".into(),
                args: BTreeMap::from([("angular".into(), 0.0), ("linear".into(), 0.2)]),
            }
        );
        assert_eq!(
            parse_request(r#"{"type":"subscribe","id":"s1","concept":"position2d.odometry","period_ms":100}"#).unwrap(),
            Request::Subscribe {
                id: "s1".into(),
                concept: "position2d.odometry".into(),
                period_ms: 100,
            }
        );
        assert_eq!(
            parse_request(r#"{"type":"unsubscribe","id":"s1"}"#).unwrap(),
            Request::Unsubscribe { id: "s1".into() }
        );
    }

    #[test]
    fn period_is_clamped_and_defaulted() {
        let p = |t: &str| match parse_request(t).unwrap() {
            Request::Subscribe { period_ms, .. } => period_ms,
            r => panic!("{r:?}"),
        };
        assert_eq!(p(r#"{"type":"subscribe","id":"a","concept":"c","period_ms":1}"#), 20);
        assert_eq!(
            p(r#"{"type":"subscribe","id":"a","concept":"c","period_ms":99999}"#),
            5000
        );
        assert_eq!(p(r#"{"type":"subscribe","id":"a","concept":"c"}"#), 100);
    }

    #[test]
    fn malformed_frames_get_one_code_each() {
        assert_eq!(code("{"), "bad-json");
        assert_eq!(code("[1]"), "bad-json");
        assert_eq!(code(r#"{"id":"1"}"#), "bad-type");
        assert_eq!(code(r#"{"type":"fly"}"#), "bad-type");
        assert_eq!(code(r#"{"type":7}"#), "bad-type");
        assert_eq!(code(r#"{"type":"call","interface":"x"}"#), "bad-request");
        assert_eq!(code(r#"{"type":"call","id":1,"interface":"x"}"#), "bad-request");
        assert_eq!(
            code(r#"{"type":"call","id":"1","interface":"x","args":{"a":"b"}}"#),
            "bad-request"
        );
        assert_eq!(
            code(r#"{"type":"call","id":"1","interface":"x","extra":1}"#),
            "bad-request"
        );
        assert_eq!(
            code(r#"{"type":"subscribe","id":"1","concept":"c","period_ms":"fast"}"#),
            "bad-request"
        );
    }

    #[test]
    fn errors_echo_readable_ids() {
        let e = parse_request(r#"{"type":"call","id":"7"}"#).unwrap_err();
        assert_eq!(e.id.as_deref(), Some("7"));
        let v: Value = serde_json::from_str(&e.to_message()).unwrap();
        assert_eq!(v["type"], "error");
        assert_eq!(v["id"], "7");
        assert_eq!(v["code"], "bad-request");
    }

    #[test]
    fn rdis_text_survives_json_string() {
        let text = "{\n  \"a\": \"x\\\"y\"\n}\n";
        let v: Value = serde_json::from_str(&rdis_message(None, text)).unwrap();
        assert_eq!(v["document"].as_str().unwrap(), text);
    }
}
