//! Deterministic text form of a document, used verbatim as the discovery
//! payload. Keys are sorted, indentation is two spaces, every defaulted
//! field is written out, numbers use [`format_number`], and the text ends
//! with a newline.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::diag::{has_errors, Diagnostic};
use crate::expr::ExprAst;
use crate::model::*;
use crate::number::format_number;
use crate::validate::validate;

#[derive(Debug, Error)]
#[error("refusing to canonicalize an invalid document ({} error(s))", .0.iter().filter(|d| d.is_error()).count())]
pub struct CanonicalError(pub Vec<Diagnostic>);

enum Node {
    Str(String),
    Num(f64),
    Arr(Vec<Node>),
    Obj(BTreeMap<String, Node>),
}

macro_rules! obj {
    ($($k:literal => $v:expr),* $(,)?) => {{
        #[allow(unused_mut)]
        let mut m = BTreeMap::new();
        $( m.insert($k.to_string(), $v); )*
        Node::Obj(m)
    }};
}

fn s(v: impl Into<String>) -> Node {
    Node::Str(v.into())
}

fn n(v: impl Into<f64>) -> Node {
    Node::Num(v.into())
}

fn arr<T>(items: &[T], f: impl Fn(&T) -> Node) -> Node {
    Node::Arr(items.iter().map(f).collect())
}

pub fn canonicalize(doc: &RdisDocument) -> Result<String, CanonicalError> {
    let diags = validate(doc);
    if has_errors(&diags) {
        return Err(CanonicalError(diags));
    }
    Ok(canonical_text(doc))
}

/// Writes the canonical text without validating first.
pub fn canonical_text(doc: &RdisDocument) -> String {
    let root = obj! {
        "connections" => arr(&doc.connections, connection),
        "constants" => Node::Obj(doc.constants.iter().map(|(k, v)| (k.clone(), n(*v))).collect()),
        "interfaces" => arr(&doc.interfaces, interface),
        "mappings" => arr(&doc.mappings, mapping),
        "name" => s(&doc.name),
        "primitives" => arr(&doc.primitives, primitive),
        "rdis_version" => s(&doc.rdis_version),
        "state" => arr(&doc.state_vars, state_var),
        "version" => s(&doc.version),
    };
    let mut out = String::new();
    write_node(&mut out, &root, 0);
    out.push('\n');
    out
}

fn write_node(out: &mut String, v: &Node, depth: usize) {
    match v {
        Node::Str(x) => push_str(out, x),
        Node::Num(x) => out.push_str(&format_number(*x)),
        Node::Arr(items) if items.is_empty() => out.push_str("[]"),
        Node::Obj(map) if map.is_empty() => out.push_str("{}"),
        Node::Arr(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, depth + 1);
                write_node(out, item, depth + 1);
            }
            newline(out, depth);
            out.push(']');
        }
        Node::Obj(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, depth + 1);
                push_str(out, k);
                out.push_str(": ");
                write_node(out, item, depth + 1);
            }
            newline(out, depth);
            out.push('}');
        }
    }
}

fn newline(out: &mut String, depth: usize) {
    out.push('\n');
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn push_str(out: &mut String, v: &str) {
    out.push_str(&serde_json::to_string(v).expect("strings always serialize"));
}

fn connection(c: &Connection) -> Node {
    let transport = match &c.transport {
        Transport::Tcp { host, port } => obj! { "tcp" => obj! { "host" => s(host), "port" => n(*port) } },
        Transport::Serial { device, baud } => {
            obj! { "serial" => obj! { "baud" => n(*baud), "device" => s(device) } }
        }
    };
    let mut node = obj! {
        "id" => s(&c.id),
        "on_connect" => arr(&c.on_connect, |p| s(p)),
        "threading_model" => s(c.threading_model.as_str()),
        "transport" => transport,
    };
    if let (Some(k), Node::Obj(m)) = (&c.keepalive, &mut node) {
        m.insert(
            "keepalive".into(),
            obj! { "period_ms" => n(k.period_ms as f64), "primitive" => s(&k.primitive) },
        );
    }
    node
}

fn state_var(v: &StateVar) -> Node {
    obj! { "initial" => n(v.initial), "kind" => s(v.kind.as_str()), "name" => s(&v.name) }
}

fn param(p: &Param) -> Node {
    obj! { "kind" => s(p.kind.as_str()), "name" => s(&p.name) }
}

fn format(f: &MessageFormat) -> Node {
    match f {
        MessageFormat::Positional(p) => obj! {
            "positional" => obj! {
                "command" => n(p.command),
                "fields" => arr(&p.fields, |f| obj! {
                    "encoding" => s(f.encoding.as_str()),
                    "name" => s(&f.name),
                    "offset" => n(f.offset as f64),
                    "width" => n(f.width as f64),
                }),
                "frame_len" => n(p.frame_len as f64),
            }
        },
        MessageFormat::Delimited(d) => obj! {
            "delimited" => obj! {
                "fields" => arr(&d.fields, |f| s(f)),
                "prefix" => s(d.prefix),
                "separator" => s(d.separator),
                "terminator" => s(d.terminator),
            }
        },
    }
}

fn primitive(p: &Primitive) -> Node {
    let frequency = match p.frequency {
        Frequency::Adhoc => s("adhoc"),
        Frequency::Periodic { period_ms } => obj! { "periodic" => obj! { "period_ms" => n(period_ms as f64) } },
    };
    let mut node = obj! {
        "connection" => s(&p.connection),
        "frequency" => frequency,
        "inputs" => arr(&p.inputs, param),
        "name" => s(&p.name),
        "outputs" => arr(&p.outputs, |o| obj! {
            "field" => s(&o.field),
            "to" => s(match &o.target {
                OutputTarget::Return => "return".to_string(),
                OutputTarget::State(v) => format!("state:{v}"),
            }),
        }),
        "write_format" => format(&p.write_format),
    };
    if let (Some(rf), Node::Obj(m)) = (&p.read_format, &mut node) {
        m.insert("read_format".into(), format(rf));
    }
    node
}

fn exprs(map: &BTreeMap<String, ExprAst>) -> Node {
    Node::Obj(map.iter().map(|(k, e)| (k.clone(), s(e.to_string()))).collect())
}

fn interface(f: &Interface) -> Node {
    obj! {
        "calls" => arr(&f.calls, |c| obj! { "args" => exprs(&c.args), "primitive" => s(&c.primitive) }),
        "inputs" => arr(&f.inputs, param),
        "name" => s(&f.name),
        "returns" => exprs(&f.returns),
    }
}

fn mapping(m: &AbstractMapping) -> Node {
    obj! {
        "bindings" => exprs(&m.bindings),
        "concept" => s(m.concept.as_str()),
        "interface" => s(&m.interface),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_document, parse_structure};

    const DOC: &str = r#"{
        "name": "t", "version": "1",
        "constants": {"half": 0.5, "big": 5882, "tiny": 1e-7},
        "connections": [{"id": "c", "transport": {"tcp": {"host": "h", "port": 1}}}]
    }"#;

    #[test]
    fn numbers_are_plain_decimals() {
        let text = canonicalize(&parse_document(DOC).unwrap()).unwrap();
        assert!(text.contains("\"half\": 0.5"), "{text}");
        assert!(text.contains("\"big\": 5882,"), "{text}");
        assert!(text.contains("\"tiny\": 0.0000001"), "{text}");
        assert!(!text.contains("e-"));
    }

    #[test]
    fn key_order_does_not_matter() {
        let reordered = r#"{
            "connections": [{"transport": {"tcp": {"port": 1, "host": "h"}}, "id": "c"}],
            "constants": {"tiny": 1e-7, "big": 5882, "half": 0.5},
            "version": "1", "name": "t"
        }"#;
        let a = canonicalize(&parse_document(DOC).unwrap()).unwrap();
        let b = canonicalize(&parse_document(reordered).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn idempotent() {
        let a = canonicalize(&parse_document(DOC).unwrap()).unwrap();
        let b = canonicalize(&parse_document(&a).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.ends_with("}\n"));
    }

    #[test]
    fn refuses_invalid() {
        let bad = DOC.replace("\"id\": \"c\"", "\"id\": \"c\", \"threading_model\": \"dual\"");
        let doc = parse_structure(&bad).unwrap();
        assert!(canonicalize(&doc).is_err());
    }
}
