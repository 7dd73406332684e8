//! JSON concrete syntax to [`RdisDocument`].
//!
//! The schema is closed: every object lists the keys it accepts and any
//! other key is an error. Structural problems are collected rather than
//! aborting on the first one, so a single run reports every broken field.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use crate::diag::{has_errors, Code, Diagnostic, DocPath};
use crate::expr::{parse_expr, ExprAst};
use crate::model::*;
use crate::validate::validate;

/// Parses and validates. Succeeds only when there are no error
/// diagnostics; warnings are dropped here and are available from
/// [`validate`].
pub fn parse_document(text: &str) -> Result<RdisDocument, Vec<Diagnostic>> {
    let doc = parse_structure(text)?;
    let diags = validate(&doc);
    if has_errors(&diags) {
        Err(diags)
    } else {
        Ok(doc)
    }
}

/// Every diagnostic for `text`, warnings included, plus the document when
/// it parsed structurally.
pub fn diagnose(text: &str) -> (Option<RdisDocument>, Vec<Diagnostic>) {
    match parse_structure(text) {
        Ok(doc) => {
            let diags = validate(&doc);
            (Some(doc), diags)
        }
        Err(diags) => (None, diags),
    }
}

/// Structural parse only: JSON syntax, closed-schema keys, value types and
/// expression syntax. Cross references and invariants are left to
/// [`validate`].
pub fn parse_structure(text: &str) -> Result<RdisDocument, Vec<Diagnostic>> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        vec![Diagnostic::error(
            Code::Syntax,
            DocPath::root(),
            format!("line {} column {}: {e}", e.line(), e.column()),
        )]
    })?;
    let mut w = Walker::default();
    let doc = w.document(&value, &DocPath::root());
    match doc {
        Some(doc) if w.diags.is_empty() => Ok(doc),
        _ => {
            if w.diags.is_empty() {
                w.diags.push(Diagnostic::error(
                    Code::TypeMismatch,
                    DocPath::root(),
                    "malformed document",
                ));
            }
            Err(w.diags)
        }
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Default)]
struct Walker {
    diags: Vec<Diagnostic>,
}

impl Walker {
    fn err(&mut self, code: Code, path: &DocPath, message: impl Into<String>) {
        self.diags.push(Diagnostic::error(code, path.clone(), message));
    }

    fn object<'v>(
        &mut self,
        v: &'v Value,
        path: &DocPath,
        allowed: &[&str],
        required: &[&str],
    ) -> Option<&'v Map<String, Value>> {
        let Some(map) = v.as_object() else {
            self.err(Code::TypeMismatch, path, "expected an object");
            return None;
        };
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                self.err(Code::UnknownKey, &path.key(key), format!("unknown key `{key}`"));
            }
        }
        let mut ok = true;
        for key in required {
            if !map.contains_key(*key) {
                self.err(
                    Code::MissingKey,
                    &path.key(key),
                    format!("missing required key `{key}`"),
                );
                ok = false;
            }
        }
        ok.then_some(map)
    }

    fn string(&mut self, v: &Value, path: &DocPath) -> Option<String> {
        match v.as_str() {
            Some(s) => Some(s.to_string()),
            None => {
                self.err(Code::TypeMismatch, path, "expected a string");
                None
            }
        }
    }

    fn ident(&mut self, v: &Value, path: &DocPath) -> Option<String> {
        let s = self.string(v, path)?;
        if is_identifier(&s) {
            Some(s)
        } else {
            self.err(Code::TypeMismatch, path, format!("`{s}` is not an identifier"));
            None
        }
    }

    fn number(&mut self, v: &Value, path: &DocPath) -> Option<f64> {
        match v.as_f64() {
            Some(n) if v.is_number() => Some(n),
            _ => {
                self.err(Code::TypeMismatch, path, "expected a number");
                None
            }
        }
    }

    fn integer(&mut self, v: &Value, path: &DocPath) -> Option<i64> {
        if let Some(i) = v.as_i64() {
            return Some(i);
        }
        if let Some(f) = v.as_f64() {
            if f.fract() == 0.0 && f.abs() < 9.0e15 {
                return Some(f as i64);
            }
        }
        self.err(Code::TypeMismatch, path, "expected an integer");
        None
    }

    fn bounded(&mut self, v: &Value, path: &DocPath, lo: i64, hi: i64) -> Option<i64> {
        let i = self.integer(v, path)?;
        if (lo..=hi).contains(&i) {
            Some(i)
        } else {
            self.err(
                Code::TypeMismatch,
                path,
                format!("expected an integer in {lo}..={hi}, got {i}"),
            );
            None
        }
    }

    fn array<'v>(&mut self, v: &'v Value, path: &DocPath) -> Option<&'v Vec<Value>> {
        match v.as_array() {
            Some(a) => Some(a),
            None => {
                self.err(Code::TypeMismatch, path, "expected an array");
                None
            }
        }
    }

    fn list<T>(
        &mut self,
        map: &Map<String, Value>,
        key: &str,
        path: &DocPath,
        mut item: impl FnMut(&mut Self, &Value, &DocPath) -> Option<T>,
    ) -> Option<Vec<T>> {
        let Some(v) = map.get(key) else {
            return Some(Vec::new());
        };
        let path = path.key(key);
        let arr = self.array(v, &path)?;
        let mut out = Vec::with_capacity(arr.len());
        let mut ok = true;
        for (i, v) in arr.iter().enumerate() {
            match item(self, v, &path.index(i)) {
                Some(t) => out.push(t),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn expr(&mut self, v: &Value, path: &DocPath) -> Option<ExprAst> {
        if let Some(n) = v.as_f64().filter(|_| v.is_number()) {
            return Some(ExprAst::Number(n));
        }
        let text = self.string(v, path)?;
        match parse_expr(&text) {
            Ok(e) => Some(e),
            Err(e) => {
                self.err(Code::ExprSyntax, path, format!("`{text}`: {e}"));
                None
            }
        }
    }

    fn expr_map(&mut self, v: &Value, path: &DocPath) -> Option<BTreeMap<String, ExprAst>> {
        let Some(map) = v.as_object() else {
            self.err(Code::TypeMismatch, path, "expected an object");
            return None;
        };
        let mut out = BTreeMap::new();
        let mut ok = true;
        for (k, v) in map {
            let p = path.key(k);
            if !is_identifier(k) {
                self.err(Code::TypeMismatch, &p, format!("`{k}` is not an identifier"));
                ok = false;
                continue;
            }
            match self.expr(v, &p) {
                Some(e) => {
                    out.insert(k.clone(), e);
                }
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn document(&mut self, v: &Value, path: &DocPath) -> Option<RdisDocument> {
        const KEYS: &[&str] = &[
            "rdis_version",
            "name",
            "version",
            "constants",
            "connections",
            "state",
            "primitives",
            "interfaces",
            "mappings",
        ];
        let map = self.object(v, path, KEYS, &["name", "version"])?;
        let rdis_version = match map.get("rdis_version") {
            Some(v) => self.string(v, &path.key("rdis_version")),
            None => Some(RDIS_VERSION.to_string()),
        };
        let name = self.ident(&map["name"], &path.key("name"));
        let version = self.string(&map["version"], &path.key("version"));
        let constants = match map.get("constants") {
            None => Some(BTreeMap::new()),
            Some(v) => self.constants(v, &path.key("constants")),
        };
        let connections = self.list(map, "connections", path, Self::connection);
        let state_vars = self.list(map, "state", path, Self::state_var);
        let primitives = self.list(map, "primitives", path, Self::primitive);
        let interfaces = self.list(map, "interfaces", path, Self::interface);
        let mappings = self.list(map, "mappings", path, Self::mapping);
        Some(RdisDocument {
            rdis_version: rdis_version?,
            name: name?,
            version: version?,
            constants: constants?,
            connections: connections?,
            state_vars: state_vars?,
            primitives: primitives?,
            interfaces: interfaces?,
            mappings: mappings?,
        })
    }

    fn constants(&mut self, v: &Value, path: &DocPath) -> Option<BTreeMap<String, f64>> {
        let Some(map) = v.as_object() else {
            self.err(Code::TypeMismatch, path, "expected an object");
            return None;
        };
        let mut out = BTreeMap::new();
        let mut ok = true;
        for (k, v) in map {
            let p = path.key(k);
            if !is_identifier(k) {
                self.err(Code::TypeMismatch, &p, format!("`{k}` is not an identifier"));
                ok = false;
            } else if let Some(n) = self.number(v, &p) {
                out.insert(k.clone(), n);
            } else {
                ok = false;
            }
        }
        ok.then_some(out)
    }

    fn connection(&mut self, v: &Value, path: &DocPath) -> Option<Connection> {
        let map = self.object(
            v,
            path,
            &["id", "transport", "threading_model", "keepalive", "on_connect"],
            &["id", "transport"],
        )?;
        let id = self.ident(&map["id"], &path.key("id"));
        let transport = self.transport(&map["transport"], &path.key("transport"));
        let threading_model = match map.get("threading_model") {
            None => Some(ThreadingModel::Single),
            Some(v) => {
                let p = path.key("threading_model");
                let s = self.string(v, &p)?;
                let m = ThreadingModel::from_name(&s);
                if m.is_none() {
                    self.err(Code::BadEnum, &p, format!("unknown threading model `{s}`"));
                }
                m
            }
        };
        let keepalive = match map.get("keepalive") {
            None => Some(None),
            Some(v) => {
                let p = path.key("keepalive");
                self.object(v, &p, &["primitive", "period_ms"], &["primitive", "period_ms"])
                    .and_then(|m| {
                        let primitive = self.ident(&m["primitive"], &p.key("primitive"));
                        let period_ms = self.integer(&m["period_ms"], &p.key("period_ms"));
                        Some(Some(Keepalive {
                            primitive: primitive?,
                            period_ms: period_ms?,
                        }))
                    })
            }
        };
        let on_connect = self.list(map, "on_connect", path, Self::ident);
        Some(Connection {
            id: id?,
            transport: transport?,
            threading_model: threading_model?,
            keepalive: keepalive?,
            on_connect: on_connect?,
        })
    }

    fn transport(&mut self, v: &Value, path: &DocPath) -> Option<Transport> {
        let map = self.object(v, path, &["tcp", "serial"], &[])?;
        if map.len() != 1 {
            self.err(Code::TypeMismatch, path, "expected exactly one of `tcp` or `serial`");
            return None;
        }
        if let Some(tcp) = map.get("tcp") {
            let p = path.key("tcp");
            let m = self.object(tcp, &p, &["host", "port"], &["host", "port"])?;
            let host = self.string(&m["host"], &p.key("host"));
            let port = self.bounded(&m["port"], &p.key("port"), 0, u16::MAX as i64);
            return Some(Transport::Tcp {
                host: host?,
                port: port? as u16,
            });
        }
        let p = path.key("serial");
        let m = self.object(&map["serial"], &p, &["device", "baud"], &["device", "baud"])?;
        let device = self.string(&m["device"], &p.key("device"));
        let baud = self.bounded(&m["baud"], &p.key("baud"), 1, u32::MAX as i64);
        Some(Transport::Serial {
            device: device?,
            baud: baud? as u32,
        })
    }

    fn kind(&mut self, map: &Map<String, Value>, path: &DocPath, default: ValueKind) -> Option<ValueKind> {
        let Some(v) = map.get("kind") else {
            return Some(default);
        };
        let p = path.key("kind");
        let s = self.string(v, &p)?;
        let k = ValueKind::from_name(&s);
        if k.is_none() {
            self.err(Code::BadEnum, &p, format!("unknown kind `{s}` (expected int or float)"));
        }
        k
    }

    fn state_var(&mut self, v: &Value, path: &DocPath) -> Option<StateVar> {
        let map = self.object(v, path, &["name", "kind", "initial"], &["name", "kind"])?;
        let name = self.ident(&map["name"], &path.key("name"));
        let kind = self.kind(map, path, ValueKind::Float);
        let initial = match map.get("initial") {
            None => Some(0.0),
            Some(v) => self.number(v, &path.key("initial")),
        };
        Some(StateVar {
            name: name?,
            kind: kind?,
            initial: initial?,
        })
    }

    fn param(&mut self, v: &Value, path: &DocPath, default: ValueKind) -> Option<Param> {
        let map = self.object(v, path, &["name", "kind"], &["name"])?;
        let name = self.ident(&map["name"], &path.key("name"));
        let kind = self.kind(map, path, default);
        Some(Param {
            name: name?,
            kind: kind?,
        })
    }

    fn primitive(&mut self, v: &Value, path: &DocPath) -> Option<Primitive> {
        let map = self.object(
            v,
            path,
            &[
                "name",
                "connection",
                "frequency",
                "inputs",
                "outputs",
                "write_format",
                "read_format",
            ],
            &["name", "connection", "frequency", "write_format"],
        )?;
        let name = self.ident(&map["name"], &path.key("name"));
        let connection = self.ident(&map["connection"], &path.key("connection"));
        let frequency = self.frequency(&map["frequency"], &path.key("frequency"));
        let write_format = self.format(&map["write_format"], &path.key("write_format"));
        let read_format = match map.get("read_format") {
            None => Some(None),
            Some(v) => self.format(v, &path.key("read_format")).map(Some),
        };
        let inputs = self.list(map, "inputs", path, |w, v, p| w.param(v, p, ValueKind::Int));
        let outputs = self.list(map, "outputs", path, Self::output);
        Some(Primitive {
            name: name?,
            connection: connection?,
            frequency: frequency?,
            write_format: write_format?,
            read_format: read_format?,
            inputs: inputs?,
            outputs: outputs?,
        })
    }

    fn frequency(&mut self, v: &Value, path: &DocPath) -> Option<Frequency> {
        if let Some(s) = v.as_str() {
            if s == "adhoc" {
                return Some(Frequency::Adhoc);
            }
            self.err(Code::BadEnum, path, format!("unknown frequency `{s}`"));
            return None;
        }
        let map = self.object(v, path, &["periodic"], &["periodic"])?;
        let p = path.key("periodic");
        let m = self.object(&map["periodic"], &p, &["period_ms"], &["period_ms"])?;
        let period_ms = self.integer(&m["period_ms"], &p.key("period_ms"))?;
        Some(Frequency::Periodic { period_ms })
    }

    fn output(&mut self, v: &Value, path: &DocPath) -> Option<OutputBinding> {
        let map = self.object(v, path, &["field", "to"], &["field", "to"])?;
        let field = self.ident(&map["field"], &path.key("field"));
        let p = path.key("to");
        let to = self.string(&map["to"], &p)?;
        let target = if to == "return" {
            OutputTarget::Return
        } else if let Some(var) = to.strip_prefix("state:").filter(|s| is_identifier(s)) {
            OutputTarget::State(var.to_string())
        } else {
            self.err(
                Code::BadEnum,
                &p,
                format!("`{to}`: expected `return` or `state:<name>`"),
            );
            return None;
        };
        Some(OutputBinding { field: field?, target })
    }

    fn format(&mut self, v: &Value, path: &DocPath) -> Option<MessageFormat> {
        let map = self.object(v, path, &["positional", "delimited"], &[])?;
        if map.len() != 1 {
            self.err(
                Code::TypeMismatch,
                path,
                "expected exactly one of `positional` or `delimited`",
            );
            return None;
        }
        if let Some(p) = map.get("positional") {
            return self
                .positional(p, &path.key("positional"))
                .map(MessageFormat::Positional);
        }
        self.delimited(&map["delimited"], &path.key("delimited"))
            .map(MessageFormat::Delimited)
    }

    fn positional(&mut self, v: &Value, path: &DocPath) -> Option<PositionalFormat> {
        let map = self.object(v, path, &["frame_len", "command", "fields"], &["frame_len", "command"])?;
        let frame_len = self.bounded(&map["frame_len"], &path.key("frame_len"), 1, 4096);
        let command = self.byte(&map["command"], &path.key("command"));
        let fields = self.list(map, "fields", path, Self::positional_field);
        Some(PositionalFormat {
            frame_len: frame_len? as usize,
            command: command?,
            fields: fields?,
        })
    }

    /// Command bytes are written either as an integer or a one-character
    /// ASCII string.
    fn byte(&mut self, v: &Value, path: &DocPath) -> Option<u8> {
        if let Some(s) = v.as_str() {
            let mut chars = s.chars();
            return match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii() => Some(c as u8),
                _ => {
                    self.err(
                        Code::TypeMismatch,
                        path,
                        format!("`{s}` is not a single ASCII character"),
                    );
                    None
                }
            };
        }
        self.bounded(v, path, 0, 255).map(|b| b as u8)
    }

    fn positional_field(&mut self, v: &Value, path: &DocPath) -> Option<PositionalField> {
        let map = self.object(v, path, &["name", "offset", "width", "encoding"], &["name", "offset"])?;
        let name = self.ident(&map["name"], &path.key("name"));
        let offset = self.bounded(&map["offset"], &path.key("offset"), 0, 4096);
        let encoding = match map.get("encoding") {
            None => Some(FieldEncoding::U8),
            Some(v) => {
                let p = path.key("encoding");
                let s = self.string(v, &p)?;
                let e = FieldEncoding::from_name(&s);
                if e.is_none() {
                    self.err(Code::BadEnum, &p, format!("unknown encoding `{s}`"));
                }
                e
            }
        };
        // an omitted width follows the encoding
        let width = match map.get("width") {
            None => encoding.map(FieldEncoding::width),
            Some(v) => self.bounded(v, &path.key("width"), 1, 8).map(|w| w as usize),
        };
        Some(PositionalField {
            name: name?,
            offset: offset? as usize,
            width: width?,
            encoding: encoding?,
        })
    }

    fn delimited(&mut self, v: &Value, path: &DocPath) -> Option<DelimitedFormat> {
        let map = self.object(v, path, &["prefix", "separator", "terminator", "fields"], &["prefix"])?;
        let prefix = self.char(&map["prefix"], &path.key("prefix"));
        let separator = match map.get("separator") {
            None => Some(DelimitedFormat::DEFAULT_SEPARATOR),
            Some(v) => self.char(v, &path.key("separator")),
        };
        let terminator = match map.get("terminator") {
            None => Some(DelimitedFormat::DEFAULT_TERMINATOR),
            Some(v) => self.char(v, &path.key("terminator")),
        };
        let fields = self.list(map, "fields", path, Self::ident);
        Some(DelimitedFormat {
            prefix: prefix?,
            separator: separator?,
            terminator: terminator?,
            fields: fields?,
        })
    }

    fn char(&mut self, v: &Value, path: &DocPath) -> Option<char> {
        let s = self.string(v, path)?;
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Some(c),
            _ => {
                self.err(Code::TypeMismatch, path, format!("`{s}` is not a single character"));
                None
            }
        }
    }

    fn interface(&mut self, v: &Value, path: &DocPath) -> Option<Interface> {
        let map = self.object(v, path, &["name", "inputs", "calls", "returns"], &["name"])?;
        let name = self.ident(&map["name"], &path.key("name"));
        let inputs = self.list(map, "inputs", path, |w, v, p| w.param(v, p, ValueKind::Float));
        let calls = self.list(map, "calls", path, Self::call);
        let returns = match map.get("returns") {
            None => Some(BTreeMap::new()),
            Some(v) => self.expr_map(v, &path.key("returns")),
        };
        Some(Interface {
            name: name?,
            inputs: inputs?,
            calls: calls?,
            returns: returns?,
        })
    }

    fn call(&mut self, v: &Value, path: &DocPath) -> Option<Call> {
        let map = self.object(v, path, &["primitive", "args"], &["primitive"])?;
        let primitive = self.ident(&map["primitive"], &path.key("primitive"));
        let args = match map.get("args") {
            None => Some(BTreeMap::new()),
            Some(v) => self.expr_map(v, &path.key("args")),
        };
        Some(Call {
            primitive: primitive?,
            args: args?,
        })
    }

    fn mapping(&mut self, v: &Value, path: &DocPath) -> Option<AbstractMapping> {
        let map = self.object(
            v,
            path,
            &["concept", "interface", "bindings"],
            &["concept", "interface"],
        )?;
        let cp = path.key("concept");
        let concept = self.string(&map["concept"], &cp).and_then(|s| {
            let c = Concept::from_name(&s);
            if c.is_none() {
                self.err(Code::BadEnum, &cp, format!("unknown concept `{s}`"));
            }
            c
        });
        let interface = self.ident(&map["interface"], &path.key("interface"));
        let bindings = match map.get("bindings") {
            None => Some(BTreeMap::new()),
            Some(v) => self.expr_map(v, &path.key("bindings")),
        };
        Some(AbstractMapping {
            concept: concept?,
            interface: interface?,
            bindings: bindings?,
        })
    }
}
