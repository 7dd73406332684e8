//! Semantic checks over a structurally parsed document.
//!
//! Every invariant of the model maps to one diagnostic code so that a
//! document violating exactly one rule yields exactly one diagnostic.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::diag::{Code, Diagnostic, DocPath};
use crate::expr::ExprAst;
use crate::model::*;

/// Returns every violation found; an empty list means the document is
/// accepted by the runtime, the bridge and the generators.
pub fn validate(doc: &RdisDocument) -> Vec<Diagnostic> {
    let mut v = Validator { doc, diags: Vec::new() };
    v.run();
    v.diags
}

struct Validator<'d> {
    doc: &'d RdisDocument,
    diags: Vec<Diagnostic>,
}

fn unique<'a>(items: impl Iterator<Item = (&'a str, DocPath)>, what: &str, diags: &mut Vec<Diagnostic>) {
    let mut seen = HashSet::new();
    for (name, path) in items {
        if !seen.insert(name) {
            diags.push(Diagnostic::error(
                Code::DuplicateName,
                path,
                format!("duplicate {what} `{name}`"),
            ));
        }
    }
}

impl<'d> Validator<'d> {
    fn err(&mut self, code: Code, path: DocPath, message: impl Into<String>) {
        self.diags.push(Diagnostic::error(code, path, message));
    }

    fn run(&mut self) {
        let doc = self.doc;
        let root = DocPath::root();
        if doc.rdis_version != RDIS_VERSION {
            self.err(
                Code::UnsupportedVersion,
                root.key("rdis_version"),
                format!(
                    "unsupported rdis_version `{}` (expected {RDIS_VERSION})",
                    doc.rdis_version
                ),
            );
        }

        let conns = root.key("connections");
        let states = root.key("state");
        let prims = root.key("primitives");
        let ifaces = root.key("interfaces");
        let maps = root.key("mappings");
        unique(
            doc.connections
                .iter()
                .enumerate()
                .map(|(i, c)| (c.id.as_str(), conns.index(i).key("id"))),
            "connection",
            &mut self.diags,
        );
        unique(
            doc.state_vars
                .iter()
                .enumerate()
                .map(|(i, s)| (s.name.as_str(), states.index(i).key("name"))),
            "state variable",
            &mut self.diags,
        );
        unique(
            doc.primitives
                .iter()
                .enumerate()
                .map(|(i, p)| (p.name.as_str(), prims.index(i).key("name"))),
            "primitive",
            &mut self.diags,
        );
        unique(
            doc.interfaces
                .iter()
                .enumerate()
                .map(|(i, f)| (f.name.as_str(), ifaces.index(i).key("name"))),
            "interface",
            &mut self.diags,
        );
        unique(
            doc.mappings
                .iter()
                .enumerate()
                .map(|(i, m)| (m.concept.as_str(), maps.index(i).key("concept"))),
            "mapping for concept",
            &mut self.diags,
        );

        for (i, c) in doc.connections.iter().enumerate() {
            self.connection(c, conns.index(i));
        }
        for (i, s) in doc.state_vars.iter().enumerate() {
            if s.kind == ValueKind::Int && s.initial.fract() != 0.0 {
                self.err(
                    Code::BadInitial,
                    states.index(i).key("initial"),
                    format!("initial value {} is not an integer", s.initial),
                );
            }
        }
        for (i, p) in doc.primitives.iter().enumerate() {
            self.primitive(p, prims.index(i));
        }
        self.read_framing();
        for (i, f) in doc.interfaces.iter().enumerate() {
            self.interface(f, ifaces.index(i));
        }
        for (i, m) in doc.mappings.iter().enumerate() {
            self.mapping(m, maps.index(i));
        }
        self.unused_primitives();
    }

    fn lifecycle_primitive(&mut self, conn: &Connection, name: &str, path: DocPath, role: &str) {
        match self.doc.primitive(name) {
            None => self.err(
                Code::DanglingRef,
                path,
                format!("{role} primitive `{name}` is not declared"),
            ),
            Some(p) if !p.is_adhoc() || !p.inputs.is_empty() || p.connection != conn.id => self.err(
                Code::BadLifecyclePrimitive,
                path,
                format!(
                    "{role} primitive `{name}` must be an adhoc primitive on `{}` with no inputs",
                    conn.id
                ),
            ),
            Some(_) => {}
        }
    }

    fn connection(&mut self, c: &Connection, path: DocPath) {
        if c.threading_model != ThreadingModel::Single {
            self.err(
                Code::ThreadingNotImplemented,
                path.key("threading_model"),
                format!(
                    "threading model `{}` is not implemented (only `single`)",
                    c.threading_model.as_str()
                ),
            );
        }
        if let Some(k) = &c.keepalive {
            let kp = path.key("keepalive");
            if k.period_ms <= 0 {
                self.err(
                    Code::NonpositivePeriod,
                    kp.key("period_ms"),
                    "keepalive period must be positive",
                );
            }
            self.lifecycle_primitive(c, &k.primitive, kp.key("primitive"), "keepalive");
        }
        for (i, name) in c.on_connect.iter().enumerate() {
            self.lifecycle_primitive(c, name, path.key("on_connect").index(i), "on_connect");
        }
    }

    fn primitive(&mut self, p: &Primitive, path: DocPath) {
        if self.doc.connection(&p.connection).is_none() {
            self.err(
                Code::DanglingRef,
                path.key("connection"),
                format!("connection `{}` is not declared", p.connection),
            );
        }
        unique(
            p.inputs
                .iter()
                .enumerate()
                .map(|(i, q)| (q.name.as_str(), path.key("inputs").index(i).key("name"))),
            "input",
            &mut self.diags,
        );
        if let Frequency::Periodic { period_ms } = p.frequency {
            if period_ms <= 0 {
                self.err(
                    Code::NonpositivePeriod,
                    path.key("frequency").key("periodic").key("period_ms"),
                    "period must be positive",
                );
            }
            if !p.inputs.is_empty() {
                self.err(
                    Code::PeriodicHasInputs,
                    path.key("inputs"),
                    "periodic primitives take no inputs",
                );
            }
            for (i, o) in p.outputs.iter().enumerate() {
                if o.target == OutputTarget::Return {
                    self.err(
                        Code::PeriodicReturnOutput,
                        path.key("outputs").index(i).key("to"),
                        "periodic primitive outputs must target state variables",
                    );
                }
            }
        }

        self.format(&p.write_format, path.key("write_format"));
        let write_fields: BTreeSet<&str> = p.write_format.field_names().into_iter().collect();
        for (i, q) in p.inputs.iter().enumerate() {
            if !write_fields.contains(q.name.as_str()) {
                self.err(
                    Code::InputNotInFormat,
                    path.key("inputs").index(i),
                    format!("input `{}` has no field in write_format", q.name),
                );
            }
        }
        let inputs: BTreeSet<&str> = p.inputs.iter().map(|q| q.name.as_str()).collect();
        for f in &write_fields {
            if !inputs.contains(f) {
                self.err(
                    Code::FormatFieldNotInput,
                    path.key("write_format"),
                    format!("write_format field `{f}` is not an input"),
                );
            }
        }

        if let Some(rf) = &p.read_format {
            self.format(rf, path.key("read_format"));
        }
        let read_fields: BTreeSet<&str> = p
            .read_format
            .as_ref()
            .map(|f| f.field_names().into_iter().collect())
            .unwrap_or_default();
        if p.read_format.is_none() && !p.outputs.is_empty() {
            self.err(
                Code::MissingReadFormat,
                path.key("outputs"),
                "outputs declared without a read_format",
            );
        }
        for (i, o) in p.outputs.iter().enumerate() {
            let op = path.key("outputs").index(i);
            if p.read_format.is_some() && !read_fields.contains(o.field.as_str()) {
                self.err(
                    Code::OutputNotInFormat,
                    op.key("field"),
                    format!("output `{}` has no field in read_format", o.field),
                );
            }
            if let OutputTarget::State(var) = &o.target {
                if self.doc.state_var(var).is_none() {
                    self.err(
                        Code::DanglingRef,
                        op.key("to"),
                        format!("state variable `{var}` is not declared"),
                    );
                }
            }
        }
    }

    fn format(&mut self, f: &MessageFormat, path: DocPath) {
        match f {
            MessageFormat::Positional(pf) => {
                let pp = path.key("positional");
                let fields = pp.key("fields");
                unique(
                    pf.fields
                        .iter()
                        .enumerate()
                        .map(|(i, f)| (f.name.as_str(), fields.index(i).key("name"))),
                    "field",
                    &mut self.diags,
                );
                for (i, fd) in pf.fields.iter().enumerate() {
                    let fp = fields.index(i);
                    if fd.width != fd.encoding.width() {
                        self.err(
                            Code::WidthEncodingMismatch,
                            fp.key("width"),
                            format!("width {} does not match encoding {}", fd.width, fd.encoding.as_str()),
                        );
                    }
                    if fd.offset < 1 || fd.offset + fd.width > pf.frame_len {
                        self.err(
                            Code::FieldOutOfFrame,
                            fp.key("offset"),
                            format!(
                                "field `{}` bytes {}..{} fall outside 1..{}",
                                fd.name,
                                fd.offset,
                                fd.offset + fd.width,
                                pf.frame_len
                            ),
                        );
                    }
                    for other in &pf.fields[..i] {
                        let disjoint = fd.offset + fd.width <= other.offset || other.offset + other.width <= fd.offset;
                        if !disjoint {
                            self.err(
                                Code::OverlappingFields,
                                fp.key("offset"),
                                format!("field `{}` overlaps `{}`", fd.name, other.name),
                            );
                        }
                    }
                }
            }
            MessageFormat::Delimited(df) => {
                let dp = path.key("delimited");
                unique(
                    df.fields
                        .iter()
                        .enumerate()
                        .map(|(i, f)| (f.as_str(), dp.key("fields").index(i))),
                    "field",
                    &mut self.diags,
                );
                let delim_ok = |c: char| c.is_ascii() && !c.is_ascii_alphanumeric() && c != '-';
                if df.separator == df.terminator || !delim_ok(df.separator) || !delim_ok(df.terminator) {
                    self.err(
                        Code::BadDelimiter,
                        dp.clone(),
                        format!(
                            "separator {:?} and terminator {:?} must be distinct non-numeric ASCII",
                            df.separator, df.terminator
                        ),
                    );
                }
                if !df.prefix.is_ascii_graphic() || df.prefix == df.separator || df.prefix == df.terminator {
                    self.err(
                        Code::BadPrefix,
                        dp.key("prefix"),
                        format!(
                            "prefix {:?} must be printable ASCII distinct from separator and terminator",
                            df.prefix
                        ),
                    );
                }
            }
        }
    }

    fn read_framing(&mut self) {
        for c in &self.doc.connections {
            let mut first: Option<&MessageFormat> = None;
            for (i, p) in self.doc.primitives.iter().enumerate() {
                if p.connection != c.id {
                    continue;
                }
                let Some(rf) = &p.read_format else { continue };
                match first {
                    None => first = Some(rf),
                    Some(f) if !f.same_framing(rf) => self.err(
                        Code::MixedReadFraming,
                        DocPath::root().key("primitives").index(i).key("read_format"),
                        format!("replies on connection `{}` must share one framing", c.id),
                    ),
                    Some(_) => {}
                }
            }
        }
    }

    fn base_scope(&self) -> BTreeSet<String> {
        let mut scope: BTreeSet<String> = self.doc.constants.keys().cloned().collect();
        scope.extend(self.doc.state_vars.iter().map(|s| s.name.clone()));
        scope
    }

    fn check_scope(&mut self, expr: &ExprAst, scope: &BTreeSet<String>, path: &DocPath) {
        for name in expr.free_vars() {
            if !scope.contains(&name) {
                self.err(
                    Code::UnboundName,
                    path.clone(),
                    format!("name `{name}` is not in scope"),
                );
            }
        }
    }

    fn interface(&mut self, f: &Interface, path: DocPath) {
        unique(
            f.inputs
                .iter()
                .enumerate()
                .map(|(i, q)| (q.name.as_str(), path.key("inputs").index(i).key("name"))),
            "input",
            &mut self.diags,
        );
        let mut scope = self.base_scope();
        scope.extend(f.inputs.iter().map(|q| q.name.clone()));
        for (i, call) in f.calls.iter().enumerate() {
            let cp = path.key("calls").index(i);
            let Some(prim) = self.doc.primitive(&call.primitive) else {
                self.err(
                    Code::DanglingRef,
                    cp.key("primitive"),
                    format!("primitive `{}` is not declared", call.primitive),
                );
                continue;
            };
            for q in &prim.inputs {
                if !call.args.contains_key(&q.name) {
                    self.err(
                        Code::MissingArg,
                        cp.key("args"),
                        format!("argument `{}` of `{}` is not bound", q.name, prim.name),
                    );
                }
            }
            for (name, expr) in &call.args {
                let ap = cp.key("args").key(name);
                if !prim.inputs.iter().any(|q| &q.name == name) {
                    self.err(
                        Code::UnknownArg,
                        ap.clone(),
                        format!("`{}` has no input `{name}`", prim.name),
                    );
                }
                self.check_scope(expr, &scope, &ap);
            }
            scope.extend(prim.return_fields().map(|fld| format!("{}.{fld}", prim.name)));
        }
        for (name, expr) in &f.returns {
            self.check_scope(expr, &scope, &path.key("returns").key(name));
        }
    }

    fn mapping(&mut self, m: &AbstractMapping, path: DocPath) {
        let Some(iface) = self.doc.interface(&m.interface) else {
            self.err(
                Code::DanglingRef,
                path.key("interface"),
                format!("interface `{}` is not declared", m.interface),
            );
            return;
        };
        let constants: BTreeSet<String> = self.doc.constants.keys().cloned().collect();
        let bp = path.key("bindings");
        if m.concept.is_command() {
            let inputs: BTreeSet<&str> = iface.inputs.iter().map(|q| q.name.as_str()).collect();
            self.binding_keys(m, &inputs, &bp);
            let mut scope = constants;
            scope.extend(m.concept.fields().iter().map(|s| s.to_string()));
            for (k, e) in &m.bindings {
                self.check_scope(e, &scope, &bp.key(k));
            }
            return;
        }

        if !iface.calls.is_empty() || !iface.inputs.is_empty() {
            self.err(
                Code::TelemetryInterfaceHasCalls,
                path.key("interface"),
                format!(
                    "telemetry interface `{}` must read state only (no inputs, no calls)",
                    iface.name
                ),
            );
        }
        let expected: BTreeSet<&str> = match m.odometry_source() {
            Some(OdometrySource::WheelTravel) => ODOMETRY_WHEEL_SOURCES.into_iter().collect(),
            _ => m.concept.fields().iter().copied().collect(),
        };
        self.binding_keys(m, &expected, &bp);
        if m.odometry_source() == Some(OdometrySource::WheelTravel) {
            match self.doc.constants.get(WHEEL_TRACK_CONSTANT) {
                Some(t) if *t > 0.0 => {}
                _ => self.err(
                    Code::MissingConstant,
                    path.clone(),
                    format!("wheel-travel odometry needs a positive `{WHEEL_TRACK_CONSTANT}` constant"),
                ),
            }
        }
        let mut scope = constants;
        scope.extend(iface.returns.keys().cloned());
        for (k, e) in &m.bindings {
            self.check_scope(e, &scope, &bp.key(k));
        }
    }

    fn binding_keys(&mut self, m: &AbstractMapping, expected: &BTreeSet<&str>, path: &DocPath) {
        for want in expected {
            if !m.bindings.contains_key(*want) {
                self.err(
                    Code::IncompleteMapping,
                    path.clone(),
                    format!("`{}` mapping does not bind `{want}`", m.concept),
                );
            }
        }
        for k in m.bindings.keys() {
            if !expected.contains(k.as_str()) {
                self.err(Code::UnknownArg, path.key(k), format!("`{k}` is not bindable here"));
            }
        }
    }

    fn unused_primitives(&mut self) {
        let mut used: BTreeMap<&str, ()> = BTreeMap::new();
        for c in &self.doc.connections {
            if let Some(k) = &c.keepalive {
                used.insert(&k.primitive, ());
            }
            for p in &c.on_connect {
                used.insert(p, ());
            }
        }
        for f in &self.doc.interfaces {
            for call in &f.calls {
                used.insert(&call.primitive, ());
            }
        }
        for (i, p) in self.doc.primitives.iter().enumerate() {
            if p.is_adhoc() && !used.contains_key(p.name.as_str()) {
                self.diags.push(Diagnostic::warning(
                    Code::UnusedPrimitive,
                    DocPath::root().key("primitives").index(i),
                    format!("adhoc primitive `{}` is not reachable from any interface", p.name),
                ));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_structure;

    fn codes(text: &str) -> Vec<Code> {
        let doc = parse_structure(text).expect("structurally valid");
        validate(&doc).into_iter().map(|d| d.code).collect()
    }

    fn doc_with_primitive(prim: &str) -> String {
        format!(
            r#"{{
                "name": "t", "version": "1",
                "connections": [{{"id": "c", "transport": {{"tcp": {{"host": "h", "port": 1}}}}}}],
                "state": [{{"name": "s", "kind": "int"}}],
                "primitives": [{prim}]
            }}"#
        )
    }

    #[test]
    fn periodic_with_input() {
        let text = doc_with_primitive(
            r#"{"name": "poll", "connection": "c", "frequency": {"periodic": {"period_ms": 100}},
                "inputs": [{"name": "a"}],
                "write_format": {"positional": {"frame_len": 4, "command": 1, "fields": [{"name": "a", "offset": 1}]}}}"#,
        );
        assert_eq!(codes(&text), [Code::PeriodicHasInputs]);
    }

    #[test]
    fn overlapping_positional_fields() {
        let text = doc_with_primitive(
            r#"{"name": "p", "connection": "c", "frequency": {"periodic": {"period_ms": 100}},
                "read_format": {"positional": {"frame_len": 8, "command": 1, "fields": [
                    {"name": "a", "offset": 1, "width": 2, "encoding": "i16be"},
                    {"name": "b", "offset": 2, "width": 2, "encoding": "i16be"}]}},
                "outputs": [{"field": "a", "to": "state:s"}],
                "write_format": {"positional": {"frame_len": 8, "command": 2}}}"#,
        );
        assert_eq!(codes(&text), [Code::OverlappingFields]);
    }

    #[test]
    fn dangling_connection_path() {
        let text = doc_with_primitive(
            r#"{"name": "p", "connection": "uart9", "frequency": {"periodic": {"period_ms": 100}},
                "write_format": {"delimited": {"prefix": "E"}}}"#,
        );
        let doc = parse_structure(&text).unwrap();
        let diags = validate(&doc);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, Code::DanglingRef);
        assert_eq!(diags[0].path.as_str(), "primitives[0].connection");
    }

    #[test]
    fn unused_adhoc_is_a_warning() {
        let text = doc_with_primitive(
            r#"{"name": "p", "connection": "c", "frequency": "adhoc",
                "write_format": {"delimited": {"prefix": "E"}}}"#,
        );
        let doc = parse_structure(&text).unwrap();
        let diags = validate(&doc);
        assert_eq!(diags.len(), 1);
        assert!(!diags[0].is_error());
        assert_eq!(diags[0].code, Code::UnusedPrimitive);
    }

    #[test]
    fn field_outside_frame() {
        let text = doc_with_primitive(
            r#"{"name": "p", "connection": "c", "frequency": "adhoc",
                "inputs": [{"name": "a"}],
                "write_format": {"positional": {"frame_len": 4, "command": 1, "fields": [
                    {"name": "a", "offset": 3, "encoding": "u16be"}]}}}"#,
        );
        let c = codes(&text);
        assert!(c.contains(&Code::FieldOutOfFrame), "{c:?}");
    }

    #[test]
    fn prefix_collides_with_separator() {
        let text = doc_with_primitive(
            r#"{"name": "p", "connection": "c", "frequency": {"periodic": {"period_ms": 5}},
                "write_format": {"delimited": {"prefix": ","}}}"#,
        );
        assert_eq!(codes(&text), [Code::BadPrefix]);
    }
}
