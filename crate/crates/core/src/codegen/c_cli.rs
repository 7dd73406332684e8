//! The `c-cli` target: one C99 file plus a README.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::CodegenError;
use crate::expr::{BinOp, ExprAst, Func};
use crate::model::*;
use crate::number::format_number;
use crate::template::Template;

const TARGET: &str = "c-cli";
const MAIN_TEMPLATE: &str = include_str!("../../templates/c_cli.c.tmpl");
const README_TEMPLATE: &str = include_str!("../../templates/c_cli_readme.md.tmpl");

/// Identifiers the generated file cannot use as function or parameter names.
const RESERVED: &[&str] = &[
    "auto",
    "break",
    "case",
    "char",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extern",
    "float",
    "for",
    "goto",
    "if",
    "inline",
    "int",
    "long",
    "register",
    "restrict",
    "return",
    "short",
    "signed",
    "sizeof",
    "static",
    "struct",
    "switch",
    "typedef",
    "union",
    "unsigned",
    "void",
    "volatile",
    "while",
    "main",
    "argc",
    "argv",
    "frame",
    "reply",
    "reply_len",
    "rc",
    "n",
    "vals",
    "accept",
    "bind",
    "close",
    "connect",
    "exit",
    "free",
    "read",
    "recv",
    "select",
    "send",
    "signal",
    "socket",
    "write",
    "round",
    "fmin",
    "fmax",
    "printf",
    "time",
    "abs",
    "floor",
    "ceil",
    "sqrt",
    "sin",
    "cos",
    "strtok",
];

/// Delimited write buffers hold the prefix, terminator and up to 11
/// characters plus a separator per field.
const INT_TEXT_MAX: usize = 11;
const DELIMITED_REPLY_CAP: usize = 256;

pub(super) fn generate(doc: &RdisDocument, sha256: &str) -> Result<BTreeMap<String, String>, CodegenError> {
    check_supported(doc)?;
    let ctx = context(doc, sha256);
    let main = Template::parse("c_cli.c.tmpl", MAIN_TEMPLATE)?.render(&ctx)?;
    let readme = Template::parse("c_cli_readme.md.tmpl", README_TEMPLATE)?.render(&ctx)?;
    let dir = format!("{}/{TARGET}", doc.name);
    Ok(BTreeMap::from([
        (format!("{dir}/main.c"), main),
        (format!("{dir}/README.md"), readme),
    ]))
}

fn check_supported(doc: &RdisDocument) -> Result<(), CodegenError> {
    let mut features = Vec::new();
    match doc.connections.len() {
        1 => {}
        0 => features.push("documents without a connection".to_string()),
        n => features.push(format!("{n} connections (exactly one is supported)")),
    }
    for c in &doc.connections {
        if let Transport::Serial { .. } = c.transport {
            features.push(format!("serial transport on connection `{}`", c.id));
        }
    }
    let mut reserved = |what: &str, name: &str| {
        if RESERVED.contains(&name) || name.starts_with("rdis_") || name.starts_with("iface_") {
            features.push(format!(
                "{what} `{name}` collides with a C keyword or driver identifier"
            ));
        }
    };
    for p in &doc.primitives {
        reserved("primitive", &p.name);
        for i in &p.inputs {
            reserved("primitive input", &i.name);
        }
    }
    for f in &doc.interfaces {
        reserved("interface", &f.name);
    }
    if features.is_empty() {
        Ok(())
    } else {
        Err(CodegenError::Unsupported {
            target: TARGET.to_string(),
            features,
        })
    }
}

fn context(doc: &RdisDocument, sha256: &str) -> Value {
    let conn = &doc.connections[0];
    let Transport::Tcp { host, port } = &conn.transport else {
        unreachable!("checked by check_supported")
    };
    let framing = doc
        .primitives
        .iter()
        .find_map(|p| p.read_format.as_ref())
        .or_else(|| doc.primitives.first().map(|p| &p.write_format));
    let mut conn_ctx = json!({"host": host, "port": port, "positional": true, "frame_len": 0, "terminator": ""});
    match framing {
        Some(MessageFormat::Delimited(d)) => {
            conn_ctx["positional"] = json!(false);
            conn_ctx["terminator"] = json!(c_char(d.terminator));
        }
        Some(MessageFormat::Positional(p)) => conn_ctx["frame_len"] = json!(p.frame_len),
        None => conn_ctx["frame_len"] = json!(1),
    }

    let mut jobs = Vec::new();
    if let Some(k) = &conn.keepalive {
        jobs.push(json!({"name": k.primitive, "period_ms": k.period_ms}));
    }
    for p in &doc.primitives {
        if let Frequency::Periodic { period_ms } = p.frequency {
            jobs.push(json!({"name": p.name, "period_ms": period_ms}));
        }
    }

    json!({
        "name": doc.name,
        "version": doc.version,
        "sha256": sha256,
        "conn": conn_ctx,
        "constants": doc.constants.iter().map(|(k, v)| json!({"name": k, "value": c_double(*v)})).collect::<Vec<_>>(),
        "state": doc.state_vars.iter().map(|s| json!({"name": s.name, "initial": c_double(s.initial)})).collect::<Vec<_>>(),
        "primitives": doc.primitives.iter().map(primitive).collect::<Vec<_>>(),
        "interfaces": doc.interfaces.iter().map(|f| interface(doc, f)).collect::<Vec<_>>(),
        "on_connect": conn.on_connect,
        "has_jobs": !jobs.is_empty(),
        "jobs": jobs,
    })
}

fn primitive(p: &Primitive) -> Value {
    let names: Vec<&str> = p.inputs.iter().map(|i| i.name.as_str()).collect();
    let params = if names.is_empty() {
        "void".to_string()
    } else {
        names.iter().map(|n| format!("int {n}")).collect::<Vec<_>>().join(", ")
    };
    let returns: Vec<&str> = p.return_fields().collect();
    let mut v = json!({
        "name": p.name,
        "params": params,
        "returns": returns,
        "has_struct": !returns.is_empty(),
        "argc": names.len() + 2,
        "argv_args": (0..names.len()).map(|i| format!("atoi(argv[{}])", i + 2)).collect::<Vec<_>>().join(", "),
        "usage": std::iter::once(p.name.as_str()).chain(names.iter().copied()).map(|s| s.to_string()).collect::<Vec<_>>().join(" "),
        "has_reply": p.read_format.is_some(),
        "reply_delimited": false,
    });

    match &p.write_format {
        MessageFormat::Positional(f) => {
            let mut stores = Vec::new();
            let mut checks = Vec::new();
            for field in &f.fields {
                let w = field.encoding.width();
                for i in 0..w {
                    stores.push(json!({"offset": field.offset + i, "name": field.name, "shift": 8 * (w - 1 - i)}));
                }
                let (lo, hi) = field.encoding.range();
                checks.push(json!({"name": field.name, "lo": lo, "hi": hi}));
            }
            v["positional"] = json!(true);
            v["frame_len"] = json!(f.frame_len);
            v["command"] = json!(format!("0x{:02X}", f.command));
            v["stores"] = json!(stores);
            v["range_checks"] = json!(checks);
            v["summary"] = json!(format!(
                "{}: {}-byte positional frame, command 0x{:02X}",
                p.name, f.frame_len, f.command
            ));
        }
        MessageFormat::Delimited(d) => {
            let esc = |c: char| c_string_body(&c.to_string(), true);
            let mut fmt = esc(d.prefix);
            for _ in &d.fields {
                fmt.push_str(&esc(d.separator));
                fmt.push_str("%d");
            }
            fmt.push_str(&esc(d.terminator));
            let args: String = d.fields.iter().map(|f| format!(", {f}")).collect();
            let buf_len = d.prefix.len_utf8()
                + d.fields.len() * (d.separator.len_utf8() + INT_TEXT_MAX)
                + d.terminator.len_utf8()
                + 1;
            v["positional"] = json!(false);
            v["buf_len"] = json!(buf_len);
            v["format"] = json!(fmt);
            v["format_args"] = json!(args);
            v["range_checks"] = json!([]);
            v["summary"] = json!(format!(
                "{}: delimited line with prefix '{}'",
                p.name,
                d.prefix.escape_default()
            ));
        }
    }

    if let Some(rf) = &p.read_format {
        let mut outputs = Vec::new();
        let source = |field: &str| -> String {
            match rf {
                MessageFormat::Positional(f) => {
                    let pf = f
                        .fields
                        .iter()
                        .find(|x| x.name == field)
                        .expect("validated output field");
                    format!("rdis_get_{}(reply, {})", pf.encoding.as_str(), pf.offset)
                }
                MessageFormat::Delimited(d) => {
                    let i = d
                        .fields
                        .iter()
                        .position(|x| x == field)
                        .expect("validated output field");
                    format!("vals[{i}]")
                }
            }
        };
        for o in &p.outputs {
            let target = match &o.target {
                OutputTarget::Return => format!("R_{}.{}", p.name, o.field),
                OutputTarget::State(s) => format!("S_{s}"),
            };
            outputs.push(json!({"target": target, "source": source(&o.field)}));
        }
        v["outputs"] = json!(outputs);
        match rf {
            MessageFormat::Positional(f) => {
                v["reply_cap"] = json!(f.frame_len);
                v["reply_tag"] = json!(format!("0x{:02X}", f.command));
            }
            MessageFormat::Delimited(d) => {
                v["reply_delimited"] = json!(true);
                v["reply_cap"] = json!(DELIMITED_REPLY_CAP);
                v["reply_tag"] = json!(c_char(d.prefix));
                v["reply_separator"] = json!(c_char(d.separator));
                v["reply_count"] = json!(d.fields.len());
                v["reply_slots"] = json!(d.fields.len().max(1));
            }
        }
    }
    v
}

fn interface(doc: &RdisDocument, f: &Interface) -> Value {
    let params = if f.inputs.is_empty() {
        "void".to_string()
    } else {
        f.inputs
            .iter()
            .map(|i| format!("double in_{}", i.name))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut prior: Vec<String> = Vec::new();
    let mut calls = Vec::new();
    for call in &f.calls {
        let prim = doc.primitive(&call.primitive).expect("validated call");
        let scope = Scope {
            doc,
            iface: f,
            prior: &prior,
        };
        let args: Vec<Value> = call
            .args
            .iter()
            .map(|(name, e)| json!({"name": name, "expr": c_expr(e, &scope)}))
            .collect();
        let call_args = prim
            .inputs
            .iter()
            .map(|i| format!("(int)round(a_{})", i.name))
            .collect::<Vec<_>>()
            .join(", ");
        calls.push(json!({"primitive": prim.name, "args": args, "call_args": call_args}));
        prior.extend(prim.return_fields().map(|fld| format!("{}.{fld}", prim.name)));
    }
    let scope = Scope {
        doc,
        iface: f,
        prior: &prior,
    };
    let results: Vec<Value> = f
        .returns
        .iter()
        .map(|(name, e)| json!({"name": name, "expr": c_expr(e, &scope)}))
        .collect();
    json!({
        "name": f.name,
        "params": params,
        "calls": calls,
        "results": results,
        "argc": f.inputs.len() + 1,
        "argv_args": (0..f.inputs.len()).map(|i| format!("atof(argv[{}])", i + 1)).collect::<Vec<_>>().join(", "),
        "usage": std::iter::once(f.name.as_str()).chain(f.inputs.iter().map(|i| i.name.as_str())).collect::<Vec<_>>().join(" "),
    })
}

/// Name resolution mirrors the runtime: inputs shadow state variables,
/// which shadow constants; dotted names are earlier call results.
struct Scope<'a> {
    doc: &'a RdisDocument,
    iface: &'a Interface,
    prior: &'a [String],
}

impl Scope<'_> {
    fn resolve(&self, name: &str) -> String {
        if let Some((prim, field)) = name.split_once('.') {
            debug_assert!(self.prior.iter().any(|p| p == name));
            return format!("(double)R_{prim}.{field}");
        }
        if self.iface.inputs.iter().any(|i| i.name == name) {
            format!("in_{name}")
        } else if self.doc.state_var(name).is_some() {
            format!("S_{name}")
        } else {
            format!("K_{name}")
        }
    }
}

fn c_expr(e: &ExprAst, scope: &Scope<'_>) -> String {
    match e {
        ExprAst::Number(v) if *v < 0.0 => format!("({})", c_double(*v)),
        ExprAst::Number(v) => c_double(*v),
        ExprAst::Name(n) => scope.resolve(n),
        ExprAst::Neg(x) => format!("(-{})", c_expr(x, scope)),
        ExprAst::Binary {
            op: BinOp::Div,
            lhs,
            rhs,
        } => {
            format!("rdis_div({}, {})", c_expr(lhs, scope), c_expr(rhs, scope))
        }
        ExprAst::Binary { op, lhs, rhs } => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => unreachable!(),
            };
            format!("({} {sym} {})", c_expr(lhs, scope), c_expr(rhs, scope))
        }
        ExprAst::Call { func, args } => {
            let name = match func {
                Func::Clamp => "rdis_clamp",
                Func::Round => "round",
                Func::Min => "fmin",
                Func::Max => "fmax",
            };
            let args: Vec<String> = args.iter().map(|a| c_expr(a, scope)).collect();
            format!("{name}({})", args.join(", "))
        }
    }
}

/// A double literal: always carries a decimal point so C never sees an
/// integer constant.
fn c_double(v: f64) -> String {
    let s = format_number(v);
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

fn c_char(c: char) -> String {
    match c {
        '\'' => "'\\''".to_string(),
        _ => format!("'{}'", c_string_body(&c.to_string(), false)),
    }
}

/// Escapes text for a C string literal body; with `printf` set, `%` is
/// doubled as well.
fn c_string_body(s: &str, printf: bool) -> String {
    let mut out = String::new();
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '%' if printf => out.push_str("%%"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => out.push_str(&format!("\\{:03o}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubles_always_have_a_point() {
        assert_eq!(c_double(100.0), "100.0");
        assert_eq!(c_double(0.5), "0.5");
        assert_eq!(c_double(-2.0), "-2.0");
    }

    #[test]
    fn escapes() {
        assert_eq!(c_char('\n'), "'\\n'");
        assert_eq!(c_char('\''), "'\\''");
        assert_eq!(c_char(','), "','");
        assert_eq!(c_string_body("%\n\"", true), "%%\\n\\\"");
    }
}
