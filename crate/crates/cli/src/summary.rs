//! Human and JSON views of a document for `inspect` and `discover --summary`.

use std::fmt::Write;

use rdis_core::{format_number, Frequency, MessageFormat, OdometrySource, OutputTarget, RdisDocument, Transport};
use serde_json::{json, Value};

fn transport(t: &Transport) -> String {
    match t {
        Transport::Tcp { host, port } => format!("tcp {host}:{port}"),
        Transport::Serial { device, baud } => format!("serial {device} @{baud}"),
    }
}

fn frequency(f: Frequency) -> String {
    match f {
        Frequency::Adhoc => "adhoc".into(),
        Frequency::Periodic { period_ms } => format!("every {period_ms} ms"),
    }
}

fn format_line(f: &MessageFormat) -> String {
    match f {
        MessageFormat::Positional(p) => {
            let fields: Vec<String> = p
                .fields
                .iter()
                .map(|x| format!("{} {}@{}", x.name, x.encoding.as_str(), x.offset))
                .collect();
            format!(
                "positional {:?} len {} [{}]",
                p.command as char,
                p.frame_len,
                fields.join(", ")
            )
        }
        MessageFormat::Delimited(d) => format!(
            "delimited {:?} sep {:?} term {:?} [{}]",
            d.prefix,
            d.separator,
            d.terminator,
            d.fields.join(", ")
        ),
    }
}

pub fn text(doc: &RdisDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {} (rdis {})", doc.name, doc.version, doc.rdis_version);

    let _ = writeln!(s, "constants:");
    for (k, v) in &doc.constants {
        let _ = writeln!(s, "  {k} = {}", format_number(*v));
    }
    let _ = writeln!(s, "connections:");
    for c in &doc.connections {
        let _ = write!(
            s,
            "  {} {} {}",
            c.id,
            transport(&c.transport),
            c.threading_model.as_str()
        );
        if let Some(k) = &c.keepalive {
            let _ = write!(s, " keepalive {} every {} ms", k.primitive, k.period_ms);
        }
        if !c.on_connect.is_empty() {
            let _ = write!(s, " on_connect [{}]", c.on_connect.join(", "));
        }
        s.push('\n');
    }
    let _ = writeln!(s, "state:");
    for v in &doc.state_vars {
        let _ = writeln!(s, "  {} {} = {}", v.name, v.kind.as_str(), format_number(v.initial));
    }
    let _ = writeln!(s, "primitives:");
    for p in &doc.primitives {
        let inputs: Vec<&str> = p.inputs.iter().map(|i| i.name.as_str()).collect();
        let _ = writeln!(
            s,
            "  {}({}) on {}, {}",
            p.name,
            inputs.join(", "),
            p.connection,
            frequency(p.frequency)
        );
        let _ = writeln!(s, "    write {}", format_line(&p.write_format));
        if let Some(r) = &p.read_format {
            let _ = writeln!(s, "    read  {}", format_line(r));
        }
        for o in &p.outputs {
            let to = match &o.target {
                OutputTarget::Return => "return".to_string(),
                OutputTarget::State(v) => format!("state {v}"),
            };
            let _ = writeln!(s, "    {} -> {to}", o.field);
        }
    }
    let _ = writeln!(s, "interfaces:");
    for i in &doc.interfaces {
        let inputs: Vec<&str> = i.inputs.iter().map(|p| p.name.as_str()).collect();
        let calls: Vec<&str> = i.calls.iter().map(|c| c.primitive.as_str()).collect();
        let _ = write!(s, "  {}({})", i.name, inputs.join(", "));
        if !calls.is_empty() {
            let _ = write!(s, " calls {}", calls.join(", "));
        }
        if !i.returns.is_empty() {
            let _ = write!(s, " -> {}", i.returns.keys().cloned().collect::<Vec<_>>().join(", "));
        }
        s.push('\n');
    }
    let _ = writeln!(s, "concepts:");
    for m in &doc.mappings {
        let note = match m.odometry_source() {
            Some(OdometrySource::WheelTravel) => " (pose integrated from wheel travel)",
            _ => "",
        };
        let _ = writeln!(s, "  {} -> {}{note}", m.concept, m.interface);
    }
    s
}

pub fn json(doc: &RdisDocument) -> Value {
    json!({
        "name": doc.name,
        "version": doc.version,
        "rdis_version": doc.rdis_version,
        "constants": doc.constants,
        "connections": doc.connections.iter().map(|c| json!({
            "id": c.id,
            "transport": transport(&c.transport),
            "threading_model": c.threading_model.as_str(),
            "keepalive": c.keepalive.as_ref().map(|k| json!({"primitive": k.primitive, "period_ms": k.period_ms})),
            "on_connect": c.on_connect,
        })).collect::<Vec<_>>(),
        "state": doc.state_vars.iter().map(|v| json!({
            "name": v.name, "kind": v.kind.as_str(), "initial": v.initial,
        })).collect::<Vec<_>>(),
        "primitives": doc.primitives.iter().map(|p| json!({
            "name": p.name,
            "connection": p.connection,
            "frequency": frequency(p.frequency),
            "inputs": p.inputs.iter().map(|i| i.name.as_str()).collect::<Vec<_>>(),
            "write_format": format_line(&p.write_format),
            "read_format": p.read_format.as_ref().map(format_line),
        })).collect::<Vec<_>>(),
        "interfaces": doc.interfaces.iter().map(|i| json!({
            "name": i.name,
            "inputs": i.inputs.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(),
            "calls": i.calls.iter().map(|c| c.primitive.as_str()).collect::<Vec<_>>(),
            "returns": i.returns.keys().collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "concepts": doc.mappings.iter().map(|m| json!({
            "concept": m.concept.as_str(),
            "interface": m.interface,
            "kind": if m.concept.is_command() { "command" } else { "telemetry" },
        })).collect::<Vec<_>>(),
    })
}
