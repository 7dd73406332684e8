use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use rdis_core::{
    encode, generate, list_targets, parse_document, CodegenError, FieldValues, GeneratedArtifact, MessageFormat,
    RdisDocument,
};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn load(name: &str) -> RdisDocument {
    parse_document(&fs::read_to_string(root().join(format!("fixtures/{name}.rdis.json"))).unwrap()).unwrap()
}

fn main_c(art: &GeneratedArtifact) -> &str {
    art.files
        .iter()
        .find(|(k, _)| k.ends_with("/main.c"))
        .map(|(_, v)| v.as_str())
        .unwrap()
}

#[test]
fn goldens_are_stable() {
    for name in ["finchling", "koalette"] {
        let doc = load(name);
        let a = generate(&doc, "c-cli").unwrap();
        let b = generate(&doc, "c-cli").unwrap();
        assert_eq!(a, b);
        let keys: Vec<&str> = a.files.keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            [format!("{name}/c-cli/README.md"), format!("{name}/c-cli/main.c")]
        );
        for (rel, text) in &a.files {
            let golden = root().join("fixtures/golden").join(rel);
            if std::env::var_os("RDIS_BLESS").is_some() {
                fs::create_dir_all(golden.parent().unwrap()).unwrap();
                fs::write(&golden, text).unwrap();
            }
            assert_eq!(
                text,
                &fs::read_to_string(&golden).unwrap(),
                "{rel} drifted from its golden file"
            );
        }
    }
}

#[test]
fn unknown_target() {
    assert!(list_targets().iter().any(|t| t.name == "c-cli"));
    assert!(matches!(generate(&load("finchling"), "ros2"), Err(CodegenError::UnknownTarget(t)) if t == "ros2"));
}

#[test]
fn unsupported_features_are_listed() {
    let mut doc = load("koalette");
    let mut second = doc.connections[0].clone();
    second.id = "aux".into();
    second.keepalive = None;
    doc.connections.push(second);
    doc.primitives[0].name = "int".into();
    for f in &mut doc.interfaces {
        for c in &mut f.calls {
            if c.primitive == "setSpeed" {
                c.primitive = "int".into();
            }
        }
    }
    match generate(&doc, "c-cli") {
        Err(CodegenError::Unsupported { features, .. }) => {
            assert_eq!(features.len(), 2, "{features:?}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn every_adhoc_primitive_and_interface_once() {
    for name in ["finchling", "koalette"] {
        let doc = load(name);
        let art = generate(&doc, "c-cli").unwrap();
        let c = main_c(&art);
        for p in doc.primitives.iter().filter(|p| p.is_adhoc()) {
            let params = if p.inputs.is_empty() {
                "void".to_string()
            } else {
                p.inputs
                    .iter()
                    .map(|i| format!("int {}", i.name))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let sig = format!("static int {}({params})\n{{", p.name);
            assert_eq!(c.matches(&sig).count(), 1, "{name}: {sig}");
        }
        for f in &doc.interfaces {
            let sig = format!("static int iface_{}(", f.name);
            assert_eq!(c.matches(&sig).count(), 1, "{name}: {sig}");
        }
    }
}

/// Reads the byte-building statements of one generated positional function
/// and evaluates them for the given argument values.
fn eval_positional(c: &str, func: &str, args: &BTreeMap<&str, i64>) -> Vec<u8> {
    let start = c.find(&format!("static int {func}(")).unwrap();
    let body = &c[start..start + c[start..].find("\n}\n").unwrap()];
    let len_re = regex::Regex::new(r"unsigned char frame\[(\d+)\];").unwrap();
    let len: usize = len_re.captures(body).unwrap()[1].parse().unwrap();
    let mut frame = vec![0u8; len];
    let cmd_re = regex::Regex::new(r"frame\[0\] = 0x([0-9A-F]{2});").unwrap();
    frame[0] = u8::from_str_radix(&cmd_re.captures(body).unwrap()[1], 16).unwrap();
    let store_re = regex::Regex::new(r"frame\[(\d+)\] = rdis_byte\((\w+), (\d+)\);").unwrap();
    for cap in store_re.captures_iter(body) {
        let off: usize = cap[1].parse().unwrap();
        let v = args[&cap[2]];
        let shift: u32 = cap[3].parse().unwrap();
        frame[off] = ((v as u64) >> shift) as u8;
    }
    frame
}

/// Same for a delimited function: substitutes the arguments into its
/// snprintf format.
fn eval_delimited(c: &str, func: &str, args: &BTreeMap<&str, i64>) -> Vec<u8> {
    let start = c.find(&format!("static int {func}(")).unwrap();
    let body = &c[start..start + c[start..].find("\n}\n").unwrap()];
    let re = regex::Regex::new(r#"snprintf\(frame, sizeof frame, "((?:[^"\\]|\\.)*)"((?:, \w+)*)\);"#).unwrap();
    let cap = re.captures(body).unwrap();
    let mut names = cap[2].split(", ").filter(|s| !s.is_empty());
    let fmt = cap[1]
        .replace("\\n", "\n")
        .replace("\\r", "\r")
        .replace("\\\\", "\\")
        .replace("%%", "%");
    let mut out = String::new();
    let mut parts = fmt.split("%d");
    out.push_str(parts.next().unwrap());
    for part in parts {
        out.push_str(&args[names.next().unwrap()].to_string());
        out.push_str(part);
    }
    out.into_bytes()
}

#[test]
fn frame_constants_match_codec() {
    let samples: [&[(&str, i64)]; 3] = [
        &[("left", 5), ("right", -5)],
        &[("left", -128), ("right", 127)],
        &[("left", 0), ("right", 0)],
    ];
    for name in ["finchling", "koalette"] {
        let doc = load(name);
        let art = generate(&doc, "c-cli").unwrap();
        let c = main_c(&art);
        for p in &doc.primitives {
            for sample in samples {
                let args: BTreeMap<&str, i64> = sample
                    .iter()
                    .copied()
                    .filter(|(k, _)| p.inputs.iter().any(|i| i.name == *k))
                    .collect();
                let values: FieldValues = args.iter().map(|(k, v)| (k.to_string(), *v)).collect();
                let expected = encode(&p.write_format, &values).unwrap();
                let got = match p.write_format {
                    MessageFormat::Positional(_) => eval_positional(c, &p.name, &args),
                    MessageFormat::Delimited(_) => eval_delimited(c, &p.name, &args),
                };
                assert_eq!(got, expected.as_bytes(), "{name}.{} {args:?}", p.name);
            }
        }
    }
    let fin = main_c(&generate(&load("finchling"), "c-cli").unwrap()).to_string();
    assert!(fin.contains("setMotor(") && fin.contains("frame[0] = 0x4D;"));
    let koa = main_c(&generate(&load("koalette"), "c-cli").unwrap()).to_string();
    assert!(koa.contains(r#""D,%d,%d\n""#));
}

fn cc() -> Option<&'static str> {
    ["cc", "gcc", "clang"].into_iter().find(|c| {
        Command::new(c)
            .arg("--version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .is_ok_and(|s| s.success())
    })
}

/// Compiles the generated driver and runs it in dry-run mode.
#[test]
fn generated_c_compiles_and_encodes() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let cases = [
        (
            "finchling",
            "raw setMotor 5 -5\ndrive 0.2 0\n",
            vec!["tx 4D 05 FB 00 00 00 00 00", "ok", "tx 4D 28 28 00 00 00 00 00", "ok"],
        ),
        (
            "koalette",
            "raw setSpeed 10 -10\ndrive 0.2 0\n",
            vec![
                "tx 44 2C 31 30 2C 2D 31 30 0A",
                "error timeout",
                "tx 44 2C 31 31 37 36 2C 31 31 37 36 0A",
                "error timeout",
            ],
        ),
    ];
    for (name, input, expected) in cases {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("main.c");
        let bin = dir.path().join(name);
        fs::write(&src, main_c(&generate(&load(name), "c-cli").unwrap())).unwrap();
        let out = Command::new(cc)
            .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-O1", "-o"])
            .arg(&bin)
            .arg(&src)
            .arg("-lm")
            .output()
            .unwrap();
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let mut child = Command::new(&bin)
            .env("RDIS_DRY_RUN", "1")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
        let out = child.wait_with_output().unwrap();
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert_eq!(stdout.lines().collect::<Vec<_>>(), expected, "{name}");
    }
}
