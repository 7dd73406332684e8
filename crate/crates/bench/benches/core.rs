use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rdis_core::{
    canonical_text, decode, encode, frame_scan, generate, integrate_pose, inverse, parse_document, parse_expr,
    DelimitedFormat, Env, FieldEncoding, FrameAssembler, MessageFormat, Pose, PositionalField, PositionalFormat, Twist,
};

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!(
        "{}/../../fixtures/{name}.rdis.json",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap()
}

fn positional() -> MessageFormat {
    MessageFormat::Positional(PositionalFormat {
        frame_len: 8,
        command: b'M',
        fields: vec![
            PositionalField {
                name: "left".into(),
                offset: 1,
                width: 1,
                encoding: FieldEncoding::I8,
            },
            PositionalField {
                name: "right".into(),
                offset: 2,
                width: 1,
                encoding: FieldEncoding::I8,
            },
        ],
    })
}

fn codec(c: &mut Criterion) {
    let values: BTreeMap<String, i64> = [("left".to_string(), 5), ("right".to_string(), -5)].into();
    let pos = positional();
    let del = MessageFormat::Delimited(DelimitedFormat::new('D', &["left", "right"]));
    c.bench_function("encode positional", |b| {
        b.iter(|| encode(black_box(&pos), black_box(&values)))
    });
    c.bench_function("encode delimited", |b| {
        b.iter(|| encode(black_box(&del), black_box(&values)))
    });
    let pframe = encode(&pos, &values).unwrap();
    let dframe = encode(&del, &values).unwrap();
    c.bench_function("decode positional", |b| {
        b.iter(|| decode(black_box(&pos), black_box(pframe.as_bytes())))
    });
    c.bench_function("decode delimited", |b| {
        b.iter(|| decode(black_box(&del), black_box(dframe.as_bytes())))
    });

    let stream: Vec<u8> = (0..1000).flat_map(|_| dframe.as_bytes().to_vec()).collect();
    c.bench_function("frame_scan 1000 delimited frames", |b| {
        b.iter(|| frame_scan(black_box(&del), black_box(&stream)))
    });
    c.bench_function("assembler 1000 frames in 7-byte chunks", |b| {
        b.iter_batched(
            || FrameAssembler::new(del.clone()),
            |mut a| {
                let mut n = 0;
                for chunk in stream.chunks(7) {
                    n += a.push(chunk).len();
                }
                n
            },
            BatchSize::SmallInput,
        )
    });
}

fn kinematics(c: &mut Criterion) {
    let p = Pose::new(1.0, -2.0, 0.3);
    let t = Twist::new(0.2, 1.0);
    c.bench_function("integrate_pose arc", |b| {
        b.iter(|| integrate_pose(black_box(p), black_box(t), black_box(0.01)))
    });
    c.bench_function("inverse", |b| b.iter(|| inverse(black_box(t), black_box(0.3))));
}

fn expressions(c: &mut Criterion) {
    let src = "clamp(round((linear - angular * wheel_track_m / 2) / max_wheel_mps * 100), -100, 100)";
    let e = parse_expr(src).unwrap();
    let env = Env::new()
        .with("linear", 0.2)
        .with("angular", 1.0)
        .with("wheel_track_m", 0.1)
        .with("max_wheel_mps", 0.5);
    c.bench_function("parse drive expression", |b| b.iter(|| parse_expr(black_box(src))));
    c.bench_function("eval drive expression", |b| b.iter(|| e.eval(black_box(&env))));
}

fn documents(c: &mut Criterion) {
    let text = fixture("finchling");
    let doc = parse_document(&text).unwrap();
    c.bench_function("parse and validate finchling", |b| {
        b.iter(|| parse_document(black_box(&text)))
    });
    c.bench_function("canonical text finchling", |b| {
        b.iter(|| canonical_text(black_box(&doc)))
    });
    c.bench_function("generate c-cli finchling", |b| {
        b.iter(|| generate(black_box(&doc), "c-cli"))
    });
}

criterion_group!(benches, codec, kinematics, expressions, documents);
criterion_main!(benches);
