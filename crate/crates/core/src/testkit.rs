//! Property-test generators and reference oracles. Enabled by the
//! `testkit` feature; not part of the runtime API.

use std::collections::BTreeMap;

use proptest::prelude::*;

use crate::codec::FieldValues;
use crate::kinematics::{normalize_angle, Pose, Twist};
use crate::model::{DelimitedFormat, FieldEncoding, MessageFormat, PositionalField, PositionalFormat};

fn encoding() -> impl Strategy<Value = FieldEncoding> {
    prop::sample::select(FieldEncoding::ALL.to_vec())
}

/// Positional formats with 0..6 non-overlapping fields laid out left to
/// right with random gaps and trailing padding.
pub fn positional_format() -> impl Strategy<Value = MessageFormat> {
    (
        any::<u8>(),
        prop::collection::vec((encoding(), 0usize..3), 0..6),
        0usize..4,
    )
        .prop_map(|(command, specs, pad)| {
            let mut offset = 1;
            let mut fields = Vec::new();
            for (i, (enc, gap)) in specs.into_iter().enumerate() {
                offset += gap;
                fields.push(PositionalField {
                    name: format!("f{i}"),
                    offset,
                    width: enc.width(),
                    encoding: enc,
                });
                offset += enc.width();
            }
            MessageFormat::Positional(PositionalFormat {
                frame_len: offset + pad,
                command,
                fields,
            })
        })
}

/// Delimited formats over the usual separators and terminators.
pub fn delimited_format() -> impl Strategy<Value = MessageFormat> {
    (
        prop::sample::select(('A'..='Z').chain('a'..='z').collect::<Vec<_>>()),
        prop::sample::select(vec![',', ';', ' ', '|', ':']),
        prop::sample::select(vec!['\n', '\r', '#', '$']),
        0usize..6,
    )
        .prop_map(|(prefix, separator, terminator, n)| {
            MessageFormat::Delimited(DelimitedFormat {
                prefix,
                separator,
                terminator,
                fields: (0..n).map(|i| format!("f{i}")).collect(),
            })
        })
}

pub fn message_format() -> impl Strategy<Value = MessageFormat> {
    prop_oneof![positional_format(), delimited_format()]
}

/// In-range values for every field of `format`.
pub fn values_for(format: &MessageFormat) -> BoxedStrategy<FieldValues> {
    match format {
        MessageFormat::Positional(p) => {
            let ranges: Vec<(String, (i64, i64))> =
                p.fields.iter().map(|f| (f.name.clone(), f.encoding.range())).collect();
            ranges
                .into_iter()
                .map(|(name, (lo, hi))| (lo..=hi).prop_map(move |v| (name.clone(), v)))
                .collect::<Vec<_>>()
                .prop_map(|kv| kv.into_iter().collect::<BTreeMap<_, _>>())
                .boxed()
        }
        MessageFormat::Delimited(d) => {
            let names = d.fields.clone();
            prop::collection::vec(any::<i64>(), names.len())
                .prop_map(move |vs| names.iter().cloned().zip(vs).collect())
                .boxed()
        }
    }
}

pub fn format_and_values() -> impl Strategy<Value = (MessageFormat, FieldValues)> {
    message_format().prop_flat_map(|f| {
        let values = values_for(&f);
        (Just(f), values)
    })
}

/// A format, 1..8 value sets for it, and byte offsets at which to split the
/// concatenated stream.
pub fn stream_case() -> impl Strategy<Value = (MessageFormat, Vec<FieldValues>, Vec<prop::sample::Index>)> {
    message_format().prop_flat_map(|f| {
        let frames = prop::collection::vec(values_for(&f), 1..8);
        let cuts = prop::collection::vec(any::<prop::sample::Index>(), 0..10);
        (Just(f), frames, cuts)
    })
}

/// Twists and steps for which forward Euler with 10 000 sub-steps is
/// itself accurate to about 5e-7 m: its position error is bounded by
/// `|v|·|ω|·dt² / (2·10 000)`.
pub fn euler_case() -> impl Strategy<Value = (Pose, Twist, f64)> {
    (pose(), -0.5f64..=0.5, -2.0f64..=2.0, 0.0f64..=0.1).prop_map(|(p, v, w, dt)| (p, Twist::new(v, w), dt))
}

pub fn pose() -> impl Strategy<Value = Pose> {
    (
        -10.0f64..10.0,
        -10.0f64..10.0,
        -std::f64::consts::PI..std::f64::consts::PI,
    )
        .prop_map(|(x, y, t)| Pose::new(x, y, normalize_angle(t)))
}

pub fn twist() -> impl Strategy<Value = Twist> {
    (-2.0f64..2.0, -10.0f64..10.0).prop_map(|(v, w)| Twist::new(v, w))
}

/// Forward Euler over `steps` equal sub-steps.
pub fn euler_integrate(p: Pose, t: Twist, dt: f64, steps: u32) -> Pose {
    let h = dt / steps as f64;
    let (mut x, mut y, mut th) = (p.x_m, p.y_m, p.theta_rad);
    for _ in 0..steps {
        x += t.linear_mps * th.cos() * h;
        y += t.linear_mps * th.sin() * h;
        th += t.angular_radps * h;
    }
    Pose::new(x, y, normalize_angle(th))
}

/// Largest coordinate difference, with headings compared on the circle.
pub fn pose_error(a: Pose, b: Pose) -> f64 {
    let dth = normalize_angle(a.theta_rad - b.theta_rad).abs();
    (a.x_m - b.x_m).abs().max((a.y_m - b.y_m).abs()).max(dth)
}
