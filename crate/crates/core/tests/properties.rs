use proptest::prelude::*;

use rdis_core::testkit::*;
use rdis_core::{decode, encode, forward, frame_scan, integrate_pose, inverse, Frame, FrameAssembler};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn decode_inverts_encode((format, values) in format_and_values()) {
        let frame = encode(&format, &values).unwrap();
        prop_assert_eq!(decode(&format, frame.as_bytes()).unwrap(), values);
        let (frames, rest) = frame_scan(&format, frame.as_bytes());
        prop_assert_eq!(frames, vec![frame]);
        prop_assert!(rest.is_empty());
    }

    #[test]
    fn chunked_scan_equals_one_shot((format, batches, cuts) in stream_case()) {
        let stream: Vec<u8> = batches.iter().flat_map(|v| encode(&format, v).unwrap().into_bytes()).collect();
        let (whole, rest) = frame_scan(&format, &stream);
        prop_assert!(rest.is_empty());
        let mut points: Vec<usize> = cuts.iter().map(|i| i.index(stream.len() + 1)).collect();
        points.sort_unstable();
        let mut asm = FrameAssembler::new(format.clone());
        let mut got: Vec<Frame> = Vec::new();
        let mut at = 0;
        for p in points.into_iter().chain([stream.len()]) {
            got.extend(asm.push(&stream[at..p]));
            at = p;
        }
        prop_assert_eq!(&got, &whole);
        prop_assert!(asm.pending().is_empty());
        let decoded: Vec<_> = got.iter().map(|f| decode(&format, f.as_bytes()).unwrap()).collect();
        prop_assert_eq!(decoded, batches);
    }

    #[test]
    fn forward_inverts_inverse(t in twist(), track in 0.05f64..1.0) {
        let back = forward(inverse(t, track).unwrap(), track).unwrap();
        prop_assert!((back.linear_mps - t.linear_mps).abs() <= 1e-12);
        prop_assert!((back.angular_radps - t.angular_radps).abs() <= 1e-12);
    }

    #[test]
    fn integration_matches_euler_oracle((p, t, dt) in euler_case()) {
        let exact = integrate_pose(p, t, dt).unwrap();
        let approx = euler_integrate(p, t, dt, 10_000);
        prop_assert!(pose_error(exact, approx) <= 1e-6, "{exact:?} vs {approx:?}");
    }

    #[test]
    fn integration_composes(p in pose(), t in twist(), a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let two = integrate_pose(integrate_pose(p, t, a).unwrap(), t, b).unwrap();
        let one = integrate_pose(p, t, a + b).unwrap();
        prop_assert!(pose_error(one, two) <= 1e-9, "{one:?} vs {two:?}");
    }
}
