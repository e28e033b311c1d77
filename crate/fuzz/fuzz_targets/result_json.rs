#![no_main]

use crisp_core::geometry::Pose;
use crisp_core::io::parse_result_json;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(result) = parse_result_json(data) {
        // The pose block must reconstruct a valid rotation.
        let pose = Pose::from_flat(&result.pose).expect("validated pose");
        assert!((pose.rotation().determinant() - 1.0).abs() < 1e-6);
        let back = parse_result_json(result.to_json().as_bytes()).expect("roundtrip parses");
        assert_eq!(result, back);
    }
});
