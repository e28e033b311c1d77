#![no_main]

use crisp_core::io::{cloud_from_csv, cloud_to_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = cloud_from_csv(data) {
        // All accepted coordinates are finite and survive a write/parse
        // roundtrip exactly.
        assert!(cloud.iter().all(|p| p.iter().all(|v| v.is_finite())));
        let back = cloud_from_csv(cloud_to_csv(&cloud).as_bytes()).expect("roundtrip parses");
        assert_eq!(cloud, back);
    }
});
