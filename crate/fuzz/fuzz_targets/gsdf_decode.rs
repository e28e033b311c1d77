#![no_main]

use crisp_core::sdf::{GridSdf, Point3, SdfField};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = GridSdf::decode(data) {
        // The format is canonical: re-encoding reproduces the input bytes.
        assert_eq!(grid.encode(), data);
        // Accepted grids must evaluate to finite values everywhere.
        let b = grid.bounds();
        for p in [
            b.min,
            b.max,
            (b.min + b.max) * 0.5,
            b.max + Point3::new(1.0, 2.0, 3.0),
        ] {
            assert!(grid.eval(p).is_finite());
            assert!(grid.gradient(p).iter().all(|v| v.is_finite()));
        }
    }
});
