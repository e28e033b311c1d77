#![no_main]

use crisp_core::shape::{parse_basis_manifest, BasisManifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(basis) = parse_basis_manifest(data) {
        // Accepted manifests describe positive diameters and reserialize.
        assert!(basis.k() >= 1);
        assert!(basis.diameters().iter().all(|d| d.is_finite() && *d > 0.0));
        let json = BasisManifest::from_basis(&basis).to_json();
        let back = parse_basis_manifest(json.as_bytes()).expect("roundtrip parses");
        assert_eq!(back.k(), basis.k());
    }
});
