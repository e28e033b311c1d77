#![no_main]

use crisp_core::io::parse_scene_document;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(doc) = parse_scene_document(data) {
        // Validation already ran; reserialization must stay parseable and
        // equal, and cloud paths must stay inside the scene directory.
        for obj in &doc.objects {
            for view in &obj.views {
                assert!(!view.cloud_file.contains('/') && !view.cloud_file.contains(".."));
            }
        }
        let json = serde_json::to_string(&doc).expect("serializes");
        let back = parse_scene_document(json.as_bytes()).expect("roundtrip parses");
        assert_eq!(doc, back);
    }
});
