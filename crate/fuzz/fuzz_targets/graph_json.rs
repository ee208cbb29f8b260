#![no_main]

use gcs_core::protocols::{pulse_count, GraphSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(g) = GraphSpec::from_json_str(text) {
        let _ = pulse_count(&g);
        let again = GraphSpec::from_json_str(&g.to_json()).expect("serialized graph parses");
        assert_eq!(again.vertices().len(), g.vertices().len());
    }
});
