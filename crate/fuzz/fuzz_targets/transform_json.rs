#![no_main]

use gcs_core::SymplecticTransform;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = SymplecticTransform::from_json_str(text) {
        assert!(s.residual() <= 1e-10);
    }
});
