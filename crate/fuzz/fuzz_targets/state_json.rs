#![no_main]

use gcs_core::state::validate_state;
use gcs_core::GaussianState;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(state) = GaussianState::from_json_str(text) {
        // parsed states round-trip and can always be validated
        let _ = validate_state(&state);
        let again = GaussianState::from_json_str(&state.to_json()).expect("serialized state parses");
        assert_eq!(again.n_modes(), state.n_modes());
    }
});
