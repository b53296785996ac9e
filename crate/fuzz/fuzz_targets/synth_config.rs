#![no_main]

use agri_fidelity::synthgen::SynthConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = SynthConfig::from_json_str(text);
    }
});
