#![no_main]

use agri_fidelity::synthgen::Manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(manifest) = Manifest::from_json_str(text) {
        let again = Manifest::from_json_str(&manifest.to_json_string()).expect("own output loads");
        assert_eq!(again, manifest);
    }
});
