#![no_main]

use agri_fidelity::committee::Model;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = Model::from_json_str(text) {
        let again = Model::from_json_str(&model.to_json_string()).expect("own output loads");
        assert_eq!(again, model);
    }
});
