#![no_main]

use agri_fidelity::parse_matrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = parse_matrix(text) {
        // a parsed matrix always serializes to a stable, re-parseable form
        let first = m.to_csv_string();
        let again = parse_matrix(&first).expect("own output parses");
        assert_eq!(again.shape(), m.shape());
        assert_eq!(again.to_csv_string(), first);
    }
});
