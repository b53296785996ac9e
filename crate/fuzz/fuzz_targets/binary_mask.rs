#![no_main]

use agri_fidelity::{parse_matrix, BinaryMask};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(m) = parse_matrix(text) else {
        return;
    };
    if let Ok(mask) = BinaryMask::from_matrix(&m) {
        assert_eq!(mask.to_matrix(), m);
        assert_eq!(
            mask.active_count(),
            mask.column_counts().iter().sum::<usize>()
        );
    }
});
