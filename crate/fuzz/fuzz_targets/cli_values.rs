#![no_main]

use agri_fidelity::committee::ModelKind;
use agri_fidelity::masking::ImputationPolicy;
use agri_fidelity::pipeline::{parse_committee, FidelityMode};
use agri_fidelity::synthgen::Label;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(mode) = s.parse::<FidelityMode>() {
        assert_eq!(mode.to_string().parse::<FidelityMode>().unwrap(), mode);
    }
    if let Ok(policy) = s.parse::<ImputationPolicy>() {
        assert_eq!(
            policy.to_string().parse::<ImputationPolicy>().unwrap(),
            policy
        );
    }
    let _ = s.parse::<ModelKind>();
    let _ = s.parse::<Label>();
    let _ = parse_committee(s);
});
