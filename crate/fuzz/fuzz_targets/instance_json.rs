#![no_main]

use libfuzzer_sys::fuzz_target;
use weavematch_core::{scale_ranks, PreferenceInstance, DEFAULT_C_MIN};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(inst) = PreferenceInstance::from_json(text) else { return };
    // anything accepted must survive a round trip and rank scaling.
    let again = PreferenceInstance::from_json(&inst.to_json().unwrap()).unwrap();
    assert_eq!(again.prefs_a(), inst.prefs_a());
    assert_eq!(again.prefs_b(), inst.prefs_b());
    scale_ranks(&inst, DEFAULT_C_MIN).unwrap();
});
