#![no_main]

use libfuzzer_sys::fuzz_target;
use weavematch_core::Histogram;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(h) = Histogram::from_json(text) else { return };
    let again = Histogram::from_json(&h.to_json().unwrap()).unwrap();
    assert_eq!(again, h);
});
