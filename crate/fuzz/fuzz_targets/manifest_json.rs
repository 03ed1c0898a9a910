#![no_main]

use libfuzzer_sys::fuzz_target;
use weavematch_core::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(m) = Manifest::from_json(text) else { return };
    // instances are not regenerated: a valid manifest may list millions.
    let again = Manifest::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(again, m);
});
