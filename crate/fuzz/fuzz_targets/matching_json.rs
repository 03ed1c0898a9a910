#![no_main]

use libfuzzer_sys::fuzz_target;
use weavematch_core::Matching;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(m) = Matching::from_json(text) else { return };
    let again = Matching::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(again, m);
    // partners on side B must mirror side A.
    for (i, j) in m.pairs() {
        assert_eq!(m.partners_b()[j], Some(i));
    }
});
