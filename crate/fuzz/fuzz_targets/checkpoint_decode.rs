#![no_main]

use libfuzzer_sys::fuzz_target;
use weavematch_autodiff::Checkpoint;
use weavematch_nn::WeaveNet;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::<f32>::decode(data) {
        let again = Checkpoint::<f32>::decode(&ck.encode()).unwrap();
        assert_eq!(again.encode(), ck.encode());
        // a decodable file may still describe an impossible model.
        let _ = WeaveNet::<f32>::from_checkpoint(&ck);
    }
    let _ = Checkpoint::<f64>::decode(data);
});
