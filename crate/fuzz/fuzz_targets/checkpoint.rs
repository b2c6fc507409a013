#![no_main]

use attrflip_core::data::checkpoint::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode(data) {
        let bytes = encode(&model);
        assert_eq!(encode(&decode(&bytes).expect("encoded checkpoint decodes")), bytes);
    }
});
