#![no_main]

use attrflip_core::data::pnm::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(image) = decode(data) {
        assert_eq!(decode(&encode(&image)).expect("encoded image decodes"), image);
    }
});
