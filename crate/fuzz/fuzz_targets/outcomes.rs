#![no_main]

use attrflip_core::data::outcomes::{parse_outcomes, write_outcomes};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_outcomes(text) {
        let mut out = Vec::new();
        write_outcomes(&mut out, &records).expect("records serialize");
        let again = parse_outcomes(std::str::from_utf8(&out).unwrap()).expect("written records parse");
        assert_eq!(again.len(), records.len());
    }
});
