#![no_main]

use attrflip_core::data::labels::{format_attribute_labels, parse_attribute_labels};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = parse_attribute_labels(text) {
        let again = parse_attribute_labels(&format_attribute_labels(&table)).expect("formatted table parses");
        assert_eq!(again, table);
    }
});
