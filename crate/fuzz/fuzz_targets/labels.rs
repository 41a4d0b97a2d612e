#![no_main]

use fragpes_core::formats::{parse_labels, write_labels};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(parsed) = parse_labels(text) {
        let again = parse_labels(&write_labels(&parsed)).expect("written artifact parses");
        assert_eq!(parsed, again);
    }
});
