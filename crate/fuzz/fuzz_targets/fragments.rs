#![no_main]

use fragpes_core::formats::{parse_fragments, write_fragments};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(parsed) = parse_fragments(text) {
        let again = parse_fragments(&write_fragments(&parsed)).expect("written artifact parses");
        assert_eq!(parsed, again);
    }
});
