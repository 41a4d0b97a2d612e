#![no_main]

use fragpes_core::formats::{parse_model, write_model};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((header, array)) = parse_model(text) {
        let again = parse_model(&write_model(&array, &header)).expect("written model parses");
        assert_eq!((header, array.clone()), again);
        let _ = array.predict_features(&vec![1.0; array.features]);
    }
});
