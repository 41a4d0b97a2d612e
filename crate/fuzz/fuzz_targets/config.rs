#![no_main]

use std::path::Path;

use fragpes_core::config::PipelineConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = PipelineConfig::parse(text, Path::new(".")) {
        let again = PipelineConfig::parse(&cfg.to_toml(), Path::new(".")).expect("written config parses");
        assert_eq!(cfg, again);
    }
});
