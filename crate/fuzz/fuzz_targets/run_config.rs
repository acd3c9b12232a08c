#![no_main]

use critmem::harness::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = RunConfig::from_toml(text, std::path::Path::new("/nonexistent"));
});
