#![no_main]

use critmem::datasets::parse_header;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(header) = parse_header(text) {
        let _ = header.label_space();
    }
});
