#![no_main]

use critmem::critique::parse_critique_reply;
use critmem::json::extract_json_object;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Some(object) = extract_json_object(text) {
        assert!(text.contains(object));
    }
    let _ = parse_critique_reply(text);
});
