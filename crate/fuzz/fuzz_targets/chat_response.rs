#![no_main]

use critmem::gateway::parse_chat_response;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_chat_response(data);
});
