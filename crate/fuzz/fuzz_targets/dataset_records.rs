#![no_main]

use critmem::datasets::{parse_records, records_to_jsonl};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_records(text) {
        let again = parse_records(&records_to_jsonl(&records)).expect("serialized records reparse");
        assert_eq!(again, records);
    }
});
