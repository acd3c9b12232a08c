#![no_main]

use critmem::embed::VectorIndex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(index) = VectorIndex::from_text(text) {
        let again = VectorIndex::from_text(&index.to_text()).expect("serialized index reloads");
        assert_eq!(again, index);
    }
});
