#![no_main]

use critmem::{normalize_label, Answer, LabelKind, LabelSpace};
use libfuzzer_sys::fuzz_target;

// First line: tab-separated labels. Remainder: the model output.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (labels, output) = text.split_once('\n').unwrap_or((text, ""));
    let labels: Vec<String> = labels.split('\t').map(str::to_owned).collect();
    let kind = if labels.len() == 2 {
        LabelKind::Binary
    } else {
        LabelKind::MultipleChoice
    };
    let Ok(space) = LabelSpace::new(labels, kind) else {
        return;
    };
    if let Answer::Label(label) = normalize_label(output, &space) {
        assert!(space.labels().contains(&label));
    }
});
