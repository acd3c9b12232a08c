//! Replays the checked-in fuzz seeds through the same entry points and
//! invariants as the fuzz targets, so they run on stable too.

use std::fs;
use std::path::PathBuf;

use critmem::critique::parse_critique_reply;
use critmem::datasets::{parse_header, parse_records, records_to_jsonl};
use critmem::embed::VectorIndex;
use critmem::gateway::parse_chat_response;
use critmem::harness::RunConfig;
use critmem::json::extract_json_object;
use critmem::{normalize_label, Answer, LabelKind, LabelSpace};

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, fs::read_to_string(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn accepted(target: &str, ok: impl Fn(&str) -> bool) -> Vec<String> {
    seeds(target)
        .into_iter()
        .filter(|(_, text)| ok(text))
        .map(|(n, _)| n)
        .collect()
}

#[test]
fn dataset_records() {
    let ok = accepted("dataset_records", |text| match parse_records(text) {
        Ok(records) => {
            assert_eq!(parse_records(&records_to_jsonl(&records)).unwrap(), records);
            true
        }
        Err(_) => false,
    });
    assert_eq!(ok, ["blank_lines", "valid"]);
}

#[test]
fn dataset_header() {
    let ok = accepted("dataset_header", |text| {
        parse_header(text).and_then(|h| h.label_space()).is_ok()
    });
    assert_eq!(ok, ["binary", "multichoice"]);
}

#[test]
fn critique_reply() {
    let ok = accepted("critique_reply", |text| {
        if let Some(object) = extract_json_object(text) {
            assert!(text.contains(object));
        }
        parse_critique_reply(text).is_some()
    });
    assert_eq!(ok, ["answer_only", "fenced", "nested_braces", "plain"]);
}

#[test]
fn index_file() {
    let ok = accepted("index_file", |text| match VectorIndex::from_text(text) {
        Ok(index) => {
            assert_eq!(VectorIndex::from_text(&index.to_text()).unwrap(), index);
            true
        }
        Err(_) => false,
    });
    assert_eq!(ok, ["empty", "two_entries"]);
}

#[test]
fn chat_response() {
    let ok = accepted("chat_response", |text| parse_chat_response(text.as_bytes()).is_ok());
    assert_eq!(ok, ["ok"]);
}

#[test]
fn label_normalization() {
    let ok = accepted("normalize_label", |text| {
        let (labels, output) = text.split_once('\n').unwrap_or((text, ""));
        let labels: Vec<String> = labels.split('\t').map(str::to_owned).collect();
        let kind = if labels.len() == 2 {
            LabelKind::Binary
        } else {
            LabelKind::MultipleChoice
        };
        let space = LabelSpace::new(labels, kind).unwrap();
        match normalize_label(output, &space) {
            Answer::Label(label) => {
                assert!(space.labels().contains(&label));
                true
            }
            Answer::Unparseable => false,
        }
    });
    assert!(
        ok.contains(&"json_answer".to_owned()) && ok.contains(&"fenced".to_owned()),
        "{ok:?}"
    );
}

#[test]
fn run_config() {
    let ok = accepted("run_config", |text| {
        RunConfig::from_toml(text, std::path::Path::new("/nonexistent")).is_ok()
    });
    assert_eq!(ok, ["openai", "readme", "synthetic"]);
}
