//! Locating JSON objects inside free-form model output.

/// Byte ranges of balanced top-level `{...}` spans, string-literal aware.
fn balanced_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' if depth > 0 => in_string = true,
            b'{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            b'}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    spans.push((start, i + 1));
                }
            }
            _ => {}
        }
    }
    spans
}

/// The first balanced top-level object that parses as JSON.
pub fn extract_json_object(text: &str) -> Option<&str> {
    balanced_spans(text)
        .into_iter()
        .map(|(s, e)| &text[s..e])
        .find(|candidate| serde_json::from_str::<serde_json::Value>(candidate).is_ok_and(|v| v.is_object()))
}

/// Every balanced top-level object that parses, in order.
pub fn json_objects(text: &str) -> Vec<serde_json::Value> {
    balanced_spans(text)
        .into_iter()
        .filter_map(|(s, e)| serde_json::from_str::<serde_json::Value>(&text[s..e]).ok())
        .filter(serde_json::Value::is_object)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn finds_object_wrapped_in_prose() {
        let text = "Sure! Here it is:\n```json\n{\"a\": \"x}\", \"b\": {\"c\": 1}}\n```\nDone {not json}";
        assert_eq!(extract_json_object(text), Some("{\"a\": \"x}\", \"b\": {\"c\": 1}}"));
        assert_eq!(json_objects(text).len(), 1);
    }

    #[test]
    fn skips_unparseable_braces() {
        assert_eq!(extract_json_object("{oops} then {\"k\":1}"), Some("{\"k\":1}"));
        assert_eq!(extract_json_object("no braces"), None);
        assert_eq!(extract_json_object("{\"unterminated\": "), None);
    }

    #[test]
    fn escaped_quotes_inside_strings() {
        let text = r#"{"a": "say \"}\" now"}"#;
        assert_eq!(extract_json_object(text), Some(text));
    }

    proptest! {
        #[test]
        fn embedded_object_is_recovered(prefix in "[^{}\"]{0,30}", suffix in "[^{}\"]{0,30}", v in "[a-z }{]{0,10}") {
            let object = serde_json::json!({"correct_answer": v}).to_string();
            let text = format!("{prefix}{object}{suffix}");
            prop_assert_eq!(extract_json_object(&text), Some(object.as_str()));
        }
    }
}
