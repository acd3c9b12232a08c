//! Ready-made scripted agents for offline runs.
//!
//! Performance agents:
//! - [`gold_oracle`] answers the gold label of whichever known question the
//!   final user turn contains.
//! - [`fixed`] ignores the prompt entirely.
//! - [`assertion_follower`] answers whatever label the final user turn
//!   asserts, through a critique or a bare "The correct answer is" sentence.
//! - [`critique_follower`] answers the majority assertion among critiques
//!   shown as earlier agent turns.
//! - [`probabilistic_follower`] follows assertions for a seeded fraction of
//!   questions.
//!
//! Critics: [`label_echo_critic`], [`adversarial_critic`], [`prose_critic`].

use std::collections::HashMap;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::scripted::last_user;
use super::{ChatMessage, Matcher, Reply, Role, Rule, ScriptedBackend};
use crate::json::{extract_json_object, json_objects};
use crate::model::{LabelSpace, TaskInstance};
use crate::prompts::{CORRECT_ANSWER_LEAD, MERGE_INSTRUCTION, PROBE_CRITIQUE_LEAD, SUMMARY_INSTRUCTION};

/// Always replies `reply`.
pub fn fixed(model_id: &str, reply: &str) -> ScriptedBackend {
    ScriptedBackend::new(model_id, vec![Rule::new(Matcher::Default, reply)])
}

/// Replies with the gold label of the longest known question contained in
/// the last user message.
pub fn gold_oracle<'a>(model_id: &str, instances: impl IntoIterator<Item = &'a TaskInstance>) -> ScriptedBackend {
    let mut table: Vec<(String, String)> = instances
        .into_iter()
        .map(|i| (i.question.clone(), i.gold.clone()))
        .collect();
    table.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
    let table = Arc::new(table);
    let lookup = {
        let table = table.clone();
        move |messages: &[ChatMessage]| -> Option<String> {
            let last = last_user(messages)?;
            table
                .iter()
                .find(|(q, _)| last.contains(q.as_str()))
                .map(|(_, g)| g.clone())
        }
    };
    let matcher_lookup = lookup.clone();
    ScriptedBackend::new(
        model_id,
        vec![Rule::new(
            Matcher::predicate(move |m| matcher_lookup(m).is_some()),
            Reply::with(move |m| lookup(m).expect("matched")),
        )],
    )
}

/// Label asserted by the last user message: the last critique
/// `correct_answer` if any, else the last "The correct answer is X." sentence.
pub fn asserted_in(text: &str) -> Option<String> {
    if let Some(label) = json_objects(text).into_iter().rev().find_map(|o| correct_answer(&o)) {
        return Some(label);
    }
    let start = text.rfind(CORRECT_ANSWER_LEAD)? + CORRECT_ANSWER_LEAD.len();
    let rest = text[start..].lines().next().unwrap_or("");
    let label = match rest.find(". ") {
        Some(end) => &rest[..end],
        None => rest.trim_end().trim_end_matches('.'),
    };
    let label = label.trim();
    (!label.is_empty()).then(|| label.to_string())
}

fn correct_answer(object: &serde_json::Value) -> Option<String> {
    match object.get("correct_answer")? {
        serde_json::Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

/// Follows the assertion in the final user turn, else `fallback`.
pub fn assertion_follower(model_id: &str, fallback: &str) -> ScriptedBackend {
    let fallback = fallback.to_string();
    ScriptedBackend::new(
        model_id,
        vec![Rule::new(
            Matcher::Default,
            Reply::with(move |m| last_user(m).and_then(asserted_in).unwrap_or_else(|| fallback.clone())),
        )],
    )
}

/// Majority `correct_answer` over critiques in agent turns; ties go to the
/// label seen first. Falls back to `fallback` when no critique is present.
pub fn critique_follower(model_id: &str, fallback: &str) -> ScriptedBackend {
    let fallback = fallback.to_string();
    ScriptedBackend::new(
        model_id,
        vec![Rule::new(
            Matcher::Default,
            Reply::with(move |messages| majority_critique(messages).unwrap_or_else(|| fallback.clone())),
        )],
    )
}

fn majority_critique(messages: &[ChatMessage]) -> Option<String> {
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for m in messages.iter().filter(|m| m.role == Role::Assistant) {
        let Some(label) = extract_json_object(&m.content)
            .and_then(|s| serde_json::from_str::<serde_json::Value>(s).ok())
            .and_then(|v| correct_answer(&v))
        else {
            continue;
        };
        if !counts.contains_key(&label) {
            order.push(label.clone());
        }
        *counts.entry(label).or_default() += 1;
    }
    let best = order.iter().map(|l| counts[l]).max()?;
    order.into_iter().find(|l| counts[l] == best)
}

/// The question part of a probe or zero-shot prompt: everything before the
/// first assertion sentence or critique lead.
pub fn question_part(text: &str) -> &str {
    let markers = [format!("\n{CORRECT_ANSWER_LEAD}"), format!("\n{PROBE_CRITIQUE_LEAD}")];
    let end = markers
        .iter()
        .filter_map(|m| text.find(m.as_str()))
        .min()
        .unwrap_or(text.len());
    &text[..end]
}

/// Uniform value in [0, 1) derived from `(seed, text)`.
pub fn unit_hash(seed: u64, text: &str) -> f64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let bits = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

/// Follows the asserted label with probability `p`, decided per question
/// (the decision depends only on the question text and `seed`, so both arms
/// of a probe see the same decision). Otherwise answers `fallback`.
pub fn probabilistic_follower(model_id: &str, p: f64, seed: u64, fallback: &str) -> ScriptedBackend {
    let fallback = fallback.to_string();
    ScriptedBackend::new(
        model_id,
        vec![Rule::new(
            Matcher::Default,
            Reply::with(move |messages| {
                let Some(last) = last_user(messages) else {
                    return fallback.clone();
                };
                if unit_hash(seed, question_part(last)) < p {
                    asserted_in(last).unwrap_or_else(|| fallback.clone())
                } else {
                    fallback.clone()
                }
            }),
        )],
    )
}

fn summary_rules(advice: &str) -> Vec<Rule> {
    vec![
        Rule::new(Matcher::LastUserContains(SUMMARY_INSTRUCTION.to_string()), advice),
        Rule::new(Matcher::LastUserContains(MERGE_INSTRUCTION.to_string()), advice),
    ]
}

/// The label the latest correction turn asserts.
fn requested_label(messages: &[ChatMessage]) -> Option<String> {
    messages
        .iter()
        .rev()
        .filter(|m| m.role == Role::User)
        .find(|m| m.content.starts_with(CORRECT_ANSWER_LEAD))
        .and_then(|m| asserted_in(&m.content))
}

fn critique_json(label: &str) -> String {
    serde_json::json!({
        "correct_answer": label,
        "local_reason": format!("The cues in this particular question point to {label}."),
        "global_reason": format!("Questions that share these cues should be answered {label}."),
    })
    .to_string()
}

/// Critic that restates the asserted label and answers summarization
/// requests with `advice`.
pub fn label_echo_critic(model_id: &str, advice: &str) -> ScriptedBackend {
    let mut rules = summary_rules(advice);
    rules.push(Rule::new(
        Matcher::predicate(|m| requested_label(m).is_some()),
        Reply::with(|m| critique_json(&requested_label(m).expect("matched"))),
    ));
    ScriptedBackend::new(model_id, rules)
}

/// Critic that always asserts a label other than the one it was given:
/// the next label in label-space order.
pub fn adversarial_critic(model_id: &str, space: &LabelSpace, advice: &str) -> ScriptedBackend {
    let labels = space.labels().to_vec();
    let mut rules = summary_rules(advice);
    rules.push(Rule::new(
        Matcher::predicate(|m| requested_label(m).is_some()),
        Reply::with(move |m| {
            let asserted = requested_label(m).expect("matched");
            let pos = labels
                .iter()
                .position(|l| crate::model::fold(l) == crate::model::fold(&asserted))
                .unwrap_or(0);
            critique_json(&labels[(pos + 1) % labels.len()])
        }),
    ));
    ScriptedBackend::new(model_id, rules)
}

/// Critic that never produces JSON.
pub fn prose_critic(model_id: &str, advice: &str) -> ScriptedBackend {
    let mut rules = summary_rules(advice);
    rules.push(Rule::new(
        Matcher::Default,
        "I think the agent should reconsider this case carefully.",
    ));
    ScriptedBackend::new(model_id, rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatBackend, ChatRequest};

    fn reply(b: &ScriptedBackend, messages: Vec<ChatMessage>) -> String {
        b.send(&ChatRequest::new("m", messages)).unwrap().text
    }

    #[test]
    fn follower_reads_bare_assertion() {
        let pa = assertion_follower("pa", "Yes");
        assert_eq!(
            reply(&pa, vec![ChatMessage::user("Is it? The correct answer is No.")]),
            "No"
        );
        assert_eq!(reply(&pa, vec![ChatMessage::user("Is it?")]), "Yes");
    }

    #[test]
    fn follower_prefers_critique_json() {
        let text = "Q?\nThe correct answer is No.\nCritique: {\"correct_answer\":\"Maybe\",\"local_reason\":\"r\"}";
        assert_eq!(asserted_in(text).as_deref(), Some("Maybe"));
    }

    #[test]
    fn assertion_parsing_stops_at_sentence_end() {
        let req = crate::prompts::critique_request("No");
        assert_eq!(asserted_in(&req).as_deref(), Some("No"));
    }

    #[test]
    fn oracle_uses_longest_question() {
        let a = TaskInstance::new("1", "Is water wet?", "Yes");
        let b = TaskInstance::new("2", "Is water wet? Really?", "No");
        let pa = gold_oracle("pa", [&a, &b]);
        assert_eq!(reply(&pa, vec![ChatMessage::user("Is water wet? Really?")]), "No");
        assert_eq!(reply(&pa, vec![ChatMessage::user("Is water wet?")]), "Yes");
        assert!(pa
            .send(&ChatRequest::new("m", vec![ChatMessage::user("unknown")]))
            .is_err());
    }

    #[test]
    fn critique_majority_with_first_seen_tiebreak() {
        let msgs = vec![
            ChatMessage::assistant(critique_json("No")),
            ChatMessage::assistant(critique_json("Yes")),
            ChatMessage::assistant("plain"),
            ChatMessage::user("final"),
        ];
        assert_eq!(majority_critique(&msgs).as_deref(), Some("No"));
        let pa = critique_follower("pa", "Yes");
        assert_eq!(reply(&pa, vec![ChatMessage::user("q")]), "Yes");
    }

    #[test]
    fn probe_question_part_is_arm_independent() {
        let a = "Q1?\nThe correct answer is Yes.";
        let b = "Q1?\nCritique: {}";
        assert_eq!(question_part(a), "Q1?");
        assert_eq!(question_part(b), "Q1?");
        assert!((0.0..1.0).contains(&unit_hash(3, "x")));
    }

    #[test]
    fn adversarial_critic_asserts_other_label() {
        let space = LabelSpace::binary("Yes", "No").unwrap();
        let critic = adversarial_critic("c", &space, "ADVICE");
        let out = reply(&critic, crate::prompts::critique_transcript("q", "Yes", "No"));
        assert!(out.contains("\"correct_answer\":\"Yes\""), "{out}");
    }
}
