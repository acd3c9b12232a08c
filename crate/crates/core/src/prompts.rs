//! Prompt templates and inference-prompt assembly for the five strategies.
//!
//! Every template string lives here. Golden files under
//! `tests/fixtures/prompts/` lock the exact bytes; bump [`TEMPLATE_VERSION`]
//! whenever a template changes so cached artifacts are not reused.

use serde::{Deserialize, Serialize};

use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::gateway::ChatMessage;
use crate::memory::{compose_hybrid, EpisodicEntry, EpisodicStore, LabeledExamples, SemanticMemory};
use crate::model::{Critique, StrategyKind, TaskInstance};
use crate::suggestibility::ProbeCondition;

pub const TEMPLATE_VERSION: &str = "t1";

pub const FINAL_QUESTION_LEAD: &str = "Here is your final question, make sure to learn from your past mistakes!";
pub const SEMANTIC_ADVICE_LEAD: &str = "Here is some helpful advice that will help you make your decision:";
pub const HYBRID_ADVICE_LEAD: &str = "Also, here is some additional advice to guide your response:";
pub const RESPOND_ONLY_WITH_JSON: &str = "Respond only with JSON.";
pub const CORRECT_ANSWER_LEAD: &str = "The correct answer is ";

pub const SUMMARY_INSTRUCTION: &str = "Your job is to summarize a set of self-critiques made by some agent as they perform different instances of their task.  For each instance you will be shown the output of the agent, followed by the critiques made by the agent after they were told the correct answer.  Distill those critiques into a helpful summary of advice to the agent, paying particular attention to instances where the agent outputs an incorrect answer. Produce your output in a form that can be used directly as instructions to the agent. You should summarize the key points in these critiques.  Be precise and concise.  Do not repeat yourself.";

pub const MERGE_INSTRUCTION: &str = "Your job is to merge several summaries of advice into one. Each summary below was distilled from the self-critiques an agent made on a different subset of instances of the same task. Combine them into a single helpful summary of advice to the agent that can be used directly as instructions. Keep every distinct point, drop duplicates, and be precise and concise.  Do not repeat yourself.";

pub const REPAIR_PROMPT: &str = "Your previous reply could not be parsed. Reply again with a single JSON object with the fields correct_answer, local_reason and global_reason. Respond only with JSON.";

/// Lead for a critique body inside a probe prompt.
pub const PROBE_CRITIQUE_LEAD: &str = "Critique:";

/// The correction turn of the critique-generation transcript.
pub fn critique_request(asserted_label: &str) -> String {
    format!(
        "{CORRECT_ANSWER_LEAD}{asserted_label}. Explain why this is the correct answer, following the following JSON format:\n\
         {{\n    correct_answer: correct_answer,\n    local_reason: Specific reasons why this answer is correct in this particular case.,\n    global_reason: General reasons why this answer is correct that can be applied to other questions.\n}}.\n\
         {RESPOND_ONLY_WITH_JSON}"
    )
}

/// Placeholder used when the performance agent returned nothing.
pub const EMPTY_RESPONSE: &str = "(no response)";

pub(crate) fn non_empty(text: &str) -> &str {
    if text.trim().is_empty() {
        EMPTY_RESPONSE
    } else {
        text
    }
}

/// Question, initial prediction, correction turn.
pub fn critique_transcript(question: &str, pa_initial: &str, asserted_label: &str) -> Vec<ChatMessage> {
    vec![
        ChatMessage::user(question),
        ChatMessage::assistant(non_empty(pa_initial)),
        ChatMessage::user(critique_request(asserted_label)),
    ]
}

#[derive(Serialize)]
struct CritiqueBody<'a> {
    correct_answer: &'a str,
    local_reason: &'a str,
    global_reason: &'a str,
}

/// The validated critique as the JSON object the critic was asked for.
pub fn render_critique(critique: &Critique) -> String {
    serde_json::to_string(&CritiqueBody {
        correct_answer: &critique.assertion,
        local_reason: &critique.rationale,
        global_reason: &critique.reflection,
    })
    .expect("string fields always serialize")
}

pub fn final_question(question: &str) -> String {
    format!("{FINAL_QUESTION_LEAD} {question}")
}

pub fn semantic_prompt(question: &str, advice: &str) -> String {
    format!("{question}\n{SEMANTIC_ADVICE_LEAD} {advice}")
}

/// One `{Question} {Answer} {Critique}` block of the summarization prompt.
pub fn summary_item(entry: &EpisodicEntry) -> String {
    format!(
        "Question: {}\nAnswer: {}\nCritique: {}",
        entry.instance.question,
        non_empty(&entry.pa_initial),
        render_critique(&entry.critique)
    )
}

pub fn summary_prompt(entries: &[EpisodicEntry]) -> String {
    let mut out = String::from(SUMMARY_INSTRUCTION);
    for entry in entries {
        out.push_str("\n\n");
        out.push_str(&summary_item(entry));
    }
    out
}

pub fn merge_prompt(summaries: &[String]) -> String {
    let mut out = String::from(MERGE_INSTRUCTION);
    for (i, s) in summaries.iter().enumerate() {
        out.push_str(&format!("\n\nSummary {}:\n{}", i + 1, s));
    }
    out
}

/// What produced a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Strategy(StrategyKind),
    Probe(ProbeCondition),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub messages: Vec<ChatMessage>,
    pub kind: PromptKind,
    pub retrieved_ids: Vec<String>,
}

/// Memory artifacts available to [`assemble`].
#[derive(Clone, Copy)]
pub struct MemoryView<'a> {
    pub episodic: Option<&'a EpisodicStore>,
    pub labeled: Option<&'a LabeledExamples>,
    pub semantic: Option<&'a SemanticMemory>,
    pub k: usize,
}

impl Default for MemoryView<'_> {
    fn default() -> Self {
        Self {
            episodic: None,
            labeled: None,
            semantic: None,
            k: 5,
        }
    }
}

fn missing(strategy: StrategyKind, what: &str) -> Error {
    Error::Config(format!("strategy {strategy} requires {what}"))
}

/// Builds the performance-agent prompt for `instance` under `strategy`.
///
/// `query` is the embedding of `instance.question`; it is required by the
/// retrieval strategies and ignored otherwise.
pub fn assemble(
    strategy: StrategyKind,
    instance: &TaskInstance,
    query: Option<&Embedding>,
    view: MemoryView<'_>,
) -> Result<AssembledPrompt> {
    if view.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut messages = Vec::new();
    let mut retrieved_ids = Vec::new();
    match strategy {
        StrategyKind::ZeroShot => messages.push(ChatMessage::user(&instance.question)),
        StrategyKind::EpLabel => {
            let labeled = view.labeled.ok_or_else(|| missing(strategy, "labeled examples"))?;
            let query = query.ok_or_else(|| missing(strategy, "a query embedding"))?;
            for example in labeled.retrieve(query, view.k)? {
                retrieved_ids.push(example.id.clone());
                messages.push(ChatMessage::user(&example.question));
                messages.push(ChatMessage::assistant(&example.gold));
            }
            messages.push(ChatMessage::user(final_question(&instance.question)));
        }
        StrategyKind::SemCrit => {
            let semantic = view.semantic.ok_or_else(|| missing(strategy, "semantic memory"))?;
            messages.push(ChatMessage::user(semantic_prompt(&instance.question, &semantic.advice)));
        }
        StrategyKind::EpCrit | StrategyKind::EpSemCrit => {
            let store = view.episodic.ok_or_else(|| missing(strategy, "an episodic store"))?;
            let query = query.ok_or_else(|| missing(strategy, "a query embedding"))?;
            for entry in store.retrieve(query, view.k)? {
                retrieved_ids.push(entry.instance.id.clone());
                messages.extend(critique_transcript(
                    &entry.instance.question,
                    &entry.pa_initial,
                    &entry.instance.gold,
                ));
                messages.push(ChatMessage::assistant(render_critique(&entry.critique)));
            }
            let last = final_question(&instance.question);
            let last = if strategy == StrategyKind::EpSemCrit {
                let semantic = view.semantic.ok_or_else(|| missing(strategy, "semantic memory"))?;
                compose_hybrid(&last, semantic)?
            } else {
                last
            };
            messages.push(ChatMessage::user(last));
        }
    }
    Ok(AssembledPrompt {
        messages,
        kind: PromptKind::Strategy(strategy),
        retrieved_ids,
    })
}

/// Plain-text rendering for audit output.
pub fn render_transcript(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        let role = match m.role {
            crate::gateway::Role::System => "System",
            crate::gateway::Role::User => "User",
            crate::gateway::Role::Assistant => "Agent",
        };
        out.push_str(&format!("{role}: {}\n\n", m.content));
    }
    out
}
