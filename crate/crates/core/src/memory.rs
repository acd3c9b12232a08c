//! Episodic and semantic memory.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critique::CritiqueRecord;
use crate::embed::{Embedding, Neighbor, VectorIndex};
use crate::error::{Error, Result, ResultExt};
use crate::gateway::{count_tokens, ChatMessage, Gateway, Phase, Usage};
use crate::model::{fold, Critique, TaskInstance};
use crate::prompts::{merge_prompt, summary_prompt, HYBRID_ADVICE_LEAD};

/// A training experience: the instance, what the agent first said, and the
/// critique it received.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicEntry {
    pub instance: TaskInstance,
    pub pa_initial: String,
    pub critique: Critique,
    pub embedding: Embedding,
}

fn build_index<'a>(ids_and_vectors: impl Iterator<Item = (&'a str, &'a Embedding)>) -> Result<VectorIndex> {
    let mut iter = ids_and_vectors.peekable();
    let dim = iter
        .peek()
        .map(|(_, e)| e.dim())
        .ok_or_else(|| Error::Precondition("cannot index an empty memory".into()))?;
    VectorIndex::from_entries(dim, iter.map(|(id, e)| (id.to_string(), e.clone())))
}

fn positions<'a>(ids: impl Iterator<Item = &'a str>) -> HashMap<String, usize> {
    ids.enumerate().map(|(i, id)| (id.to_string(), i)).collect()
}

fn resolve<'s, T>(
    hits: Vec<Neighbor>,
    positions: &HashMap<String, usize>,
    items: &'s [T],
) -> Result<Vec<(&'s T, f64)>> {
    hits.into_iter()
        .map(|n| {
            positions
                .get(&n.id)
                .map(|&p| (&items[p], n.similarity))
                .ok_or_else(|| Error::Integrity(format!("index id {:?} has no memory entry", n.id)))
        })
        .collect()
}

/// Frozen episodic store with its retrieval index.
#[derive(Debug, Clone)]
pub struct EpisodicStore {
    entries: Vec<EpisodicEntry>,
    index: VectorIndex,
    positions: HashMap<String, usize>,
}

impl EpisodicStore {
    /// Indexes `entries` by their question embeddings. Every critique must
    /// assert its instance's gold label.
    pub fn new(entries: Vec<EpisodicEntry>) -> Result<Self> {
        let index = build_index(entries.iter().map(|e| (e.instance.id.as_str(), &e.embedding)))?;
        Self::from_parts(entries, index)
    }

    /// Pairs entries with a prebuilt index; ids must match one-to-one.
    pub fn from_parts(entries: Vec<EpisodicEntry>, index: VectorIndex) -> Result<Self> {
        for e in &entries {
            if fold(&e.critique.assertion) != fold(&e.instance.gold) {
                return Err(Error::Integrity(format!(
                    "entry {} asserts {:?} but its gold label is {:?}",
                    e.instance.id, e.critique.assertion, e.instance.gold
                )));
            }
        }
        let positions = positions(entries.iter().map(|e| e.instance.id.as_str()));
        if positions.len() != entries.len() {
            return Err(Error::Integrity("duplicate instance ids in episodic store".into()));
        }
        if index.len() != entries.len() || index.ids().any(|id| !positions.contains_key(id)) {
            return Err(Error::Integrity("index ids do not match episodic store ids".into()));
        }
        let mut index = index;
        index.freeze();
        Ok(Self {
            entries,
            index,
            positions,
        })
    }

    /// Rebuilds entries from persisted critique records, the instances they
    /// refer to, and a frozen question index.
    pub fn from_records(records: &[CritiqueRecord], instances: &[TaskInstance], index: VectorIndex) -> Result<Self> {
        let by_id: HashMap<&str, &TaskInstance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
        let vectors: HashMap<&str, &Embedding> = index.entries().iter().map(|(id, e)| (id.as_str(), e)).collect();
        let entries = records
            .iter()
            .map(|r| {
                let instance = by_id.get(r.instance_id.as_str()).ok_or_else(|| {
                    Error::Integrity(format!("critique record for unknown instance {:?}", r.instance_id))
                })?;
                let embedding = vectors
                    .get(r.instance_id.as_str())
                    .ok_or_else(|| Error::Integrity(format!("no embedding for {:?}", r.instance_id)))?;
                Ok(EpisodicEntry {
                    instance: (*instance).clone(),
                    pa_initial: r.pa_initial.clone(),
                    critique: r.to_critique(),
                    embedding: (*embedding).clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(entries, index)
    }

    pub fn entries(&self) -> &[EpisodicEntry] {
        &self.entries
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Top-`k` entries by question similarity, most similar first.
    pub fn retrieve(&self, query: &Embedding, k: usize) -> Result<Vec<&EpisodicEntry>> {
        Ok(self.retrieve_scored(query, k)?.into_iter().map(|(e, _)| e).collect())
    }

    pub fn retrieve_scored(&self, query: &Embedding, k: usize) -> Result<Vec<(&EpisodicEntry, f64)>> {
        resolve(self.index.top_k(query, k)?, &self.positions, &self.entries)
    }
}

/// (question, gold) pairs with a question index, for label-only few-shot
/// prompting.
#[derive(Debug, Clone)]
pub struct LabeledExamples {
    instances: Vec<TaskInstance>,
    index: VectorIndex,
    positions: HashMap<String, usize>,
}

impl LabeledExamples {
    /// `index` must cover exactly the ids of `instances`.
    pub fn new(instances: Vec<TaskInstance>, index: VectorIndex) -> Result<Self> {
        let positions = positions(instances.iter().map(|i| i.id.as_str()));
        if index.len() != instances.len() || index.ids().any(|id| !positions.contains_key(id)) {
            return Err(Error::Integrity("index ids do not match labeled example ids".into()));
        }
        let mut index = index;
        index.freeze();
        Ok(Self {
            instances,
            index,
            positions,
        })
    }

    pub fn from_embeddings(instances: Vec<TaskInstance>, embeddings: &[Embedding]) -> Result<Self> {
        if instances.len() != embeddings.len() {
            return Err(Error::Precondition("one embedding per labeled example required".into()));
        }
        let index = build_index(instances.iter().map(|i| i.id.as_str()).zip(embeddings))?;
        Self::new(instances, index)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn retrieve(&self, query: &Embedding, k: usize) -> Result<Vec<&TaskInstance>> {
        Ok(resolve(self.index.top_k(query, k)?, &self.positions, &self.instances)?
            .into_iter()
            .map(|(i, _)| i)
            .collect())
    }
}

/// Task-level advice distilled from all critiques.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticMemory {
    pub advice: String,
    pub source_entry_ids: Vec<String>,
    pub built_from_fraction: f64,
    pub chunk_count: usize,
    /// Tokens spent building this memory.
    #[serde(default)]
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryConfig {
    /// Largest prompt, in whitespace tokens, sent as a single call.
    pub token_budget: u64,
    /// Entries per leaf chunk when the corpus exceeds the budget.
    pub chunk_size: usize,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self {
            token_budget: 60_000,
            chunk_size: 40,
        }
    }
}

/// Number of leaf summarization calls for a corpus of `entries`.
pub fn chunk_plan(entries: usize, config: &SummaryConfig, corpus_tokens: u64) -> usize {
    if corpus_tokens <= config.token_budget {
        1
    } else {
        entries.div_ceil(config.chunk_size.max(1))
    }
}

fn advice_call(critic: &Gateway, prompt: String) -> Result<(String, Usage)> {
    let out = critic.complete(vec![ChatMessage::user(prompt)], Phase::Training)?;
    if out.text.trim().is_empty() {
        return Err(Error::Protocol {
            request_id: 0,
            message: "critic returned empty advice".into(),
        });
    }
    Ok((out.text.clone(), out.usage()))
}

/// Distills `entries` into semantic memory.
///
/// A corpus within `token_budget` is summarized in one call. Otherwise
/// entries are split into `chunk_size` leaves summarized independently,
/// and the leaf summaries are merged (recursively if the merge itself
/// would exceed the budget).
pub fn summarize(
    entries: &[EpisodicEntry],
    critic: &Gateway,
    config: &SummaryConfig,
    fraction: f64,
) -> Result<SemanticMemory> {
    if entries.is_empty() {
        return Err(Error::Precondition("summarize needs at least one entry".into()));
    }
    if config.chunk_size == 0 {
        return Err(Error::Config("summary chunk_size must be positive".into()));
    }
    let full = summary_prompt(entries);
    let leaves = chunk_plan(entries.len(), config, count_tokens(&full));
    let (advice, usage) = if leaves == 1 {
        advice_call(critic, full).context_with(|| "semantic summary".to_string())?
    } else {
        let partial: Vec<(String, Usage)> = entries
            .par_chunks(config.chunk_size)
            .map(|chunk| advice_call(critic, summary_prompt(chunk)))
            .collect::<Result<_>>()
            .context_with(|| "semantic leaf summary".to_string())?;
        let mut usage: Usage = partial.iter().map(|(_, u)| *u).sum();
        let (advice, merge_usage) = merge(critic, partial.into_iter().map(|(s, _)| s).collect(), config)?;
        usage += merge_usage;
        (advice, usage)
    };
    Ok(SemanticMemory {
        advice,
        source_entry_ids: entries.iter().map(|e| e.instance.id.clone()).collect(),
        built_from_fraction: fraction,
        chunk_count: leaves,
        usage,
    })
}

fn merge(critic: &Gateway, summaries: Vec<String>, config: &SummaryConfig) -> Result<(String, Usage)> {
    let prompt = merge_prompt(&summaries);
    if count_tokens(&prompt) <= config.token_budget || summaries.len() <= config.chunk_size.max(2) {
        return advice_call(critic, prompt).context_with(|| "semantic merge".to_string());
    }
    let group = config.chunk_size.max(2);
    let partial: Vec<(String, Usage)> = summaries
        .par_chunks(group)
        .map(|chunk| advice_call(critic, merge_prompt(chunk)))
        .collect::<Result<_>>()?;
    let usage: Usage = partial.iter().map(|(_, u)| *u).sum();
    let (advice, rest) = merge(critic, partial.into_iter().map(|(s, _)| s).collect(), config)?;
    Ok((advice, usage + rest))
}

/// Appends the semantic advice to the end of an episodic prompt block.
pub fn compose_hybrid(episodic_block: &str, semantic: &SemanticMemory) -> Result<String> {
    if semantic.advice.trim().is_empty() {
        return Err(Error::Precondition("semantic memory has empty advice".into()));
    }
    Ok(format!("{episodic_block}\n{HYBRID_ADVICE_LEAD} {}", semantic.advice))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use crate::gateway::scripts;
    use std::sync::Arc;

    fn entry(id: &str, question: &str, gold: &str) -> EpisodicEntry {
        EpisodicEntry {
            instance: TaskInstance::new(id, question, gold),
            pa_initial: "Yes".into(),
            critique: Critique {
                assertion: gold.into(),
                rationale: "because".into(),
                reflection: "in general".into(),
                raw: String::new(),
                assertion_overridden: false,
                parse_fallback: false,
            },
            embedding: HashEmbedder::new(64).unwrap().embed_one(question).unwrap(),
        }
    }

    fn semantic(advice: &str) -> SemanticMemory {
        SemanticMemory {
            advice: advice.into(),
            source_entry_ids: vec![],
            built_from_fraction: 1.0,
            chunk_count: 1,
            usage: Usage::default(),
        }
    }

    fn echo_critic() -> Gateway {
        Gateway::new(Arc::new(scripts::label_echo_critic("c", "ADVICE")))
    }

    #[test]
    fn hybrid_composition() {
        let out = compose_hybrid("E", &semantic("S")).unwrap();
        assert_eq!(out, "E\nAlso, here is some additional advice to guide your response: S");
        assert_eq!(
            out.len(),
            "E".len() + "\nAlso, here is some additional advice to guide your response: S".len()
        );
        assert!(compose_hybrid("E", &semantic(" ")).is_err());
    }

    #[test]
    fn single_entry_store_always_returns_it() {
        let store = EpisodicStore::new(vec![entry("a", "alpha beta", "Yes")]).unwrap();
        let q = HashEmbedder::new(64).unwrap().embed_one("unrelated gamma").unwrap();
        let got = store.retrieve(&q, 5).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].instance.id, "a");
    }

    #[test]
    fn store_rejects_wrong_assertions() {
        let mut bad = entry("a", "alpha", "Yes");
        bad.critique.assertion = "No".into();
        assert!(matches!(EpisodicStore::new(vec![bad]), Err(Error::Integrity(_))));
    }

    #[test]
    fn store_rejects_mismatched_index() {
        let e = entry("a", "alpha", "Yes");
        let index = VectorIndex::from_entries(64, [("b".to_string(), e.embedding.clone())]).unwrap();
        assert!(matches!(
            EpisodicStore::from_parts(vec![e], index),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn small_corpus_is_one_call() {
        let entries: Vec<_> = (0..10)
            .map(|i| entry(&format!("e{i}"), &format!("question {i}"), "No"))
            .collect();
        let critic = echo_critic();
        let mem = summarize(&entries, &critic, &SummaryConfig::default(), 1.0).unwrap();
        assert_eq!(mem.advice, "ADVICE");
        assert_eq!(mem.chunk_count, 1);
        assert_eq!(critic.meter().call_count(), 1);
        assert_eq!(mem.source_entry_ids.len(), 10);
        assert_eq!(mem.usage, critic.meter().snapshot().total);
    }

    #[test]
    fn oversized_corpus_is_map_reduced() {
        let entries: Vec<_> = (0..250)
            .map(|i| entry(&format!("e{i}"), &format!("question {i}"), "No"))
            .collect();
        let config = SummaryConfig {
            token_budget: 1_000,
            chunk_size: 50,
        };
        // 250 entries / 50 per chunk = 5 leaves, plus one merge
        assert!(count_tokens(&summary_prompt(&entries)) > config.token_budget);
        assert_eq!(chunk_plan(250, &config, u64::MAX), 5);
        let critic = echo_critic();
        let mem = summarize(&entries, &critic, &config, 1.0).unwrap();
        assert_eq!(mem.chunk_count, 5);
        assert_eq!(critic.meter().call_count(), 6);
    }

    #[test]
    fn summarize_is_deterministic_and_rejects_empty() {
        let entries: Vec<_> = (0..3)
            .map(|i| entry(&format!("e{i}"), &format!("q {i}"), "Yes"))
            .collect();
        let a = summarize(&entries, &echo_critic(), &SummaryConfig::default(), 0.5).unwrap();
        let b = summarize(&entries, &echo_critic(), &SummaryConfig::default(), 0.5).unwrap();
        assert_eq!(a, b);
        assert!(summarize(&[], &echo_critic(), &SummaryConfig::default(), 1.0).is_err());
    }
}
