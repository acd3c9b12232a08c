//! Training pass: initial performance-agent predictions followed by
//! label-grounded critiques from the critic agent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{embed, EmbedProvider};
use crate::error::{Error, Result, ResultExt};
use crate::gateway::{ChatMessage, Gateway, Phase, Usage};
use crate::json::extract_json_object;
use crate::memory::EpisodicEntry;
use crate::model::{normalize_label, Answer, Critique, LabelSpace, PredictionRecord, StrategyKind, TaskInstance};
use crate::prompts::{critique_transcript, REPAIR_PROMPT};

/// Input to the critic for one instance.
#[derive(Debug, Clone)]
pub struct CritiqueRequest<'a> {
    pub instance: &'a TaskInstance,
    pub pa_initial: String,
    pub asserted_label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CritiqueOutcome {
    pub critique: Critique,
    pub critic_calls: u32,
    pub usage: Usage,
}

/// Zero-shot answer to the bare question, metered as training.
pub fn initial_predict(instance: &TaskInstance, space: &LabelSpace, pa: &Gateway) -> Result<PredictionRecord> {
    let out = pa
        .complete(vec![ChatMessage::user(&instance.question)], Phase::Training)
        .context_with(|| format!("initial prediction for {}", instance.id))?;
    Ok(PredictionRecord::score(
        instance,
        StrategyKind::ZeroShot,
        out.text,
        space,
        out.prompt_tokens,
        out.completion_tokens,
    ))
}

/// Fields of a critic reply before validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCritique {
    pub correct_answer: String,
    pub local_reason: String,
    pub global_reason: String,
}

fn field_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Reads the first JSON object in `reply`; `correct_answer` is required,
/// the two reasons default to empty.
pub fn parse_critique_reply(reply: &str) -> Option<ParsedCritique> {
    let object: serde_json::Value = serde_json::from_str(extract_json_object(reply)?).ok()?;
    let answer = field_text(object.get("correct_answer")?);
    if answer.trim().is_empty() {
        return None;
    }
    Some(ParsedCritique {
        correct_answer: answer,
        local_reason: object.get("local_reason").map(field_text).unwrap_or_default(),
        global_reason: object.get("global_reason").map(field_text).unwrap_or_default(),
    })
}

/// Asks the critic for a structured critique and validates it.
///
/// The stored assertion is always `asserted_label`: a mismatching reply is
/// overridden and flagged. An unparseable reply gets one repair re-prompt;
/// if that also fails the raw text becomes the rationale.
pub fn generate_critique(req: &CritiqueRequest<'_>, space: &LabelSpace, critic: &Gateway) -> Result<CritiqueOutcome> {
    let asserted = space
        .canonical(&req.asserted_label)
        .ok_or_else(|| {
            Error::Precondition(format!(
                "asserted label {:?} is not in the label space",
                req.asserted_label
            ))
        })?
        .to_string();
    let mut transcript = critique_transcript(&req.instance.question, &req.pa_initial, &asserted);
    let mut usage = Usage::default();
    let mut calls = 0;
    let mut raw = String::new();
    for attempt in 0..2 {
        if attempt == 1 {
            if !raw.trim().is_empty() {
                transcript.push(ChatMessage::assistant(&raw));
            }
            transcript.push(ChatMessage::user(REPAIR_PROMPT));
        }
        let out = critic
            .complete(transcript.clone(), Phase::Training)
            .context_with(|| format!("critique for {}", req.instance.id))?;
        calls += 1;
        usage += out.usage();
        raw = out.text;
        if let Some(parsed) = parse_critique_reply(&raw) {
            let agrees = normalize_label(&parsed.correct_answer, space) == Answer::Label(asserted.clone());
            if !agrees {
                tracing::warn!(
                    instance = %req.instance.id,
                    critic_said = %parsed.correct_answer,
                    %asserted,
                    "critic contradicted the asserted label; overriding"
                );
            }
            return Ok(CritiqueOutcome {
                critique: Critique {
                    assertion: asserted,
                    rationale: parsed.local_reason,
                    reflection: parsed.global_reason,
                    raw,
                    assertion_overridden: !agrees,
                    parse_fallback: false,
                },
                critic_calls: calls,
                usage,
            });
        }
    }
    tracing::warn!(instance = %req.instance.id, "critic reply unparseable after repair; using fallback");
    Ok(CritiqueOutcome {
        critique: Critique {
            assertion: asserted,
            rationale: raw.clone(),
            reflection: String::new(),
            raw,
            assertion_overridden: false,
            parse_fallback: true,
        },
        critic_calls: calls,
        usage,
    })
}

/// `round_half_up(fraction * n)`.
pub fn subset_size(fraction: f64, n: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("training fraction {fraction} is outside (0, 1]")));
    }
    // the epsilon absorbs representation error in products like 0.35 * 10
    let m = (fraction * n as f64 + 0.5 + 1e-9).floor() as usize;
    if m == 0 {
        return Err(Error::Config(format!(
            "fraction {fraction} of {n} training instances selects nothing"
        )));
    }
    Ok(m.min(n))
}

/// Seeded uniform subset, returned in original order. Subsets for the same
/// seed are nested: a smaller fraction selects a prefix of the same
/// permutation.
pub fn select_subset(train: &[TaskInstance], fraction: f64, seed: u64) -> Result<Vec<&TaskInstance>> {
    let m = subset_size(fraction, train.len())?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut picked: Vec<usize> = order.into_iter().take(m).collect();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| &train[i]).collect())
}

/// One processed training instance, in its persisted form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueRecord {
    pub instance_id: String,
    pub pa_initial: String,
    pub asserted_label: String,
    pub critique: StoredCritique,
    pub flags: CritiqueFlags,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredCritique {
    pub assertion: String,
    pub rationale: String,
    pub reflection: String,
    pub raw: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueFlags {
    pub assertion_overridden: bool,
    pub parse_fallback: bool,
    pub initial_correct: bool,
}

impl CritiqueRecord {
    pub fn new(instance_id: &str, pa_initial: &PredictionRecord, critique: &Critique, usage: Usage) -> Self {
        Self {
            instance_id: instance_id.to_string(),
            pa_initial: pa_initial.raw_output.clone(),
            asserted_label: critique.assertion.clone(),
            critique: StoredCritique {
                assertion: critique.assertion.clone(),
                rationale: critique.rationale.clone(),
                reflection: critique.reflection.clone(),
                raw: critique.raw.clone(),
            },
            flags: CritiqueFlags {
                assertion_overridden: critique.assertion_overridden,
                parse_fallback: critique.parse_fallback,
                initial_correct: pa_initial.correct,
            },
            usage,
        }
    }

    pub fn to_critique(&self) -> Critique {
        Critique {
            assertion: self.critique.assertion.clone(),
            rationale: self.critique.rationale.clone(),
            reflection: self.critique.reflection.clone(),
            raw: self.critique.raw.clone(),
            assertion_overridden: self.flags.assertion_overridden,
            parse_fallback: self.flags.parse_fallback,
        }
    }
}

/// Result of [`build_training_memory`].
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub entries: Vec<EpisodicEntry>,
    pub records: Vec<CritiqueRecord>,
    pub usage: Usage,
}

impl TrainingOutcome {
    pub fn overridden(&self) -> usize {
        self.records.iter().filter(|r| r.flags.assertion_overridden).count()
    }

    pub fn fallbacks(&self) -> usize {
        self.records.iter().filter(|r| r.flags.parse_fallback).count()
    }
}

/// Runs the training pass over a seeded `fraction` of `train`.
pub fn build_training_memory(
    train: &[TaskInstance],
    space: &LabelSpace,
    pa: &Gateway,
    critic: &Gateway,
    embedder: &dyn EmbedProvider,
    fraction: f64,
    seed: u64,
) -> Result<TrainingOutcome> {
    let selected = select_subset(train, fraction, seed)?;
    let processed: Vec<(PredictionRecord, CritiqueOutcome)> = selected
        .par_iter()
        .map(|instance| {
            let initial = initial_predict(instance, space, pa)?;
            let outcome = generate_critique(
                &CritiqueRequest {
                    instance,
                    pa_initial: initial.raw_output.clone(),
                    asserted_label: instance.gold.clone(),
                },
                space,
                critic,
            )?;
            Ok((initial, outcome))
        })
        .collect::<Result<_>>()?;
    let questions: Vec<String> = selected.iter().map(|i| i.question.clone()).collect();
    let embeddings = embed(&questions, embedder)?;

    let mut usage = Usage::default();
    let mut entries = Vec::with_capacity(selected.len());
    let mut records = Vec::with_capacity(selected.len());
    for ((instance, (initial, outcome)), embedding) in selected.iter().zip(processed).zip(embeddings) {
        let call_usage = Usage::new(initial.prompt_tokens, initial.completion_tokens) + outcome.usage;
        usage += call_usage;
        records.push(CritiqueRecord::new(
            &instance.id,
            &initial,
            &outcome.critique,
            call_usage,
        ));
        entries.push(EpisodicEntry {
            instance: (*instance).clone(),
            pa_initial: initial.raw_output,
            critique: outcome.critique,
            embedding,
        });
    }
    Ok(TrainingOutcome {
        entries,
        records,
        usage,
    })
}
