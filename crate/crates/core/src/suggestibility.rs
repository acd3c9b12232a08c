//! Suggestibility: how far the performance agent's accuracy moves between a
//! truthful and a label-flipped insight. Both arms run on the same items.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::critique::{generate_critique, initial_predict, CritiqueRequest};
use crate::error::{Error, Result, ResultExt};
use crate::gateway::{ChatMessage, Gateway, Phase, Usage};
use crate::model::{normalize_label, Answer, Critique, Dataset, TaskInstance};
use crate::prompts::{render_critique, AssembledPrompt, PromptKind, CORRECT_ANSWER_LEAD, PROBE_CRITIQUE_LEAD};

/// What accompanies the question in a probe trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProbeCondition {
    /// Bare asserted label.
    #[serde(rename = "XY")]
    Xy,
    /// Asserted label plus critique.
    #[serde(rename = "XY+Crit")]
    XyCrit,
    /// Critique only.
    #[serde(rename = "X+Crit")]
    XCrit,
}

impl ProbeCondition {
    pub const ALL: [ProbeCondition; 3] = [ProbeCondition::Xy, ProbeCondition::XyCrit, ProbeCondition::XCrit];

    pub fn needs_critique(self) -> bool {
        !matches!(self, ProbeCondition::Xy)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeCondition::Xy => "XY",
            ProbeCondition::XyCrit => "XY+Crit",
            ProbeCondition::XCrit => "X+Crit",
        }
    }

    /// File-name friendly identifier.
    pub fn slug(self) -> &'static str {
        match self {
            ProbeCondition::Xy => "xy",
            ProbeCondition::XyCrit => "xy_crit",
            ProbeCondition::XCrit => "x_crit",
        }
    }
}

impl fmt::Display for ProbeCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProbeCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProbeCondition::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s) || c.slug() == s)
            .ok_or_else(|| Error::Config(format!("unknown probe condition {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestibilityReport {
    pub condition: ProbeCondition,
    pub acc_best: f64,
    pub acc_adversarial: f64,
    pub s: f64,
    pub n: usize,
    pub flip_seed: u64,
}

/// `(acc_best, acc_adversarial, S)` from paired per-item correctness.
pub fn suggestibility_score(best: &[bool], adversarial: &[bool]) -> Result<(f64, f64, f64)> {
    if best.len() != adversarial.len() {
        return Err(Error::Precondition(format!(
            "arms must be paired: {} best vs {} adversarial items",
            best.len(),
            adversarial.len()
        )));
    }
    if best.is_empty() {
        return Err(Error::Precondition("suggestibility needs at least one item".into()));
    }
    let n = best.len() as f64;
    let acc = |v: &[bool]| v.iter().filter(|c| **c).count() as f64 / n;
    let (b, a) = (acc(best), acc(adversarial));
    Ok((b, a, b - a))
}

/// Per-instance flip seed: `flip_seed` XOR a stable hash of the id.
pub fn instance_flip_seed(flip_seed: u64, instance_id: &str) -> u64 {
    let digest = Sha256::digest(instance_id.as_bytes());
    flip_seed ^ u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Probe prompt: a single user turn with the question and the condition's
/// signal.
pub fn build_probe_prompt(
    condition: ProbeCondition,
    instance: &TaskInstance,
    asserted_label: &str,
    critique: Option<&Critique>,
) -> Result<AssembledPrompt> {
    if condition.needs_critique() != critique.is_some() {
        return Err(Error::Config(format!(
            "probe condition {condition} {} a critique",
            if condition.needs_critique() {
                "requires"
            } else {
                "does not take"
            }
        )));
    }
    let mut text = instance.question.clone();
    if matches!(condition, ProbeCondition::Xy | ProbeCondition::XyCrit) {
        text.push_str(&format!("\n{CORRECT_ANSWER_LEAD}{asserted_label}."));
    }
    if let Some(c) = critique {
        text.push_str(&format!("\n{PROBE_CRITIQUE_LEAD} {}", render_critique(c)));
    }
    Ok(AssembledPrompt {
        messages: vec![ChatMessage::user(text)],
        kind: PromptKind::Probe(condition),
        retrieved_ids: Vec::new(),
    })
}

/// Everything a probe needs per test item, shareable across conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeItem {
    pub instance: TaskInstance,
    pub flipped: String,
    pub pa_initial: Option<String>,
    pub best_critique: Option<Critique>,
    pub adversarial_critique: Option<Critique>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMaterials {
    pub items: Vec<ProbeItem>,
    pub flip_seed: u64,
    /// Tokens spent on initial predictions and critiques.
    pub usage: Usage,
}

impl ProbeMaterials {
    /// Flips every test label and, when `with_critiques`, builds truthful
    /// and adversarial critiques through the critique engine.
    pub fn prepare(
        dataset: &Dataset,
        pa: &Gateway,
        critic: &Gateway,
        flip_seed: u64,
        with_critiques: bool,
    ) -> Result<Self> {
        if dataset.test.is_empty() {
            return Err(Error::Precondition(format!(
                "{}: probe needs a non-empty test set",
                dataset.name
            )));
        }
        let space = &dataset.label_space;
        let built: Vec<(ProbeItem, Usage)> = dataset
            .test
            .par_iter()
            .map(|instance| {
                let flipped = space.flip(&instance.gold, instance_flip_seed(flip_seed, &instance.id))?;
                if !with_critiques {
                    return Ok((
                        ProbeItem {
                            instance: instance.clone(),
                            flipped,
                            pa_initial: None,
                            best_critique: None,
                            adversarial_critique: None,
                        },
                        Usage::default(),
                    ));
                }
                let initial = initial_predict(instance, space, pa)?;
                let mut usage = Usage::new(initial.prompt_tokens, initial.completion_tokens);
                let mut critique_for = |label: &str, arm: &str| -> Result<Critique> {
                    let out = generate_critique(
                        &CritiqueRequest {
                            instance,
                            pa_initial: initial.raw_output.clone(),
                            asserted_label: label.to_string(),
                        },
                        space,
                        critic,
                    )
                    .context_with(|| format!("{arm} arm"))?;
                    usage += out.usage;
                    Ok(out.critique)
                };
                let best = critique_for(&instance.gold, "best")?;
                let adversarial = critique_for(&flipped, "adversarial")?;
                Ok((
                    ProbeItem {
                        instance: instance.clone(),
                        flipped,
                        pa_initial: Some(initial.raw_output),
                        best_critique: Some(best),
                        adversarial_critique: Some(adversarial),
                    },
                    usage,
                ))
            })
            .collect::<Result<_>>()?;
        let usage = built.iter().map(|(_, u)| *u).sum();
        Ok(Self {
            items: built.into_iter().map(|(i, _)| i).collect(),
            flip_seed,
            usage,
        })
    }

    pub fn has_critiques(&self) -> bool {
        self.items
            .iter()
            .all(|i| i.best_critique.is_some() && i.adversarial_critique.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Best,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub instance_id: String,
    pub arm: Arm,
    pub asserted_label: String,
    pub raw_output: String,
    pub predicted: Answer,
    pub correct: bool,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub report: SuggestibilityReport,
    pub records: Vec<ProbeRecord>,
    /// Performance-agent tokens for both arms.
    pub usage: Usage,
}

/// Runs both arms of `condition` over prepared materials.
pub fn run_probe_prepared(
    materials: &ProbeMaterials,
    condition: ProbeCondition,
    space: &crate::model::LabelSpace,
    pa: &Gateway,
) -> Result<ProbeOutcome> {
    if condition.needs_critique() && !materials.has_critiques() {
        return Err(Error::Config(format!(
            "probe condition {condition} needs prepared critiques"
        )));
    }
    let pairs: Vec<(ProbeRecord, ProbeRecord)> = materials
        .items
        .par_iter()
        .map(|item| {
            let arm_record = |arm: Arm| -> Result<ProbeRecord> {
                let (label, critique) = match arm {
                    Arm::Best => (&item.instance.gold, item.best_critique.as_ref()),
                    Arm::Adversarial => (&item.flipped, item.adversarial_critique.as_ref()),
                };
                let critique = critique.filter(|_| condition.needs_critique());
                let prompt = build_probe_prompt(condition, &item.instance, label, critique)?;
                let out = pa
                    .complete(prompt.messages, Phase::Utilization)
                    .context_with(|| format!("{condition} {arm:?} arm, instance {}", item.instance.id))?;
                let predicted = normalize_label(&out.text, space);
                Ok(ProbeRecord {
                    instance_id: item.instance.id.clone(),
                    arm,
                    asserted_label: label.clone(),
                    correct: predicted.is_label(&item.instance.gold),
                    predicted,
                    usage: out.usage(),
                    raw_output: out.text,
                })
            };
            Ok((arm_record(Arm::Best)?, arm_record(Arm::Adversarial)?))
        })
        .collect::<Result<_>>()?;
    let best: Vec<bool> = pairs.iter().map(|(b, _)| b.correct).collect();
    let adversarial: Vec<bool> = pairs.iter().map(|(_, a)| a.correct).collect();
    let (acc_best, acc_adversarial, s) = suggestibility_score(&best, &adversarial)?;
    let usage = pairs.iter().map(|(b, a)| b.usage + a.usage).sum();
    let records = pairs.into_iter().flat_map(|(b, a)| [b, a]).collect();
    Ok(ProbeOutcome {
        report: SuggestibilityReport {
            condition,
            acc_best,
            acc_adversarial,
            s,
            n: best.len(),
            flip_seed: materials.flip_seed,
        },
        records,
        usage,
    })
}

/// Prepares materials for one condition and runs it.
pub fn run_probe(
    dataset: &Dataset,
    condition: ProbeCondition,
    pa: &Gateway,
    critic: &Gateway,
    flip_seed: u64,
) -> Result<ProbeOutcome> {
    let materials = ProbeMaterials::prepare(dataset, pa, critic, flip_seed, condition.needs_critique())?;
    run_probe_prepared(&materials, condition, &dataset.label_space, pa)
}
