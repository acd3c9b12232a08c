//! Domain types shared by every stage of the pipeline, plus the label-space
//! logic used for scoring (answer extraction) and for adversarial probes
//! (label flipping).

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marker used wherever an unparseable answer is rendered as text.
pub const UNPARSEABLE: &str = "UNPARSEABLE";

/// Case-folded, trimmed form used for every label comparison.
pub fn fold(text: &str) -> String {
    text.trim().to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Binary,
    MultipleChoice,
    Pairwise,
}

/// The ordered set of admissible answers for a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLabelSpace")]
pub struct LabelSpace {
    labels: Vec<String>,
    kind: LabelKind,
}

#[derive(Deserialize)]
struct RawLabelSpace {
    labels: Vec<String>,
    kind: LabelKind,
}

impl TryFrom<RawLabelSpace> for LabelSpace {
    type Error = Error;

    fn try_from(raw: RawLabelSpace) -> Result<Self> {
        LabelSpace::new(raw.labels, raw.kind)
    }
}

impl LabelSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>, kind: LabelKind) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(|l| l.into().trim().to_string()).collect();
        if labels.len() < 2 {
            return Err(Error::Config(format!(
                "a label space needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for label in &labels {
            let folded = fold(label);
            if folded.is_empty() {
                return Err(Error::Config("empty label in label space".into()));
            }
            if !seen.insert(folded) {
                return Err(Error::Config(format!("duplicate label {label:?} after normalization")));
            }
        }
        if kind == LabelKind::Binary && labels.len() != 2 {
            return Err(Error::Config(format!(
                "binary label space must have exactly 2 labels, got {}",
                labels.len()
            )));
        }
        Ok(Self { labels, kind })
    }

    pub fn binary(a: &str, b: &str) -> Result<Self> {
        Self::new([a, b], LabelKind::Binary)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The canonical spelling of `text` if it names a label exactly (modulo
    /// trim and case).
    pub fn canonical(&self, text: &str) -> Option<&str> {
        let folded = fold(text);
        self.labels.iter().find(|l| fold(l) == folded).map(String::as_str)
    }

    pub fn contains(&self, text: &str) -> bool {
        self.canonical(text).is_some()
    }

    /// Returns a label different from `gold`; see [`flip_label`].
    pub fn flip(&self, gold: &str, seed: u64) -> Result<String> {
        flip_label(gold, &self.labels, seed)
    }
}

/// A scored answer: either one of the labels or unparseable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<String>", into = "Option<String>")]
pub enum Answer {
    Label(String),
    Unparseable,
}

impl From<Option<String>> for Answer {
    fn from(value: Option<String>) -> Self {
        value.map_or(Answer::Unparseable, Answer::Label)
    }
}

impl From<Answer> for Option<String> {
    fn from(value: Answer) -> Self {
        match value {
            Answer::Label(l) => Some(l),
            Answer::Unparseable => None,
        }
    }
}

impl Answer {
    pub fn label(&self) -> Option<&str> {
        match self {
            Answer::Label(l) => Some(l),
            Answer::Unparseable => None,
        }
    }

    pub fn is_label(&self, gold: &str) -> bool {
        self.label().is_some_and(|l| fold(l) == fold(gold))
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label().unwrap_or(UNPARSEABLE))
    }
}

/// Maps a raw model answer onto the label space.
///
/// 1. the whole trimmed text names a label (case-folded);
/// 2. otherwise, if exactly one label occurs as a whole token, that label;
/// 3. otherwise, if several occur, the one whose occurrence ends last;
/// 4. otherwise [`Answer::Unparseable`].
pub fn normalize_label(text: &str, space: &LabelSpace) -> Answer {
    if let Some(label) = space.canonical(text) {
        return Answer::Label(label.to_string());
    }
    let haystack = text.to_lowercase();
    // (end offset, label length, label index) of the latest occurrence
    let mut best: Option<(usize, usize, usize)> = None;
    for (idx, label) in space.labels().iter().enumerate() {
        let needle = fold(label);
        if let Some(end) = last_token_occurrence(&haystack, &needle) {
            let candidate = (end, needle.len(), idx);
            if best.is_none_or(|b| (candidate.0, candidate.1) > (b.0, b.1)) {
                best = Some(candidate);
            }
        }
    }
    match best {
        Some((_, _, idx)) => Answer::Label(space.labels()[idx].clone()),
        None => Answer::Unparseable,
    }
}

/// End offset of the last occurrence of `needle` in `haystack` that is not
/// glued to alphanumeric characters on either side.
fn last_token_occurrence(haystack: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let mut last = None;
    for (start, _) in haystack.match_indices(needle) {
        let end = start + needle.len();
        let before_ok = haystack[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !c.is_alphanumeric());
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            last = Some(end);
        }
    }
    last
}

/// Picks a label different from `gold`.
///
/// With two labels this is the unique alternative; otherwise a uniform draw
/// among the wrong labels from a ChaCha8 stream seeded with `seed`.
pub fn flip_label(gold: &str, labels: &[String], seed: u64) -> Result<String> {
    if labels.len() < 2 {
        return Err(Error::Config(format!(
            "cannot flip a label in a space of {} label(s)",
            labels.len()
        )));
    }
    let gold_folded = fold(gold);
    if !labels.iter().any(|l| fold(l) == gold_folded) {
        return Err(Error::Precondition(format!("label {gold:?} is not in the label space")));
    }
    let wrong: Vec<&String> = labels.iter().filter(|l| fold(l) != gold_folded).collect();
    if wrong.len() == 1 {
        return Ok(wrong[0].clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(wrong[rng.gen_range(0..wrong.len())].clone())
}

/// One labeled question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub question: String,
    pub gold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
}

impl TaskInstance {
    pub fn new(id: impl Into<String>, question: impl Into<String>, gold: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            gold: gold.into(),
            user_id: None,
        }
    }

    pub fn with_user(mut self, user_id: impl Into<String>) -> Self {
        self.user_id = Some(user_id.into());
        self
    }
}

/// A named task with its train/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub label_space: LabelSpace,
    pub train: Vec<TaskInstance>,
    pub test: Vec<TaskInstance>,
    pub split_seed: u64,
}

impl Dataset {
    /// Checks id uniqueness, train/test disjointness and gold membership.
    /// Gold labels are rewritten to their canonical spelling.
    pub fn validate(mut self) -> Result<Self> {
        let mut ids = std::collections::HashSet::new();
        for inst in self.train.iter_mut().chain(self.test.iter_mut()) {
            if !ids.insert(inst.id.clone()) {
                return Err(Error::Dataset(format!(
                    "{}: duplicate instance id {:?}",
                    self.name, inst.id
                )));
            }
            match self.label_space.canonical(&inst.gold) {
                Some(label) => inst.gold = label.to_string(),
                None => {
                    return Err(Error::Dataset(format!(
                        "{}: instance {:?} has gold {:?} outside the label space",
                        self.name, inst.id, inst.gold
                    )))
                }
            }
        }
        Ok(self)
    }

    /// Distinct user ids in first-seen order; `[None]` when no instance has one.
    pub fn users(&self) -> Vec<Option<String>> {
        let mut users: Vec<Option<String>> = Vec::new();
        for inst in self.train.iter().chain(&self.test) {
            if !users.contains(&inst.user_id) {
                users.push(inst.user_id.clone());
            }
        }
        if users.is_empty() {
            users.push(None);
        }
        users
    }

    /// The subset belonging to one user.
    pub fn for_user(&self, user: Option<&str>) -> Dataset {
        let keep = |i: &&TaskInstance| i.user_id.as_deref() == user;
        Dataset {
            name: self.name.clone(),
            label_space: self.label_space.clone(),
            train: self.train.iter().filter(keep).cloned().collect(),
            test: self.test.iter().filter(keep).cloned().collect(),
            split_seed: self.split_seed,
        }
    }
}

/// Output of the critic for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Critique {
    pub assertion: String,
    pub rationale: String,
    pub reflection: String,
    pub raw: String,
    #[serde(default)]
    pub assertion_overridden: bool,
    #[serde(default)]
    pub parse_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    ZeroShot,
    EpLabel,
    EpCrit,
    SemCrit,
    EpSemCrit,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::ZeroShot,
        StrategyKind::EpLabel,
        StrategyKind::EpCrit,
        StrategyKind::SemCrit,
        StrategyKind::EpSemCrit,
    ];

    pub fn is_baseline(self) -> bool {
        matches!(self, StrategyKind::ZeroShot | StrategyKind::EpLabel)
    }

    pub fn needs_critiques(self) -> bool {
        !self.is_baseline()
    }

    pub fn needs_semantic(self) -> bool {
        matches!(self, StrategyKind::SemCrit | StrategyKind::EpSemCrit)
    }

    pub fn uses_retrieval(self) -> bool {
        matches!(
            self,
            StrategyKind::EpLabel | StrategyKind::EpCrit | StrategyKind::EpSemCrit
        )
    }

    /// Identifier used in configs and file names.
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::ZeroShot => "zero_shot",
            StrategyKind::EpLabel => "ep_label",
            StrategyKind::EpCrit => "ep_crit",
            StrategyKind::SemCrit => "sem_crit",
            StrategyKind::EpSemCrit => "ep_sem_crit",
        }
    }

    /// Label used in rendered tables.
    pub fn display_name(self) -> &'static str {
        match self {
            StrategyKind::ZeroShot => "zero_shot",
            StrategyKind::EpLabel => "EP_LABEL",
            StrategyKind::EpCrit => "EP_CRIT",
            StrategyKind::SemCrit => "SEM_CRIT",
            StrategyKind::EpSemCrit => "EP+SEM_CRIT",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

/// A scored performance-agent answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub strategy: StrategyKind,
    pub predicted: Answer,
    pub raw_output: String,
    pub correct: bool,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl PredictionRecord {
    pub fn score(
        instance: &TaskInstance,
        strategy: StrategyKind,
        raw_output: String,
        space: &LabelSpace,
        prompt_tokens: u64,
        completion_tokens: u64,
    ) -> Self {
        let predicted = normalize_label(&raw_output, space);
        if predicted == Answer::Unparseable {
            tracing::debug!(instance = %instance.id, %strategy, "unparseable answer");
        }
        let correct = predicted.is_label(&instance.gold);
        Self {
            instance_id: instance.id.clone(),
            strategy,
            predicted,
            raw_output,
            correct,
            prompt_tokens,
            completion_tokens,
        }
    }

    /// Whether the stored `correct` flag agrees with `(predicted, gold)`.
    pub fn is_consistent(&self, gold: &str) -> bool {
        self.correct == self.predicted.is_label(gold)
    }
}
