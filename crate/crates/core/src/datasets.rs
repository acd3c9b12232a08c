//! Dataset ingestion (JSONL records plus a sidecar header), seeded
//! train/test splitting, preference-task construction and synthetic tasks.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, LabelKind, LabelSpace, TaskInstance};

/// Sidecar header stored next to a record file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub name: String,
    pub labels: Vec<String>,
    pub kind: LabelKind,
    pub split_seed: u64,
}

impl DatasetHeader {
    pub fn label_space(&self) -> Result<LabelSpace> {
        LabelSpace::new(self.labels.clone(), self.kind)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    question: String,
    gold: String,
    #[serde(default)]
    user_id: Option<String>,
}

pub fn parse_header(text: &str) -> Result<DatasetHeader> {
    let header: DatasetHeader =
        serde_json::from_str(text).map_err(|e| Error::Dataset(format!("bad dataset header: {e}")))?;
    if header.name.trim().is_empty() {
        return Err(Error::Dataset("dataset header has an empty name".into()));
    }
    header.label_space()?;
    Ok(header)
}

/// Parses one JSONL record line.
pub fn parse_record(line: &str) -> Result<TaskInstance> {
    let r: Record = serde_json::from_str(line).map_err(|e| Error::Dataset(format!("bad record: {e}")))?;
    for (field, value) in [("id", &r.id), ("question", &r.question), ("gold", &r.gold)] {
        if value.trim().is_empty() {
            return Err(Error::Dataset(format!("record {:?}: empty {field}", r.id)));
        }
    }
    if r.user_id.as_deref().is_some_and(|u| u.trim().is_empty()) {
        return Err(Error::Dataset(format!("record {:?}: empty user_id", r.id)));
    }
    Ok(TaskInstance {
        id: r.id,
        question: r.question,
        gold: r.gold,
        user_id: r.user_id,
    })
}

/// Parses a JSONL body; blank lines are skipped.
pub fn parse_records(text: &str) -> Result<Vec<TaskInstance>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| parse_record(l).map_err(|e| e.context(format!("line {}", n + 1))))
        .collect()
}

pub fn records_to_jsonl(instances: &[TaskInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&serde_json::to_string(inst).expect("instances serialize"));
        out.push('\n');
    }
    out
}

/// `tasks/x.jsonl` → `tasks/x.header.json`.
pub fn header_path(records: &Path) -> PathBuf {
    let stem = records.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    records.with_file_name(format!("{stem}.header.json"))
}

/// Seeded 50/50 split; with an odd count train gets the extra instance.
/// The result does not depend on input order.
pub fn split(instances: &[TaskInstance], seed: u64) -> Result<(Vec<TaskInstance>, Vec<TaskInstance>)> {
    if instances.len() < 2 {
        return Err(Error::Dataset(format!(
            "splitting needs at least 2 instances, got {}",
            instances.len()
        )));
    }
    let mut shuffled = instances.to_vec();
    shuffled.sort_by(|a, b| a.id.cmp(&b.id));
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = shuffled.split_off(instances.len().div_ceil(2));
    Ok((shuffled, test))
}

/// Splits each user's instances separately so every user keeps the 50/50 ratio.
pub fn split_by_user(instances: &[TaskInstance], seed: u64) -> Result<(Vec<TaskInstance>, Vec<TaskInstance>)> {
    let mut groups: BTreeMap<Option<&str>, Vec<TaskInstance>> = BTreeMap::new();
    for inst in instances {
        groups.entry(inst.user_id.as_deref()).or_default().push(inst.clone());
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (user, group) in groups {
        let (tr, te) = split(&group, seed).map_err(|e| e.context(format!("user {}", user.unwrap_or("-"))))?;
        train.extend(tr);
        test.extend(te);
    }
    Ok((train, test))
}

/// Builds and validates a dataset from unsplit instances.
pub fn assemble_dataset(header: &DatasetHeader, instances: Vec<TaskInstance>) -> Result<Dataset> {
    let (train, test) = split_by_user(&instances, header.split_seed)?;
    Dataset {
        name: header.name.clone(),
        label_space: header.label_space()?,
        train,
        test,
        split_seed: header.split_seed,
    }
    .validate()
}

/// Loads `x.jsonl` with its `x.header.json` sidecar.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let hpath = header_path(path);
    let header_text = std::fs::read_to_string(&hpath).map_err(|e| Error::io(&hpath, e))?;
    let header = parse_header(&header_text).map_err(|e| e.context(hpath.display().to_string()))?;
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let instances = parse_records(&body).map_err(|e| e.context(path.display().to_string()))?;
    assemble_dataset(&header, instances).map_err(|e| e.context(path.display().to_string()))
}

pub fn header_for(dataset: &Dataset) -> DatasetHeader {
    DatasetHeader {
        name: dataset.name.clone(),
        labels: dataset.label_space.labels().to_vec(),
        kind: dataset.label_space.kind(),
        split_seed: dataset.split_seed,
    }
}

/// Writes all instances of `dataset` (train then test) and its header.
/// Loading the result reproduces the same split.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let all: Vec<TaskInstance> = dataset.train.iter().chain(&dataset.test).cloned().collect();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, records_to_jsonl(&all)).map_err(|e| Error::io(path, e))?;
    let hpath = header_path(path);
    let header = serde_json::to_string_pretty(&header_for(dataset))? + "\n";
    std::fs::write(&hpath, header).map_err(|e| Error::io(&hpath, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceItem {
    pub title: String,
    /// Higher is sampled first; absent means uniform sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<f64>,
}

impl PreferenceItem {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            priority: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSpec {
    pub user_id: String,
    pub in_history: Vec<PreferenceItem>,
    pub out_of_history: Vec<PreferenceItem>,
    #[serde(default = "default_per_side")]
    pub per_side_target: usize,
}

fn default_per_side() -> usize {
    250
}

pub const IN_LABEL: &str = "In";
pub const OUT_LABEL: &str = "Out";

pub fn preference_question(title: &str) -> String {
    format!(
        "Here is an item: \"{title}\". Is this item part of the user's history? Answer {IN_LABEL} if it is and {OUT_LABEL} if it is not."
    )
}

fn sample_side(items: &[PreferenceItem], target: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, PreferenceItem)> {
    let mut indexed: Vec<(usize, PreferenceItem)> = items.iter().cloned().enumerate().collect();
    indexed.shuffle(rng);
    if indexed.iter().any(|(_, i)| i.priority.is_some()) {
        let key = |i: &PreferenceItem| i.priority.unwrap_or(f64::NEG_INFINITY);
        indexed.sort_by(|a, b| key(&b.1).total_cmp(&key(&a.1)));
    }
    indexed.truncate(target);
    indexed
}

/// Membership task for one user: up to `per_side_target` items from each side.
pub fn build_preference_dataset(spec: &PreferenceSpec, seed: u64) -> Result<Dataset> {
    if spec.in_history.is_empty() || spec.out_of_history.is_empty() {
        return Err(Error::Dataset(format!(
            "user {}: both history sides must be non-empty ({} in, {} out)",
            spec.user_id,
            spec.in_history.len(),
            spec.out_of_history.len()
        )));
    }
    let inside: HashSet<&str> = spec.in_history.iter().map(|i| i.title.as_str()).collect();
    if let Some(shared) = spec.out_of_history.iter().find(|i| inside.contains(i.title.as_str())) {
        return Err(Error::Dataset(format!(
            "user {}: item {:?} is both in and out of history",
            spec.user_id, shared.title
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::new();
    for (side, label, items) in [
        ("in", IN_LABEL, &spec.in_history),
        ("out", OUT_LABEL, &spec.out_of_history),
    ] {
        for (n, item) in sample_side(items, spec.per_side_target, &mut rng) {
            instances.push(
                TaskInstance::new(
                    format!("{}:{side}:{n:05}", spec.user_id),
                    preference_question(&item.title),
                    label,
                )
                .with_user(&spec.user_id),
            );
        }
    }
    let header = DatasetHeader {
        name: format!("preference_{}", spec.user_id),
        labels: vec![IN_LABEL.into(), OUT_LABEL.into()],
        kind: LabelKind::Binary,
        split_seed: seed,
    };
    assemble_dataset(&header, instances)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    KeyedBinary,
    KeyedMultichoice,
    PlantedPreference,
}

impl SyntheticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticKind::KeyedBinary => "keyed_binary",
            SyntheticKind::KeyedMultichoice => "keyed_multichoice",
            SyntheticKind::PlantedPreference => "planted_preference",
        }
    }

    fn default_labels(self) -> Vec<String> {
        let labels: &[&str] = match self {
            SyntheticKind::KeyedBinary => &["Yes", "No"],
            SyntheticKind::KeyedMultichoice => &["A", "B", "C", "D"],
            SyntheticKind::PlantedPreference => &[IN_LABEL, OUT_LABEL],
        };
        labels.iter().map(|l| l.to_string()).collect()
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SyntheticKind::KeyedBinary,
            SyntheticKind::KeyedMultichoice,
            SyntheticKind::PlantedPreference,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown synthetic task kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTaskSpec {
    pub kind: SyntheticKind,
    pub size: usize,
    pub seed: u64,
    /// Overrides the kind's default labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl SyntheticTaskSpec {
    pub fn new(kind: SyntheticKind, size: usize, seed: u64) -> Self {
        Self {
            kind,
            size,
            seed,
            labels: None,
        }
    }

    pub fn name(&self) -> String {
        format!("{}-{}-s{}", self.kind, self.size, self.seed)
    }

    pub fn label_space(&self) -> Result<LabelSpace> {
        let labels = self.labels.clone().unwrap_or_else(|| self.kind.default_labels());
        match self.kind {
            SyntheticKind::KeyedMultichoice => LabelSpace::new(labels, LabelKind::MultipleChoice),
            _ => LabelSpace::new(labels, LabelKind::Binary),
        }
    }
}

/// Key phrases for keyed_binary; the first half map to the first label.
pub const KEY_PHRASES: [&str; 8] = [
    "amber falcon ridge",
    "silver otter creek",
    "crimson maple hollow",
    "golden heron bay",
    "violet badger pass",
    "iron sparrow glen",
    "jade coyote mesa",
    "cobalt lynx fjord",
];

const FILLER: [&str; 48] = [
    "table", "window", "paper", "river", "garden", "street", "market", "winter", "letter", "engine", "ladder",
    "pocket", "carpet", "button", "candle", "forest", "harbor", "island", "jacket", "kettle", "lantern", "mirror",
    "needle", "orchard", "pepper", "quartz", "ribbon", "saddle", "timber", "umbrella", "velvet", "wagon", "yarn",
    "zipper", "anchor", "basket", "cabin", "desert", "fabric", "gravel", "hammer", "igloo", "jungle", "kernel",
    "lemon", "meadow", "napkin", "oyster",
];

const MC_WORDS: [&str; 16] = [
    "kettle", "blender", "toaster", "lamp", "heater", "speaker", "router", "charger", "monitor", "keyboard", "printer",
    "scanner", "camera", "drone", "tablet", "watch",
];

/// Marker that identifies the gold option in keyed_multichoice.
pub const MC_MARKER: &str = "certified";

const PREFERENCE_TAGS: [&str; 12] = [
    "puzzle",
    "racing",
    "horror",
    "strategy",
    "farming",
    "shooter",
    "roguelike",
    "sports",
    "rhythm",
    "stealth",
    "survival",
    "platformer",
];

/// Deterministic dataset for a synthetic spec, already split with `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticTaskSpec) -> Result<Dataset> {
    let space = spec.label_space()?;
    let instances = match spec.kind {
        SyntheticKind::KeyedBinary => keyed_binary(spec, &space)?,
        SyntheticKind::KeyedMultichoice => keyed_multichoice(spec, &space),
        SyntheticKind::PlantedPreference => {
            let taste = taste_vector(spec.seed);
            planted_preference(spec, &space, &taste)?
        }
    };
    let header = DatasetHeader {
        name: spec.name(),
        labels: space.labels().to_vec(),
        kind: space.kind(),
        split_seed: spec.seed,
    };
    assemble_dataset(&header, instances)
}

fn keyed_binary(spec: &SyntheticTaskSpec, space: &LabelSpace) -> Result<Vec<TaskInstance>> {
    if space.len() != 2 {
        return Err(Error::Config("keyed_binary needs exactly 2 labels".into()));
    }
    let (yes, no) = (&space.labels()[0], &space.labels()[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..spec.size)
        .map(|i| {
            let key = i % KEY_PHRASES.len();
            let f: Vec<&str> = (0..3).map(|_| FILLER[rng.gen_range(0..FILLER.len())]).collect();
            let question = format!(
                "Record {i}: {} {} {} {}. Does this record qualify? Answer {yes} or {no}.",
                f[0], KEY_PHRASES[key], f[1], f[2]
            );
            let gold = if key < KEY_PHRASES.len() / 2 { yes } else { no };
            TaskInstance::new(format!("kb-{i:05}"), question, gold.as_str())
        })
        .collect())
}

fn keyed_multichoice(spec: &SyntheticTaskSpec, space: &LabelSpace) -> Vec<TaskInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let letters = space.labels();
    // Balanced deck of gold positions, shuffled.
    let mut golds: Vec<usize> = (0..spec.size).map(|i| i % letters.len()).collect();
    golds.shuffle(&mut rng);
    (0..spec.size)
        .map(|i| {
            let gold = golds[i];
            let mut question = format!("Item {i}: which product passed inspection?");
            for (j, letter) in letters.iter().enumerate() {
                let a = MC_WORDS[rng.gen_range(0..MC_WORDS.len())];
                let b = FILLER[rng.gen_range(0..FILLER.len())];
                let option = if j == gold {
                    format!("{MC_MARKER} {a}")
                } else {
                    format!("{b} {a}")
                };
                question.push_str(&format!("\n{letter}. {option}"));
            }
            question.push_str("\nAnswer with the option letter.");
            TaskInstance::new(format!("kmc-{i:05}"), question, letters[gold].as_str())
        })
        .collect()
}

/// Odd integer weights, so any sum of three is odd and never zero.
pub fn taste_vector(seed: u64) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a57e);
    PREFERENCE_TAGS
        .iter()
        .map(|_| {
            let magnitude = 2 * rng.gen_range(0..3) + 1;
            if rng.gen_bool(0.5) {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect()
}

/// Planted-preference items scored against an explicit taste vector.
pub fn planted_preference(spec: &SyntheticTaskSpec, space: &LabelSpace, taste: &[i64]) -> Result<Vec<TaskInstance>> {
    if taste.len() != PREFERENCE_TAGS.len() {
        return Err(Error::Config(format!(
            "taste vector must have {} weights",
            PREFERENCE_TAGS.len()
        )));
    }
    if space.len() != 2 {
        return Err(Error::Config("planted_preference needs exactly 2 labels".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tag_ids: Vec<usize> = (0..PREFERENCE_TAGS.len()).collect();
    Ok((0..spec.size)
        .map(|i| {
            let tags: Vec<usize> = tag_ids.choose_multiple(&mut rng, 3).copied().collect();
            let score: i64 = tags.iter().map(|t| taste[*t]).sum();
            let names: Vec<&str> = tags.iter().map(|t| PREFERENCE_TAGS[*t]).collect();
            let title = format!("Title {i} [{}]", names.join(", "));
            let gold = if score > 0 {
                &space.labels()[0]
            } else {
                &space.labels()[1]
            };
            TaskInstance::new(format!("pp-{i:05}"), preference_question(&title), gold.as_str()).with_user("u0")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn numbered(n: usize) -> Vec<TaskInstance> {
        (0..n)
            .map(|i| TaskInstance::new(format!("i{i:04}"), format!("q{i}"), "Yes"))
            .collect()
    }

    #[test]
    fn split_sizes() {
        let (tr, te) = split(&numbered(500), 1).unwrap();
        assert_eq!((tr.len(), te.len()), (250, 250));
        let (tr, te) = split(&numbered(104), 1).unwrap();
        assert_eq!((tr.len(), te.len()), (52, 52));
        let (tr, te) = split(&numbered(7), 1).unwrap();
        assert_eq!((tr.len(), te.len()), (4, 3));
        assert!(split(&numbered(1), 1).is_err());
    }

    #[test]
    fn split_is_seeded_and_order_free() {
        let items = numbered(50);
        let mut reversed = items.clone();
        reversed.reverse();
        assert_eq!(split(&items, 9).unwrap(), split(&reversed, 9).unwrap());
        assert_ne!(split(&items, 9).unwrap().0, split(&items, 10).unwrap().0);
    }

    #[test]
    fn record_parsing() {
        let inst = parse_record(r#"{"id":"1","question":"Q?","gold":"Yes","user_id":"u"}"#).unwrap();
        assert_eq!(inst.user_id.as_deref(), Some("u"));
        assert!(parse_record(r#"{"id":"1","question":"Q?"}"#).is_err());
        assert!(parse_record(r#"{"id":"1","question":"","gold":"Yes"}"#).is_err());
        assert!(parse_record(r#"{"id":"1","question":"Q","gold":"Yes","extra":1}"#).is_err());
        let err = parse_records("{\"id\":\"a\",\"question\":\"q\",\"gold\":\"Yes\"}\n\nnot json\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn header_parsing() {
        let h = parse_header(r#"{"name":"t","labels":["Yes","No"],"kind":"binary","split_seed":3}"#).unwrap();
        assert_eq!(h.split_seed, 3);
        assert!(parse_header(r#"{"name":"t","labels":["Yes"],"kind":"binary","split_seed":3}"#).is_err());
        assert!(parse_header(r#"{"name":"t","labels":["A","B"],"kind":"ranking","split_seed":3}"#).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate_synthetic(&SyntheticTaskSpec::new(SyntheticKind::KeyedBinary, 30, 4)).unwrap();
        let path = dir.path().join("kb.jsonl");
        write_dataset(&path, &data).unwrap();
        assert!(dir.path().join("kb.header.json").exists());
        assert_eq!(load_dataset(&path).unwrap(), data);
    }

    #[test]
    fn gold_outside_label_space_is_rejected() {
        let header = DatasetHeader {
            name: "t".into(),
            labels: vec!["Yes".into(), "No".into()],
            kind: LabelKind::Binary,
            split_seed: 0,
        };
        let bad = vec![TaskInstance::new("a", "q", "Maybe"), TaskInstance::new("b", "q", "Yes")];
        assert!(matches!(
            assemble_dataset(&header, bad).unwrap_err().root(),
            Error::Dataset(_)
        ));
    }

    fn items(prefix: &str, n: usize) -> Vec<PreferenceItem> {
        (0..n).map(|i| PreferenceItem::new(format!("{prefix} {i}"))).collect()
    }

    #[test]
    fn preference_sampling() {
        let spec = PreferenceSpec {
            user_id: "1679".into(),
            in_history: items("owned", 300),
            out_of_history: items("other", 300),
            per_side_target: 250,
        };
        let d = build_preference_dataset(&spec, 5).unwrap();
        let all: Vec<_> = d.train.iter().chain(&d.test).collect();
        assert_eq!(all.len(), 500);
        assert_eq!(all.iter().filter(|i| i.gold == IN_LABEL).count(), 250);
        assert_eq!((d.train.len(), d.test.len()), (250, 250));
        assert!(all.iter().all(|i| i.user_id.as_deref() == Some("1679")));

        let small = PreferenceSpec {
            in_history: items("owned", 10),
            out_of_history: items("other", 10),
            ..spec.clone()
        };
        let d = build_preference_dataset(&small, 5).unwrap();
        assert_eq!(d.train.len() + d.test.len(), 20);

        let empty = PreferenceSpec {
            out_of_history: vec![],
            ..spec.clone()
        };
        assert!(build_preference_dataset(&empty, 5).is_err());
        let overlap = PreferenceSpec {
            out_of_history: items("owned", 3),
            ..spec
        };
        assert!(build_preference_dataset(&overlap, 5).is_err());
    }

    #[test]
    fn priority_picks_favorites() {
        let mut in_history = items("owned", 20);
        for (i, item) in in_history.iter_mut().enumerate() {
            item.priority = Some(i as f64);
        }
        let spec = PreferenceSpec {
            user_id: "u".into(),
            in_history,
            out_of_history: items("other", 20),
            per_side_target: 5,
        };
        let d = build_preference_dataset(&spec, 1).unwrap();
        let mut picked: Vec<String> = d
            .train
            .iter()
            .chain(&d.test)
            .filter(|i| i.gold == IN_LABEL)
            .map(|i| i.id.clone())
            .collect();
        picked.sort();
        assert_eq!(
            picked,
            ["u:in:00015", "u:in:00016", "u:in:00017", "u:in:00018", "u:in:00019"]
        );
    }

    #[test]
    fn synthetic_is_reproducible() {
        for kind in [
            SyntheticKind::KeyedBinary,
            SyntheticKind::KeyedMultichoice,
            SyntheticKind::PlantedPreference,
        ] {
            let spec = SyntheticTaskSpec::new(kind, 100, 1);
            let a = generate_synthetic(&spec).unwrap();
            assert_eq!(a, generate_synthetic(&spec).unwrap());
            assert_eq!(a.train.len() + a.test.len(), 100);
        }
    }

    #[test]
    fn keyed_binary_is_balanced_and_keyed() {
        let d = generate_synthetic(&SyntheticTaskSpec::new(SyntheticKind::KeyedBinary, 400, 2)).unwrap();
        let all: Vec<_> = d.train.iter().chain(&d.test).collect();
        assert_eq!(all.iter().filter(|i| i.gold == "Yes").count(), 200);
        for inst in all {
            let key = KEY_PHRASES.iter().position(|k| inst.question.contains(k)).unwrap();
            assert_eq!(inst.gold == "Yes", key < 4);
        }
    }

    #[test]
    fn multichoice_gold_is_near_uniform_and_marked() {
        let d = generate_synthetic(&SyntheticTaskSpec::new(SyntheticKind::KeyedMultichoice, 400, 1)).unwrap();
        let mut counts = BTreeMap::new();
        for inst in d.train.iter().chain(&d.test) {
            *counts.entry(inst.gold.clone()).or_insert(0usize) += 1;
            let marked: Vec<&str> = inst.question.lines().filter(|l| l.contains(MC_MARKER)).collect();
            assert_eq!(marked.len(), 1);
            assert!(marked[0].starts_with(&format!("{}.", inst.gold)));
        }
        assert_eq!(counts.len(), 4);
        for n in counts.values() {
            assert!((90..=110).contains(n), "{counts:?}");
        }
    }

    #[test]
    fn flipping_taste_flips_every_label() {
        let spec = SyntheticTaskSpec::new(SyntheticKind::PlantedPreference, 200, 3);
        let space = spec.label_space().unwrap();
        let taste = taste_vector(3);
        let negated: Vec<i64> = taste.iter().map(|w| -w).collect();
        let a = planted_preference(&spec, &space, &taste).unwrap();
        let b = planted_preference(&spec, &space, &negated).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.question, y.question);
            assert_ne!(x.gold, y.gold);
        }
    }

    proptest! {
        #[test]
        fn split_is_a_disjoint_partition(n in 2usize..200, seed in any::<u64>()) {
            let items = numbered(n);
            let (tr, te) = split(&items, seed).unwrap();
            prop_assert_eq!(tr.len(), n.div_ceil(2));
            let mut ids: Vec<_> = tr.iter().chain(&te).map(|i| i.id.clone()).collect();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), n);
        }
    }
}
