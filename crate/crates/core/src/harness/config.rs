//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::datasets::{generate_synthetic, load_dataset, split_by_user, SyntheticTaskSpec};
use crate::embed::{EmbedProvider, HashEmbedder, HttpEmbedder};
use crate::error::{Error, Result};
use crate::gateway::RetryPolicy;
use crate::gateway::{scripts, ChatBackend, OpenAiBackend};
use crate::memory::SummaryConfig;
use crate::model::{Dataset, StrategyKind, TaskInstance};
use crate::suggestibility::ProbeCondition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Reports, tables and the artifact store live here.
    pub output_dir: PathBuf,
    pub datasets: Vec<DatasetRef>,
    pub pa: BackendSpec,
    pub critic: BackendSpec,
    #[serde(default)]
    pub embedder: EmbedderSpec,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<StrategyKind>,
    #[serde(default = "full_fraction")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Extra retrieval depths evaluated alongside `k`.
    #[serde(default)]
    pub k_sweep: Vec<usize>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub summary: SummaryConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    /// Global limit on in-flight model calls per backend.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn all_strategies() -> Vec<StrategyKind> {
    StrategyKind::ALL.to_vec()
}

fn full_fraction() -> Vec<f64> {
    vec![1.0]
}

fn default_k() -> usize {
    5
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Replaces each dataset's own split seed when set.
    #[serde(default)]
    pub split: Option<u64>,
    #[serde(default)]
    pub subset: u64,
    #[serde(default)]
    pub flip: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default)]
    pub conditions: Vec<ProbeCondition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetRef {
    /// A `.jsonl` record file with its `.header.json` sidecar.
    File {
        path: PathBuf,
    },
    Synthetic(SyntheticTaskSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    /// Any OpenAI-compatible chat completions endpoint.
    Openai {
        model: String,
        #[serde(default = "default_base_url")]
        base_url: String,
        #[serde(default = "default_key_env")]
        api_key_env: String,
        #[serde(default)]
        max_output_tokens: Option<u32>,
    },
    Scripted {
        model: String,
        script: ScriptSpec,
    },
}

fn default_base_url() -> String {
    "https://api.openai.com/v1".into()
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_advice() -> String {
    "Read the cues in each question carefully before answering.".into()
}

/// Offline agents from [`crate::gateway::scripts`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptSpec {
    GoldOracle,
    Fixed {
        reply: String,
    },
    AssertionFollower {
        fallback: String,
    },
    CritiqueFollower {
        fallback: String,
    },
    ProbabilisticFollower {
        p: f64,
        seed: u64,
        fallback: String,
    },
    LabelEchoCritic {
        #[serde(default = "default_advice")]
        advice: String,
    },
    AdversarialCritic {
        #[serde(default = "default_advice")]
        advice: String,
    },
    ProseCritic {
        #[serde(default = "default_advice")]
        advice: String,
    },
}

impl BackendSpec {
    pub fn model(&self) -> &str {
        match self {
            BackendSpec::Openai { model, .. } | BackendSpec::Scripted { model, .. } => model,
        }
    }

    pub fn max_output_tokens(&self) -> Option<u32> {
        match self {
            BackendSpec::Openai { max_output_tokens, .. } => *max_output_tokens,
            BackendSpec::Scripted { .. } => None,
        }
    }

    pub fn is_live(&self) -> bool {
        matches!(self, BackendSpec::Openai { .. })
    }

    /// `datasets` supplies the questions a gold oracle knows about and the
    /// label space an adversarial critic rotates through.
    pub fn build(&self, datasets: &[Dataset], retry: &RetryPolicy) -> Result<Arc<dyn ChatBackend>> {
        Ok(match self {
            BackendSpec::Openai {
                model,
                base_url,
                api_key_env,
                ..
            } => Arc::new(OpenAiBackend::from_env(
                base_url,
                model,
                api_key_env,
                Duration::from_secs(retry.timeout_secs),
            )?),
            BackendSpec::Scripted { model, script } => {
                if let Some(label) = script.default_label() {
                    for d in datasets.iter().filter(|d| d.label_space.canonical(label).is_none()) {
                        tracing::warn!(model, label, dataset = %d.name, "scripted default answer is not a label of this dataset");
                    }
                }
                Arc::new(match script {
                    ScriptSpec::GoldOracle => {
                        scripts::gold_oracle(model, datasets.iter().flat_map(|d| d.train.iter().chain(&d.test)))
                    }
                    ScriptSpec::Fixed { reply } => scripts::fixed(model, reply),
                    ScriptSpec::AssertionFollower { fallback } => scripts::assertion_follower(model, fallback),
                    ScriptSpec::CritiqueFollower { fallback } => scripts::critique_follower(model, fallback),
                    ScriptSpec::ProbabilisticFollower { p, seed, fallback } => {
                        if !(0.0..=1.0).contains(p) {
                            return Err(Error::Config(format!("follow probability {p} outside [0, 1]")));
                        }
                        scripts::probabilistic_follower(model, *p, *seed, fallback)
                    }
                    ScriptSpec::LabelEchoCritic { advice } => scripts::label_echo_critic(model, advice),
                    ScriptSpec::AdversarialCritic { advice } => {
                        let mut spaces = datasets.iter().map(|d| &d.label_space);
                        let first = spaces
                            .next()
                            .ok_or_else(|| Error::Config("adversarial critic needs a dataset".into()))?;
                        if spaces.any(|s| s != first) {
                            return Err(Error::Config("adversarial critic needs one shared label space".into()));
                        }
                        scripts::adversarial_critic(model, first, advice)
                    }
                    ScriptSpec::ProseCritic { advice } => scripts::prose_critic(model, advice),
                })
            }
        })
    }
}

impl ScriptSpec {
    /// The label a performance-agent script answers when it has nothing to follow.
    fn default_label(&self) -> Option<&str> {
        match self {
            ScriptSpec::Fixed { reply } => Some(reply),
            ScriptSpec::AssertionFollower { fallback }
            | ScriptSpec::CritiqueFollower { fallback }
            | ScriptSpec::ProbabilisticFollower { fallback, .. } => Some(fallback),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderSpec {
    /// Offline feature-hashing embedder.
    Hash {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// OpenAI-compatible `/embeddings` endpoint.
    Http {
        model: String,
        #[serde(default = "default_base_url")]
        base_url: String,
        #[serde(default = "default_key_env")]
        api_key_env: String,
    },
}

fn default_dim() -> usize {
    256
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Hash { dim: default_dim() }
    }
}

impl EmbedderSpec {
    pub fn build(&self, retry: &RetryPolicy) -> Result<Arc<dyn EmbedProvider>> {
        Ok(match self {
            EmbedderSpec::Hash { dim } => Arc::new(HashEmbedder::new(*dim)?),
            EmbedderSpec::Http {
                model,
                base_url,
                api_key_env,
            } => {
                let key = std::env::var(api_key_env)
                    .map_err(|_| Error::Config(format!("environment variable {api_key_env} is not set")))?;
                Arc::new(HttpEmbedder::new(
                    base_url,
                    model.clone(),
                    Some(key),
                    Duration::from_secs(retry.timeout_secs),
                )?)
            }
        })
    }
}

impl RunConfig {
    /// Parses TOML; relative dataset paths and `output_dir` resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid run config: {e}")))?;
        config.output_dir = base.join(&config.output_dir);
        for d in &mut config.datasets {
            if let DatasetRef::File { path } = d {
                *path = base.join(&*path);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("run config lists no datasets".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("run config lists no strategies".into()));
        }
        if self.k == 0 || self.k_sweep.contains(&0) {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.fractions.is_empty() {
            return Err(Error::Config("run config lists no training fractions".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::Config(format!("training fraction {f} outside (0, 1]")));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be at least 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(Error::Config("retry.max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    /// Strategies in canonical order, deduplicated.
    pub fn strategy_list(&self) -> Vec<StrategyKind> {
        StrategyKind::ALL
            .into_iter()
            .filter(|s| self.strategies.contains(s))
            .collect()
    }

    /// Fractions ascending, deduplicated.
    pub fn fraction_list(&self) -> Vec<f64> {
        let mut f = self.fractions.clone();
        f.sort_by(f64::total_cmp);
        f.dedup();
        f
    }

    /// `k` followed by the sweep values, deduplicated, ascending.
    pub fn k_list(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = std::iter::once(self.k).chain(self.k_sweep.iter().copied()).collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    pub fn load_datasets(&self) -> Result<Vec<Dataset>> {
        self.datasets
            .iter()
            .map(|r| {
                let d = match r {
                    DatasetRef::File { path } => load_dataset(path)?,
                    DatasetRef::Synthetic(spec) => generate_synthetic(spec)?,
                };
                match self.seeds.split {
                    Some(seed) if seed != d.split_seed => resplit(d, seed),
                    _ => Ok(d),
                }
            })
            .collect()
    }
}

fn resplit(d: Dataset, seed: u64) -> Result<Dataset> {
    let all: Vec<TaskInstance> = d.train.into_iter().chain(d.test).collect();
    let (train, test) = split_by_user(&all, seed)?;
    Dataset {
        train,
        test,
        split_seed: seed,
        ..d
    }
    .validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::SyntheticKind;

    const EXAMPLE: &str = r#"
output_dir = "out"
strategies = ["zero_shot", "ep_crit"]
fractions = [0.5, 0.25]
k_sweep = [1, 10]

[[datasets]]
source = "synthetic"
kind = "keyed_binary"
size = 40
seed = 1

[[datasets]]
source = "file"
path = "data/steam.jsonl"

[pa]
type = "scripted"
model = "follower"
script = { name = "critique_follower", fallback = "Yes" }

[critic]
type = "openai"
model = "gpt-4o-mini"
max_output_tokens = 512

[seeds]
subset = 3
flip = 9
"#;

    #[test]
    fn parses_example() {
        let c = RunConfig::from_toml(EXAMPLE, Path::new("/runs")).unwrap();
        assert_eq!(c.output_dir, PathBuf::from("/runs/out"));
        assert_eq!(
            c.datasets[0],
            DatasetRef::Synthetic(SyntheticTaskSpec::new(SyntheticKind::KeyedBinary, 40, 1))
        );
        assert_eq!(
            c.datasets[1],
            DatasetRef::File {
                path: "/runs/data/steam.jsonl".into()
            }
        );
        assert_eq!(c.strategy_list(), [StrategyKind::ZeroShot, StrategyKind::EpCrit]);
        assert_eq!(c.fraction_list(), [0.25, 0.5]);
        assert_eq!(c.k_list(), [1, 5, 10]);
        assert_eq!(c.critic.max_output_tokens(), Some(512));
        assert_eq!(c.embedder, EmbedderSpec::Hash { dim: 256 });
        assert_eq!(c.seeds.flip, 9);
        assert_eq!(c.summary, SummaryConfig::default());
    }

    #[test]
    fn rejects_bad_values() {
        for (from, to) in [
            ("k_sweep = [1, 10]", "k_sweep = [0]"),
            ("fractions = [0.5, 0.25]", "fractions = [1.5]"),
            ("fractions = [0.5, 0.25]", "fractions = []"),
            ("seed = 1", "seed = 1\nbogus = 2"),
            ("[seeds]", "[seeds]\nsplit_seed = 4"),
        ] {
            let text = EXAMPLE.replace(from, to);
            assert!(RunConfig::from_toml(&text, Path::new(".")).is_err(), "{to}");
        }
    }

    #[test]
    fn missing_credentials_are_a_config_error() {
        let spec = BackendSpec::Openai {
            model: "m".into(),
            base_url: default_base_url(),
            api_key_env: "CRITMEM_TEST_SURELY_UNSET".into(),
            max_output_tokens: None,
        };
        let err = spec.build(&[], &RetryPolicy::default()).err().unwrap();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }
}
