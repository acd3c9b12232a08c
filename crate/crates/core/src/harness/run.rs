//! Experiment orchestration over the artifact store.
//!
//! Each (dataset, user) unit is processed in stages: question indexes,
//! critiques and semantic memory per training fraction, one evaluation per
//! (strategy, fraction, k) cell, and the suggestibility probe. Every stage
//! output is a write-once artifact keyed by a chained configuration hash,
//! so reruns only compute what is missing and `report` never calls a model.

use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::report::{
    CellFailure, CellReport, Provenance, RunReport, SuggestibilityRow, TokenTotals, UserScore, UserSuggestibility,
};
use crate::critique::{build_training_memory, CritiqueRecord};
use crate::embed::{embed, EmbedProvider, Embedding, VectorIndex};
use crate::error::{Error, Result};
use crate::gateway::{ChatBackend, Gateway, MeterSnapshot, Phase, TokenMeter, Usage};
use crate::memory::{summarize, EpisodicStore, LabeledExamples, SemanticMemory};
use crate::model::{Dataset, PredictionRecord, StrategyKind, TaskInstance};
use crate::prompts::{assemble, AssembledPrompt, MemoryView, TEMPLATE_VERSION};
use crate::store::{chain_hash, config_hash, ArtifactKey, ArtifactKind, ArtifactStore};
use crate::suggestibility::{run_probe_prepared, ProbeCondition, ProbeMaterials, ProbeOutcome};

/// Persisted critique pass for one training fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueArtifact {
    pub fraction: f64,
    pub records: Vec<CritiqueRecord>,
    pub usage: Usage,
}

/// Persisted predictions for one evaluation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalArtifact {
    pub strategy: StrategyKind,
    pub fraction: Option<f64>,
    pub k: Option<usize>,
    pub memory_size: usize,
    pub predictions: Vec<PredictionRecord>,
    pub retrieved: Vec<Vec<String>>,
    pub usage: Usage,
}

impl EvalArtifact {
    pub fn correct(&self) -> usize {
        self.predictions.iter().filter(|p| p.correct).count()
    }
}

/// Which stages a harness invocation performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub train: bool,
    pub eval: bool,
    pub probe: bool,
    /// Only read existing artifacts; never call a model.
    pub cached_only: bool,
}

impl Stages {
    pub const TRAIN: Stages = Stages {
        train: true,
        eval: false,
        probe: false,
        cached_only: false,
    };
    pub const EVAL: Stages = Stages {
        train: true,
        eval: true,
        probe: false,
        cached_only: false,
    };
    pub const PROBE: Stages = Stages {
        train: false,
        eval: false,
        probe: true,
        cached_only: false,
    };
    pub const ALL: Stages = Stages {
        train: true,
        eval: true,
        probe: true,
        cached_only: false,
    };
    pub const REPORT: Stages = Stages {
        train: false,
        eval: true,
        probe: true,
        cached_only: true,
    };
}

/// One dataset restricted to one user.
struct Unit {
    dataset: Dataset,
    user: Option<String>,
    digest: String,
}

struct UnitIndexes {
    train: VectorIndex,
    test: Vec<Embedding>,
    hash: String,
}

/// Memory built for one training fraction.
struct FractionMemory {
    fraction: f64,
    episodic: EpisodicStore,
    semantic: Option<SemanticMemory>,
    critique_usage: Usage,
    hash: String,
}

impl FractionMemory {
    /// Critique tokens, plus summarization when the strategy uses semantic memory.
    fn training_usage(&self, with_semantic: bool) -> Usage {
        match (&self.semantic, with_semantic) {
            (Some(s), true) => self.critique_usage + s.usage,
            _ => self.critique_usage,
        }
    }
}

pub struct Harness {
    config: RunConfig,
    datasets: Vec<Dataset>,
    pa: Gateway,
    critic: Gateway,
    embedder: Arc<dyn EmbedProvider>,
    meter: Arc<TokenMeter>,
    store: ArtifactStore,
    base_hash: String,
}

impl Harness {
    /// Loads datasets and builds backends from the config.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let datasets = config.load_datasets()?;
        let pa = config.pa.build(&datasets, &config.retry)?;
        let critic = config.critic.build(&datasets, &config.retry)?;
        let embedder = config.embedder.build(&config.retry)?;
        Self::with_backends(config, datasets, pa, critic, embedder)
    }

    /// Uses caller-supplied backends. Artifact keys still derive from the
    /// config's backend specs, so those should describe the backends.
    pub fn with_backends(
        config: RunConfig,
        datasets: Vec<Dataset>,
        pa: Arc<dyn ChatBackend>,
        critic: Arc<dyn ChatBackend>,
        embedder: Arc<dyn EmbedProvider>,
    ) -> Result<Self> {
        config.validate()?;
        let meter = Arc::new(TokenMeter::new());
        let gateway = |backend: Arc<dyn ChatBackend>, max: Option<u32>| {
            Gateway::builder(backend)
                .meter(meter.clone())
                .retry(config.retry.clone())
                .in_flight(config.concurrency)
                .max_output_tokens(max)
                .build()
        };
        let pa = gateway(pa, config.pa.max_output_tokens());
        let critic = gateway(critic, config.critic.max_output_tokens());
        let store = ArtifactStore::open(config.output_dir.join("artifacts"))?;
        let base_hash = config_hash(&(TEMPLATE_VERSION, embedder.id()));
        Ok(Self {
            config,
            datasets,
            pa,
            critic,
            embedder,
            meter,
            store,
            base_hash,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn datasets(&self) -> &[Dataset] {
        &self.datasets
    }

    pub fn store(&self) -> &ArtifactStore {
        &self.store
    }

    /// Live token meter over every call this harness has made.
    pub fn meter(&self) -> MeterSnapshot {
        self.meter.snapshot()
    }

    pub fn train(&self) -> Result<RunReport> {
        self.execute(Stages::TRAIN)
    }

    pub fn eval(&self) -> Result<RunReport> {
        self.execute(Stages::EVAL)
    }

    /// Runs the configured probe conditions, or all three when none are
    /// configured.
    pub fn probe(&self) -> Result<RunReport> {
        self.execute(Stages::PROBE)
    }

    /// Assembles a report from stored artifacts only.
    pub fn report(&self) -> Result<RunReport> {
        self.execute(Stages::REPORT)
    }

    pub fn run(&self) -> Result<RunReport> {
        let report = self.execute(Stages::ALL)?;
        if report.is_complete() {
            self.store.put(&self.report_key(), report.to_json().as_bytes())?;
        }
        Ok(report)
    }

    fn report_key(&self) -> ArtifactKey {
        ArtifactKey {
            kind: ArtifactKind::Report,
            dataset: "run".into(),
            user_id: None,
            critic_model: self.config.critic.model().to_string(),
            fraction: None,
            template_version: TEMPLATE_VERSION.into(),
            config_hash: self.run_hash(),
            variant: None,
        }
    }

    fn run_hash(&self) -> String {
        let mut config = self.config.clone();
        config.output_dir = Default::default();
        chain_hash(&self.base_hash, &config)
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.run_hash(),
            template_version: TEMPLATE_VERSION.into(),
            pa_model: self.config.pa.model().into(),
            critic_model: self.config.critic.model().into(),
            embedder: self.embedder.id(),
            k: self.config.k,
            fractions: self.config.fraction_list(),
        }
    }

    fn probe_conditions(&self, stages: Stages) -> Vec<ProbeCondition> {
        let configured = &self.config.probe.conditions;
        if configured.is_empty() && stages.probe && !stages.eval {
            ProbeCondition::ALL.to_vec()
        } else {
            ProbeCondition::ALL
                .into_iter()
                .filter(|c| configured.contains(c))
                .collect()
        }
    }

    fn units(&self) -> Vec<Unit> {
        self.datasets
            .iter()
            .flat_map(|d| {
                d.users().into_iter().map(move |user| {
                    let dataset = d.for_user(user.as_deref());
                    let digest = config_hash(&dataset);
                    Unit { dataset, user, digest }
                })
            })
            .collect()
    }

    fn key(
        &self,
        kind: ArtifactKind,
        unit: &Unit,
        critic_model: &str,
        fraction: Option<f64>,
        hash: &str,
    ) -> ArtifactKey {
        ArtifactKey {
            kind,
            dataset: unit.dataset.name.clone(),
            user_id: unit.user.clone(),
            critic_model: critic_model.to_string(),
            fraction,
            template_version: TEMPLATE_VERSION.into(),
            config_hash: hash.to_string(),
            variant: None,
        }
    }

    fn fetch<T: Serialize + DeserializeOwned>(
        &self,
        stages: Stages,
        key: &ArtifactKey,
        build: impl FnOnce() -> Result<T>,
    ) -> Result<T> {
        if let Some(value) = self.store.get_json(key)? {
            return Ok(value);
        }
        if stages.cached_only {
            return Err(Error::Aggregation(format!(
                "artifact {} has not been built",
                self.store.path(key).display()
            )));
        }
        let value = build()?;
        self.store.put_json(key, &value)?;
        Ok(value)
    }

    fn fetch_index(&self, stages: Stages, key: &ArtifactKey, questions: &[TaskInstance]) -> Result<VectorIndex> {
        if let Some(bytes) = self.store.get(key)? {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::Integrity(format!("index {} is not UTF-8", self.store.path(key).display())))?;
            return VectorIndex::from_text(&text);
        }
        if stages.cached_only {
            return Err(Error::Aggregation(format!(
                "index {} has not been built",
                self.store.path(key).display()
            )));
        }
        let texts: Vec<String> = questions.iter().map(|q| q.question.clone()).collect();
        let vectors = embed(&texts, self.embedder.as_ref())?;
        let dim = vectors[0].dim();
        let index = VectorIndex::from_entries(dim, questions.iter().map(|q| q.id.clone()).zip(vectors))?;
        self.store.put(key, index.to_text().as_bytes())?;
        Ok(index)
    }

    fn indexes(&self, stages: Stages, unit: &Unit) -> Result<UnitIndexes> {
        let hash = chain_hash(&self.base_hash, &unit.digest);
        let embedder = self.embedder.id();
        let mut key = self.key(ArtifactKind::Index, unit, &embedder, None, &hash);
        key.variant = Some("train".into());
        let train = self.fetch_index(stages, &key, &unit.dataset.train)?;
        key.variant = Some("test".into());
        let test_index = self.fetch_index(stages, &key, &unit.dataset.test)?;
        let test = unit
            .dataset
            .test
            .iter()
            .zip(test_index.entries())
            .map(|(inst, (id, v))| {
                if &inst.id == id {
                    Ok(v.clone())
                } else {
                    Err(Error::Integrity(format!("test index out of order at {id:?}")))
                }
            })
            .collect::<Result<_>>()?;
        Ok(UnitIndexes { train, test, hash })
    }

    fn fraction_memory(
        &self,
        stages: Stages,
        unit: &Unit,
        indexes: &UnitIndexes,
        fraction: f64,
        with_semantic: bool,
    ) -> Result<FractionMemory> {
        let hash = chain_hash(
            &indexes.hash,
            &(&self.config.pa, &self.config.critic, self.config.seeds.subset, fraction),
        );
        let critic_model = self.config.critic.model();
        let key = self.key(ArtifactKind::Critiques, unit, critic_model, Some(fraction), &hash);
        let critiques: CritiqueArtifact = self.fetch(stages, &key, || {
            let outcome = build_training_memory(
                &unit.dataset.train,
                &unit.dataset.label_space,
                &self.pa,
                &self.critic,
                self.embedder.as_ref(),
                fraction,
                self.config.seeds.subset,
            )?;
            tracing::info!(
                dataset = %unit.dataset.name,
                fraction,
                entries = outcome.records.len(),
                overridden = outcome.overridden(),
                fallbacks = outcome.fallbacks(),
                "critiques built"
            );
            Ok(CritiqueArtifact {
                fraction,
                records: outcome.records,
                usage: outcome.usage,
            })
        })?;
        let vectors: std::collections::HashMap<&str, &Embedding> =
            indexes.train.entries().iter().map(|(id, e)| (id.as_str(), e)).collect();
        let subset = critiques
            .records
            .iter()
            .map(|r| {
                vectors
                    .get(r.instance_id.as_str())
                    .map(|e| (r.instance_id.clone(), (*e).clone()))
                    .ok_or_else(|| Error::Integrity(format!("critique for unindexed instance {:?}", r.instance_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let index = VectorIndex::from_entries(indexes.train.dim(), subset)?;
        let episodic = EpisodicStore::from_records(&critiques.records, &unit.dataset.train, index)?;
        let semantic = if with_semantic {
            let sem_hash = chain_hash(&hash, &self.config.summary);
            let key = self.key(ArtifactKind::Semantic, unit, critic_model, Some(fraction), &sem_hash);
            Some(self.fetch(stages, &key, || {
                summarize(episodic.entries(), &self.critic, &self.config.summary, fraction)
            })?)
        } else {
            None
        };
        Ok(FractionMemory {
            fraction,
            episodic,
            semantic,
            critique_usage: critiques.usage,
            hash,
        })
    }

    /// Prompt for one test instance, as the evaluation would send it.
    fn prompt_for(
        &self,
        strategy: StrategyKind,
        instance: &TaskInstance,
        query: &Embedding,
        labeled: Option<&LabeledExamples>,
        memory: Option<&FractionMemory>,
        k: usize,
    ) -> Result<AssembledPrompt> {
        let view = MemoryView {
            episodic: memory.map(|m| &m.episodic),
            labeled,
            semantic: memory.and_then(|m| m.semantic.as_ref()),
            k,
        };
        assemble(strategy, instance, Some(query), view)
    }

    #[allow(clippy::too_many_arguments)]
    fn eval_cell(
        &self,
        stages: Stages,
        unit: &Unit,
        indexes: &UnitIndexes,
        labeled: Option<&LabeledExamples>,
        memory: Option<&FractionMemory>,
        strategy: StrategyKind,
        k: Option<usize>,
    ) -> Result<EvalArtifact> {
        let parent = memory.map(|m| m.hash.as_str()).unwrap_or(&indexes.hash);
        let hash = chain_hash(parent, &(strategy, k, &self.config.pa));
        let critic_model = if strategy.is_baseline() {
            "none"
        } else {
            self.config.critic.model()
        };
        let fraction = memory.map(|m| m.fraction);
        let mut key = self.key(ArtifactKind::Eval, unit, critic_model, fraction, &hash);
        key.variant = Some(match k {
            Some(k) => format!("{strategy}-k{k}"),
            None => strategy.to_string(),
        });
        let memory_size = match strategy {
            StrategyKind::ZeroShot => 0,
            StrategyKind::EpLabel => labeled.map_or(0, |l| l.len()),
            _ => memory.map_or(0, |m| m.episodic.len()),
        };
        self.fetch(stages, &key, || {
            let space = &unit.dataset.label_space;
            let results: Vec<(PredictionRecord, Vec<String>)> = unit
                .dataset
                .test
                .par_iter()
                .zip(indexes.test.par_iter())
                .map(|(instance, query)| {
                    let prompt =
                        self.prompt_for(strategy, instance, query, labeled, memory, k.unwrap_or(self.config.k))?;
                    let out = self
                        .pa
                        .complete(prompt.messages, Phase::Utilization)
                        .map_err(|e| e.context(format!("{strategy} on {}", instance.id)))?;
                    let record = PredictionRecord::score(
                        instance,
                        strategy,
                        out.text,
                        space,
                        out.prompt_tokens,
                        out.completion_tokens,
                    );
                    Ok((record, prompt.retrieved_ids))
                })
                .collect::<Result<_>>()?;
            let usage = results
                .iter()
                .map(|(r, _)| Usage::new(r.prompt_tokens, r.completion_tokens))
                .sum();
            let (predictions, retrieved) = results.into_iter().unzip();
            Ok(EvalArtifact {
                strategy,
                fraction,
                k,
                memory_size,
                predictions,
                retrieved,
                usage,
            })
        })
    }

    fn probe_unit(
        &self,
        stages: Stages,
        unit: &Unit,
        conditions: &[ProbeCondition],
    ) -> Result<(Usage, Vec<ProbeOutcome>)> {
        let with_critiques = conditions.iter().any(|c| c.needs_critique());
        let hash = chain_hash(
            &chain_hash(&self.base_hash, &unit.digest),
            &(
                &self.config.pa,
                &self.config.critic,
                self.config.seeds.flip,
                with_critiques,
            ),
        );
        let critic_model = self.config.critic.model();
        let mut key = self.key(ArtifactKind::Probe, unit, critic_model, None, &hash);
        key.variant = Some("materials".into());
        let materials: ProbeMaterials = self.fetch(stages, &key, || {
            ProbeMaterials::prepare(
                &unit.dataset,
                &self.pa,
                &self.critic,
                self.config.seeds.flip,
                with_critiques,
            )
        })?;
        let outcomes = conditions
            .iter()
            .map(|&condition| {
                let mut key = key.clone();
                key.variant = Some(condition.slug().into());
                self.fetch(stages, &key, || {
                    run_probe_prepared(&materials, condition, &unit.dataset.label_space, &self.pa)
                })
            })
            .collect::<Result<_>>()?;
        Ok((materials.usage, outcomes))
    }

    /// Renders the prompt `strategy` would send for one instance, building
    /// (or loading) the memory it needs.
    pub fn dump_prompt(
        &self,
        dataset: Option<&str>,
        instance_id: &str,
        strategy: StrategyKind,
        fraction: Option<f64>,
        k: Option<usize>,
    ) -> Result<AssembledPrompt> {
        let units = self.units();
        let (unit, position) = units
            .iter()
            .filter(|u| dataset.is_none_or(|d| u.dataset.name == d))
            .find_map(|u| u.dataset.test.iter().position(|i| i.id == instance_id).map(|p| (u, p)))
            .ok_or_else(|| Error::Config(format!("no test instance {instance_id:?} in the configured datasets")))?;
        let stages = Stages::TRAIN;
        let indexes = self.indexes(stages, unit)?;
        let labeled = LabeledExamples::new(unit.dataset.train.clone(), indexes.train.clone())?;
        let fraction = fraction.unwrap_or_else(|| self.config.fraction_list().last().copied().unwrap_or(1.0));
        let memory = if strategy.needs_critiques() {
            Some(self.fraction_memory(stages, unit, &indexes, fraction, strategy.needs_semantic())?)
        } else {
            None
        };
        self.prompt_for(
            strategy,
            &unit.dataset.test[position],
            &indexes.test[position],
            Some(&labeled),
            memory.as_ref(),
            k.unwrap_or(self.config.k),
        )
    }

    /// Runs the requested stages over every unit, recording failures per
    /// cell instead of aborting.
    pub fn execute(&self, stages: Stages) -> Result<RunReport> {
        let strategies = self.config.strategy_list();
        let fractions = self.config.fraction_list();
        let ks = self.config.k_list();
        let conditions = self.probe_conditions(stages);
        let need_semantic = strategies.iter().any(|s| s.needs_semantic());
        let need_critiques = strategies.iter().any(|s| s.needs_critiques());

        let mut failures = Vec::new();
        let mut per_cell: Vec<(CellKey, UserScore, Usage, Usage)> = Vec::new();
        let mut per_probe: Vec<(String, Option<String>, ProbeOutcome)> = Vec::new();
        let mut tokens = TokenTotals::default();

        for unit in self.units() {
            let fail = |stage: String, e: Error| CellFailure {
                dataset: unit.dataset.name.clone(),
                user: unit.user.clone(),
                stage,
                message: e.to_string(),
            };
            if stages.train || stages.eval {
                let built = self
                    .indexes(stages, &unit)
                    .and_then(|i| LabeledExamples::new(unit.dataset.train.clone(), i.train.clone()).map(|l| (i, l)));
                let (indexes, labeled) = match built {
                    Ok(pair) => pair,
                    Err(e) => {
                        failures.push(fail("index".into(), e));
                        continue;
                    }
                };
                let mut memories = Vec::new();
                if need_critiques {
                    for &fraction in &fractions {
                        match self.fraction_memory(stages, &unit, &indexes, fraction, need_semantic) {
                            Ok(m) => memories.push(m),
                            Err(e) => failures.push(fail(format!("train f={fraction}"), e)),
                        }
                    }
                }
                for m in &memories {
                    tokens.training += m.training_usage(need_semantic);
                }
                if !stages.eval {
                    continue;
                }
                for &strategy in &strategies {
                    let depth: Vec<Option<usize>> = if strategy.uses_retrieval() {
                        ks.iter().map(|k| Some(*k)).collect()
                    } else {
                        vec![None]
                    };
                    let memory_options: Vec<Option<&FractionMemory>> = if strategy.needs_critiques() {
                        fractions
                            .iter()
                            .map(|f| memories.iter().find(|m| (m.fraction - f).abs() < 1e-12))
                            .filter(Option::is_some)
                            .collect()
                    } else {
                        vec![None]
                    };
                    for memory in &memory_options {
                        for k in &depth {
                            let stage = cell_stage(strategy, memory.map(|m| m.fraction), *k);
                            match self.eval_cell(stages, &unit, &indexes, Some(&labeled), *memory, strategy, *k) {
                                Ok(art) => {
                                    let training = memory
                                        .map_or(Usage::default(), |m| m.training_usage(strategy.needs_semantic()));
                                    let n = art.predictions.len();
                                    let correct = art.correct();
                                    tokens.utilization += art.usage;
                                    per_cell.push((
                                        CellKey {
                                            dataset: unit.dataset.name.clone(),
                                            strategy,
                                            fraction: memory.map(|m| m.fraction),
                                            k: *k,
                                        },
                                        UserScore {
                                            user: unit.user.clone(),
                                            n,
                                            correct,
                                            accuracy: correct as f64 / n as f64,
                                            memory_size: art.memory_size,
                                        },
                                        training,
                                        art.usage,
                                    ));
                                }
                                Err(e) => failures.push(fail(stage, e)),
                            }
                        }
                    }
                }
            }
            if stages.probe && !conditions.is_empty() {
                match self.probe_unit(stages, &unit, &conditions) {
                    Ok((preparation, outcomes)) => {
                        tokens.probe += preparation;
                        for outcome in outcomes {
                            tokens.probe += outcome.usage;
                            per_probe.push((unit.dataset.name.clone(), unit.user.clone(), outcome));
                        }
                    }
                    Err(e) => failures.push(fail("probe".into(), e)),
                }
            }
        }
        Ok(RunReport {
            provenance: self.provenance(),
            cells: collect_cells(per_cell),
            suggestibility: collect_probes(per_probe),
            tokens,
            failures,
        })
    }
}

fn cell_stage(strategy: StrategyKind, fraction: Option<f64>, k: Option<usize>) -> String {
    let mut stage = format!("eval {strategy}");
    if let Some(f) = fraction {
        stage.push_str(&format!(" f={f}"));
    }
    if let Some(k) = k {
        stage.push_str(&format!(" k={k}"));
    }
    stage
}

#[derive(Debug, Clone, PartialEq)]
struct CellKey {
    dataset: String,
    strategy: StrategyKind,
    fraction: Option<f64>,
    k: Option<usize>,
}

fn collect_cells(rows: Vec<(CellKey, UserScore, Usage, Usage)>) -> Vec<CellReport> {
    let mut cells: Vec<CellReport> = Vec::new();
    for (key, score, training, utilization) in rows {
        let existing = cells.iter_mut().find(|c| {
            c.dataset == key.dataset && c.strategy == key.strategy && c.fraction == key.fraction && c.k == key.k
        });
        match existing {
            Some(cell) => {
                cell.users.push(score);
                cell.training_tokens += training;
                cell.utilization_tokens += utilization;
            }
            None => cells.push(CellReport {
                dataset: key.dataset,
                strategy: key.strategy,
                fraction: key.fraction,
                k: key.k,
                users: vec![score],
                accuracy: 0.0,
                training_tokens: training,
                utilization_tokens: utilization,
            }),
        }
    }
    for cell in &mut cells {
        cell.accuracy = cell.users.iter().map(|u| u.accuracy).sum::<f64>() / cell.users.len() as f64;
    }
    cells
}

fn collect_probes(rows: Vec<(String, Option<String>, ProbeOutcome)>) -> Vec<SuggestibilityRow> {
    let mut out: Vec<SuggestibilityRow> = Vec::new();
    for (dataset, user, outcome) in rows {
        let entry = UserSuggestibility {
            user,
            report: outcome.report,
        };
        match out
            .iter_mut()
            .find(|r| r.dataset == dataset && r.condition == entry.report.condition)
        {
            Some(row) => row.users.push(entry),
            None => out.push(SuggestibilityRow {
                dataset,
                condition: entry.report.condition,
                users: vec![entry],
                acc_best: 0.0,
                acc_adversarial: 0.0,
                s: 0.0,
            }),
        }
    }
    for row in &mut out {
        let n = row.users.len() as f64;
        row.acc_best = row.users.iter().map(|u| u.report.acc_best).sum::<f64>() / n;
        row.acc_adversarial = row.users.iter().map(|u| u.report.acc_adversarial).sum::<f64>() / n;
        row.s = row.users.iter().map(|u| u.report.s).sum::<f64>() / n;
    }
    out
}
