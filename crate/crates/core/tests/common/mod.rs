//! Shared prompt fixture for the golden-file checks.

use std::path::PathBuf;

use critmem::embed::{HashEmbedder, VectorIndex};
use critmem::gateway::Usage;
use critmem::memory::{EpisodicEntry, EpisodicStore, LabeledExamples, SemanticMemory};
use critmem::prompts::{assemble, AssembledPrompt, MemoryView};
use critmem::suggestibility::{build_probe_prompt, ProbeCondition};
use critmem::{Critique, StrategyKind, TaskInstance};

pub fn critique(label: &str, local: &str, global: &str) -> Critique {
    Critique {
        assertion: label.into(),
        rationale: local.into(),
        reflection: global.into(),
        raw: String::new(),
        assertion_overridden: false,
        parse_fallback: false,
    }
}

pub struct Fixture {
    episodic: EpisodicStore,
    labeled: LabeledExamples,
    semantic: SemanticMemory,
    query: TaskInstance,
    embedder: HashEmbedder,
}

pub fn fixture() -> Fixture {
    let embedder = HashEmbedder::new(64).unwrap();
    let train = [
        (
            TaskInstance::new(
                "tr-1",
                "Does the trial report lower blood pressure with drug A? Answer Yes or No.",
                "Yes",
            ),
            "No",
            critique(
                "Yes",
                "The abstract states a significant reduction with drug A.",
                "Look for explicit outcome statements before answering.",
            ),
        ),
        (
            TaskInstance::new(
                "tr-2",
                "Does the cohort study link drug A to liver damage? Answer Yes or No.",
                "No",
            ),
            "No",
            critique(
                "No",
                "No hepatic events were recorded in the cohort.",
                "Absence of reported events argues against the link.",
            ),
        ),
        (
            TaskInstance::new(
                "tr-3",
                "Is the sample in the drug B study larger than 500? Answer Yes or No.",
                "Yes",
            ),
            "Yes",
            critique(
                "Yes",
                "The methods list 812 participants.",
                "Check the methods section for counts.",
            ),
        ),
    ];
    let entries: Vec<EpisodicEntry> = train
        .iter()
        .map(|(inst, initial, c)| EpisodicEntry {
            instance: inst.clone(),
            pa_initial: initial.to_string(),
            critique: c.clone(),
            embedding: embedder.embed_one(&inst.question).unwrap(),
        })
        .collect();
    let labeled_index =
        VectorIndex::from_entries(64, entries.iter().map(|e| (e.instance.id.clone(), e.embedding.clone()))).unwrap();
    Fixture {
        labeled: LabeledExamples::new(train.iter().map(|t| t.0.clone()).collect(), labeled_index).unwrap(),
        episodic: EpisodicStore::new(entries).unwrap(),
        semantic: SemanticMemory {
            advice: "1. Trust outcome statements in the abstract.\n2. Absence of reported harms means No.".into(),
            source_entry_ids: vec!["tr-1".into(), "tr-2".into(), "tr-3".into()],
            built_from_fraction: 1.0,
            chunk_count: 1,
            usage: Usage::default(),
        },
        query: TaskInstance::new(
            "te-1",
            "Does the trial report lower cholesterol with drug A? Answer Yes or No.",
            "Yes",
        ),
        embedder,
    }
}

pub fn render(prompt: &AssembledPrompt) -> String {
    let mut out = serde_json::to_string_pretty(&prompt.messages).unwrap();
    out.push('\n');
    out
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/prompts")
        .join(format!("{name}.json"))
}

/// Compares against the fixture, or rewrites it when `UPDATE_GOLDEN` is set.
pub fn check(name: &str, actual: &str) -> Result<(), String> {
    let path = fixture_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("missing fixture {}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!(
            "{name} prompt differs from its fixture\n--- expected\n{expected}\n--- actual\n{actual}"
        ))
    }
}

pub fn strategy_prompt(f: &Fixture, strategy: StrategyKind) -> AssembledPrompt {
    let view = MemoryView {
        episodic: Some(&f.episodic),
        labeled: Some(&f.labeled),
        semantic: Some(&f.semantic),
        k: 2,
    };
    let query = f.embedder.embed_one(&f.query.question).unwrap();
    assemble(strategy, &f.query, Some(&query), view).unwrap()
}

/// Fixture name and rendering for every strategy and probe condition.
pub fn all_prompts() -> Vec<(String, String)> {
    let f = fixture();
    let mut out: Vec<(String, String)> = StrategyKind::ALL
        .into_iter()
        .map(|s| (s.as_str().to_string(), render(&strategy_prompt(&f, s))))
        .collect();
    let c = critique(
        "No",
        "The trial found no change in cholesterol.",
        "Lipid outcomes need their own measurement.",
    );
    for condition in ProbeCondition::ALL {
        let critique = condition.needs_critique().then_some(&c);
        let prompt = build_probe_prompt(condition, &f.query, "No", critique).unwrap();
        out.push((format!("probe_{}", condition.slug()), render(&prompt)));
    }
    out
}
