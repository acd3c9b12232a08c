//! Serializable run results and cross-dataset aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::Usage;
use crate::model::StrategyKind;
use crate::suggestibility::{ProbeCondition, SuggestibilityReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub template_version: String,
    pub pa_model: String,
    pub critic_model: String,
    pub embedder: String,
    /// Default retrieval depth; headline cells use it.
    pub k: usize,
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserScore {
    pub user: Option<String>,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Entries available to the strategy (episodic entries, summarized
    /// critiques, or labeled examples).
    pub memory_size: usize,
}

/// One (dataset, strategy, fraction, k) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub dataset: String,
    pub strategy: StrategyKind,
    /// `None` for baselines, which do not depend on the training fraction.
    pub fraction: Option<f64>,
    /// `None` for strategies without retrieval.
    pub k: Option<usize>,
    pub users: Vec<UserScore>,
    /// Mean of the per-user accuracies.
    pub accuracy: f64,
    pub training_tokens: Usage,
    pub utilization_tokens: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSuggestibility {
    pub user: Option<String>,
    pub report: SuggestibilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestibilityRow {
    pub dataset: String,
    pub condition: ProbeCondition,
    pub users: Vec<UserSuggestibility>,
    pub acc_best: f64,
    pub acc_adversarial: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub dataset: String,
    pub user: Option<String>,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenTotals {
    pub training: Usage,
    pub utilization: Usage,
    /// Probe calls: critique preparation and both arms.
    pub probe: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub cells: Vec<CellReport>,
    pub suggestibility: Vec<SuggestibilityRow>,
    pub tokens: TokenTotals,
    pub failures: Vec<CellFailure>,
}

fn same_fraction(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-9,
        (None, None) => true,
        _ => false,
    }
}

impl RunReport {
    /// Dataset names in first-seen order.
    pub fn datasets(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        let all = self
            .cells
            .iter()
            .map(|c| &c.dataset)
            .chain(self.suggestibility.iter().map(|s| &s.dataset));
        for name in all {
            if !names.contains(name) {
                names.push(name.clone());
            }
        }
        names
    }

    pub fn cell(
        &self,
        dataset: &str,
        strategy: StrategyKind,
        fraction: Option<f64>,
        k: Option<usize>,
    ) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.strategy == strategy && same_fraction(c.fraction, fraction) && c.k == k)
    }

    /// The cell shown in the main accuracy table: largest fraction and the
    /// default `k`.
    pub fn headline(&self, dataset: &str, strategy: StrategyKind) -> Option<&CellReport> {
        let fraction = if strategy.is_baseline() {
            None
        } else {
            self.provenance.fractions.iter().copied().reduce(f64::max)
        };
        let k = strategy.uses_retrieval().then_some(self.provenance.k);
        self.cell(dataset, strategy, fraction, k)
    }

    pub fn suggestibility_row(&self, dataset: &str, condition: ProbeCondition) -> Option<&SuggestibilityRow> {
        self.suggestibility
            .iter()
            .find(|r| r.dataset == dataset && r.condition == condition)
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub dataset: String,
    pub best_critique: f64,
    pub best_baseline: f64,
    pub gain: f64,
}

/// Per-dataset gain of the best critique strategy over the best baseline,
/// in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainTable {
    pub rows: Vec<GainRow>,
    pub mean: f64,
    /// Population variance across datasets.
    pub variance: f64,
}

/// Mean and population variance.
pub fn mean_variance(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, variance))
}

pub fn aggregate_gains(report: &RunReport) -> Result<GainTable> {
    let mut rows = Vec::new();
    for dataset in report.datasets() {
        let best = |strategies: &[StrategyKind]| -> Result<f64> {
            strategies
                .iter()
                .map(|s| {
                    report
                        .headline(&dataset, *s)
                        .map(|c| c.accuracy * 100.0)
                        .ok_or_else(|| Error::Aggregation(format!("missing {s} cell for dataset {dataset}")))
                })
                .try_fold(f64::NEG_INFINITY, |m, a| a.map(|a| m.max(a)))
        };
        let best_critique = best(&[StrategyKind::EpCrit, StrategyKind::SemCrit, StrategyKind::EpSemCrit])?;
        let best_baseline = best(&[StrategyKind::ZeroShot, StrategyKind::EpLabel])?;
        rows.push(GainRow {
            dataset,
            best_critique,
            best_baseline,
            gain: best_critique - best_baseline,
        });
    }
    let gains: Vec<f64> = rows.iter().map(|r| r.gain).collect();
    let (mean, variance) =
        mean_variance(&gains).ok_or_else(|| Error::Aggregation("report contains no datasets".into()))?;
    Ok(GainTable { rows, mean, variance })
}
