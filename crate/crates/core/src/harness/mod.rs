//! Config-driven experiment runner and report tables.

pub mod config;
pub mod report;
pub mod run;
pub mod tables;

pub use config::{BackendSpec, DatasetRef, EmbedderSpec, ProbeConfig, RunConfig, ScriptSpec, Seeds};
pub use report::{
    aggregate_gains, mean_variance, CellFailure, CellReport, GainRow, GainTable, Provenance, RunReport,
    SuggestibilityRow, TokenTotals, UserScore, UserSuggestibility,
};
pub use run::{CritiqueArtifact, EvalArtifact, Harness, Stages};
