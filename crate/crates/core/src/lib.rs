//! Critique-driven memory for LLM agents: critique generation, episodic and
//! semantic memory, prompting strategies, and a suggestibility probe.

pub mod critique;
pub mod datasets;
pub mod embed;
pub mod error;
pub mod gateway;
pub mod harness;
pub mod json;
pub mod memory;
pub mod model;
pub mod prompts;
pub mod store;
pub mod suggestibility;

pub use error::{Error, Result};
pub use model::{
    flip_label, normalize_label, Answer, Critique, Dataset, LabelKind, LabelSpace, PredictionRecord, StrategyKind,
    TaskInstance,
};
