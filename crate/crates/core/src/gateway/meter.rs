use std::ops::{Add, AddAssign};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

/// Which part of the pipeline a call belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Initial predictions, critique generation and summarization.
    Training,
    /// Performance-agent answers at evaluation time.
    Utilization,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub const fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            prompt_tokens,
            completion_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl Add for Usage {
    type Output = Usage;

    fn add(self, rhs: Usage) -> Usage {
        Usage::new(
            self.prompt_tokens + rhs.prompt_tokens,
            self.completion_tokens + rhs.completion_tokens,
        )
    }
}

impl AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for Usage {
    fn sum<I: Iterator<Item = Usage>>(iter: I) -> Usage {
        iter.fold(Usage::default(), Add::add)
    }
}

/// One successful, metered call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLog {
    pub request_id: u64,
    pub phase: Phase,
    pub usage: Usage,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeterSnapshot {
    pub calls: u64,
    pub total: Usage,
    pub training: Usage,
    pub utilization: Usage,
}

/// Running token totals, overall and per phase.
#[derive(Debug, Default)]
pub struct TokenMeter {
    calls: Mutex<Vec<CallLog>>,
}

impl TokenMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, phase: Phase, request_id: u64, prompt_tokens: u64, completion_tokens: u64) {
        self.calls.lock().expect("meter poisoned").push(CallLog {
            request_id,
            phase,
            usage: Usage::new(prompt_tokens, completion_tokens),
        });
    }

    pub fn snapshot(&self) -> MeterSnapshot {
        let calls = self.calls.lock().expect("meter poisoned");
        let mut snap = MeterSnapshot {
            calls: calls.len() as u64,
            ..Default::default()
        };
        for call in calls.iter() {
            snap.total += call.usage;
            match call.phase {
                Phase::Training => snap.training += call.usage,
                Phase::Utilization => snap.utilization += call.usage,
            }
        }
        snap
    }

    pub fn calls(&self) -> Vec<CallLog> {
        self.calls.lock().expect("meter poisoned").clone()
    }

    pub fn call_count(&self) -> u64 {
        self.calls.lock().expect("meter poisoned").len() as u64
    }
}
