//! Iteration records, the uplink bit ledger and the chain trace.

use serde::{Deserialize, Serialize};

use crate::vector::ParamVector;

/// Snapshot of one recorded iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Iteration index k (1-based: the state after the k-th update).
    pub k: u64,
    pub theta: ParamVector,
    /// Sum of the active clients' encoded message lengths at iteration k.
    pub bits_uplink: u64,
    pub active_count: usize,
}

/// Per-iteration uplink bits plus their running total.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BitLedger {
    per_iteration: Vec<u64>,
    cumulative: u64,
}

impl BitLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bits: u64) {
        self.per_iteration.push(bits);
        self.cumulative += bits;
    }

    pub fn per_iteration(&self) -> &[u64] {
        &self.per_iteration
    }

    pub fn cumulative(&self) -> u64 {
        self.cumulative
    }

    /// Running total up to and including iteration k (1-based).
    pub fn cumulative_through(&self, k: u64) -> u64 {
        self.per_iteration[..k as usize].iter().sum()
    }
}

/// Output of a chain run: thinned post-burn-in records and the bit ledger.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
    pub ledger: BitLedger,
}

impl Trace {
    /// The thinned post-burn-in samples, in iteration order.
    pub fn samples(&self) -> impl Iterator<Item = &ParamVector> {
        self.records.iter().map(|r| &r.theta)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
