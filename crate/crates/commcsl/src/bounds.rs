//! Shared bounds for every bounded enumeration in the toolkit.
//!
//! All semantic checks in this crate are decision procedures over finite
//! domains. One [`Bounds`] value fixes those domains: the integer window,
//! container sizes, heap locations, candidate fractions, exploration limits,
//! and a global cap that turns runaway enumerations into explicit unknown
//! verdicts instead of silent truncation.

use serde::{Deserialize, Serialize};

use crate::frac::Frac;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    /// Smallest integer in the bounded Int domain.
    pub int_min: i64,
    /// Largest integer in the bounded Int domain (inclusive).
    pub int_max: i64,
    /// Maximum sequence length, multiset cardinality, and map size.
    pub container_max: usize,
    /// Heap locations 0..heap_locs considered when enumerating heaps.
    pub heap_locs: u64,
    /// Candidate fractions for enumerating permission heaps and guard states.
    /// Splitting searches also use the fraction literals of the assertion at
    /// hand, so these only need to seed the state universe.
    pub frac_candidates: Vec<Frac>,
    /// Cap on any single value-domain or state-pair enumeration; exceeding it
    /// yields an explicit unknown outcome.
    pub max_enum: u64,
    /// Fuel for a single scheduled run.
    pub max_steps: u64,
    /// Cap on distinct configurations during exhaustive exploration.
    pub max_configs: u64,
    /// Cap on total guard actions considered by the reachability check.
    pub action_bound: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            int_min: -2,
            int_max: 3,
            container_max: 4,
            heap_locs: 4,
            frac_candidates: vec![
                Frac::new(1, 4).unwrap(),
                Frac::new(1, 2).unwrap(),
                Frac::new(3, 4).unwrap(),
                Frac::one(),
            ],
            max_enum: 2_000_000,
            max_steps: 100_000,
            max_configs: 1_000_000,
            action_bound: 8,
        }
    }
}

impl Bounds {
    /// Number of integers in the Int window.
    pub fn int_domain_len(&self) -> u64 {
        (self.int_max - self.int_min).max(0) as u64 + 1
    }

    /// A copy with a different integer window.
    pub fn with_int_range(mut self, lo: i64, hi: i64) -> Self {
        self.int_min = lo;
        self.int_max = hi;
        self
    }

    /// A copy with a different container size limit.
    pub fn with_container_max(mut self, n: usize) -> Self {
        self.container_max = n;
        self
    }
}
