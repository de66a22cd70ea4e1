//! Size-bounded global population and per-group archives.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::eval::EvalSummary;
use crate::solvers::SolverConfig;

/// Lower ℓ first, then higher k, then lower t, then earlier arrival.
pub fn rank_cmp(a: (f64, f64, f64, u64), b: (f64, f64, f64, u64)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(b.1.total_cmp(&a.1))
        .then(a.2.total_cmp(&b.2))
        .then(a.3.cmp(&b.3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub id: String,
    pub config: SolverConfig,
    pub summary: EvalSummary,
    /// Arrival order, the final tie-break.
    pub seq: u64,
}

impl Member {
    fn key(&self) -> (f64, f64, f64, u64) {
        let m = &self.summary.metrics;
        (m.ell, m.k, m.t, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub capacity: usize,
    /// Sorted best first.
    pub members: Vec<Member>,
}

/// Result of offering a solver to the population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationUpdate {
    pub inserted: bool,
    pub evicted: Option<String>,
}

impl Population {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            members: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.iter().any(|m| m.id == id)
    }

    pub fn best(&self) -> Option<&Member> {
        self.members.first()
    }

    /// Adds the member, then evicts the worst if over capacity. The evictee
    /// may be the newcomer. A config already present is not added twice.
    pub fn insert(&mut self, member: Member) -> PopulationUpdate {
        if self.contains(&member.id) {
            return PopulationUpdate {
                inserted: false,
                evicted: None,
            };
        }
        let id = member.id.clone();
        self.members.push(member);
        self.members.sort_by(|a, b| rank_cmp(a.key(), b.key()));
        let evicted = (self.members.len() > self.capacity).then(|| self.members.pop().expect("over capacity").id);
        PopulationUpdate {
            inserted: evicted.as_deref() != Some(id.as_str()),
            evicted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub id: String,
    pub config: SolverConfig,
    pub ell: f64,
    pub k: f64,
    pub t: f64,
    pub seq: u64,
    pub summary: EvalSummary,
}

impl ArchiveEntry {
    fn key(&self) -> (f64, f64, f64, u64) {
        (self.ell, self.k, self.t, self.seq)
    }
}

/// Top-K solvers for one group by group-wise terminal log-residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupArchive {
    pub group: usize,
    pub capacity: usize,
    /// Sorted best first; at most one entry per config id.
    pub entries: Vec<ArchiveEntry>,
}

impl GroupArchive {
    pub fn new(group: usize, capacity: usize) -> Self {
        Self {
            group,
            capacity: capacity.max(1),
            entries: Vec::new(),
        }
    }

    pub fn best(&self) -> Option<&ArchiveEntry> {
        self.entries.first()
    }

    /// Keeps the better of two records for the same config. Returns whether
    /// the offered record is in the archive afterwards.
    pub fn offer(&mut self, entry: ArchiveEntry) -> bool {
        if let Some(pos) = self.entries.iter().position(|e| e.id == entry.id) {
            if rank_cmp(entry.key(), self.entries[pos].key()) != Ordering::Less {
                return false;
            }
            self.entries.remove(pos);
        }
        let seq = entry.seq;
        self.entries.push(entry);
        self.entries.sort_by(|a, b| rank_cmp(a.key(), b.key()));
        self.entries.truncate(self.capacity);
        self.entries.iter().any(|e| e.seq == seq)
    }
}
