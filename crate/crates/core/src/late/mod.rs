//! Late scheduling: the scheduler inserts every delivered request into a
//! bounded dependency graph and idle workers pick any request whose
//! conflicting predecessors have all completed.

mod graph;
mod sim;
mod threads;

pub use graph::DependencyGraph;
pub use sim::LateSim;
pub(crate) use threads::spawn_threads;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::class_model::{conflicts_requests, AccessSets, ClassId, Request, RequestClasses};

/// Graph capacity for write-only workloads.
pub const WRITE_ONLY_CAPACITY: usize = 50;
/// Graph capacity for every other workload.
pub const DEFAULT_CAPACITY: usize = 150;

/// What two requests must share to be ordered in the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictGranularity {
    /// Declared per-key read and write sets.
    #[default]
    Key,
    /// Same sets coarsened to whole shards.
    Shard,
    /// The class conflict relation.
    Class,
}

impl FromStr for ConflictGranularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "key" => Ok(ConflictGranularity::Key),
            "shard" => Ok(ConflictGranularity::Shard),
            "class" => Ok(ConflictGranularity::Class),
            other => Err(format!(
                "unknown conflict granularity `{other}` (expected key, shard or class)"
            )),
        }
    }
}

impl fmt::Display for ConflictGranularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConflictGranularity::Key => "key",
            ConflictGranularity::Shard => "shard",
            ConflictGranularity::Class => "class",
        })
    }
}

#[derive(Debug, Clone)]
pub struct LateConfig {
    /// Used for class-level conflicts and for naming classes in traces.
    pub classes: RequestClasses,
    pub workers: usize,
    /// Maximum number of graph nodes, pending and executing.
    pub capacity: usize,
    pub granularity: ConflictGranularity,
    pub num_shards: usize,
}

impl LateConfig {
    pub fn new(classes: RequestClasses, workers: usize, num_shards: usize) -> Self {
        Self {
            classes,
            workers: workers.max(1),
            capacity: DEFAULT_CAPACITY,
            granularity: ConflictGranularity::Key,
            num_shards,
        }
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity.max(1);
        self
    }

    pub fn with_granularity(mut self, granularity: ConflictGranularity) -> Self {
        self.granularity = granularity;
        self
    }

    pub fn oracle(&self) -> ConflictOracle {
        ConflictOracle {
            granularity: self.granularity,
            num_shards: self.num_shards,
            classes: self.classes.clone(),
        }
    }
}

/// Pairwise conflict test between requests.
#[derive(Debug, Clone)]
pub struct ConflictOracle {
    granularity: ConflictGranularity,
    num_shards: usize,
    classes: RequestClasses,
}

/// What the oracle needs to know about one request.
#[derive(Debug, Clone)]
pub struct Footprint {
    class: ClassId,
    sets: AccessSets,
}

impl ConflictOracle {
    pub fn footprint(&self, req: &Request) -> Footprint {
        let sets = match self.granularity {
            ConflictGranularity::Key => req.payload.access_sets_in(self.num_shards),
            ConflictGranularity::Shard => req.payload.shard_access_sets(self.num_shards),
            ConflictGranularity::Class => AccessSets::default(),
        };
        Footprint {
            class: req.class_id,
            sets,
        }
    }

    pub fn overlaps(&self, a: &Footprint, b: &Footprint) -> bool {
        match self.granularity {
            ConflictGranularity::Class => {
                a.class.0 < self.classes.len()
                    && b.class.0 < self.classes.len()
                    && self.classes.conflicts(a.class, b.class)
            }
            _ => conflicts_requests(&a.sets, &b.sets),
        }
    }

    pub fn conflicts(&self, a: &Request, b: &Request) -> bool {
        self.overlaps(&self.footprint(a), &self.footprint(b))
    }
}
