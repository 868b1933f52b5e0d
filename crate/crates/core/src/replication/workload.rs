use std::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ClientRequest;
use crate::class_model::RequestClasses;
use crate::service::{Classifier, CostClass, ServiceError, ServiceOp};

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("{field} must be within [0, 1], got {value}")]
    Fraction { field: &'static str, value: f64 },
    #[error("{field} has {len} entries for {num_shards} shard(s)")]
    SkewLength {
        field: &'static str,
        len: usize,
        num_shards: usize,
    },
    #[error("{field} must be non-negative and sum to 1, sums to {sum}")]
    SkewSum { field: &'static str, sum: f64 },
    #[error("workload needs at least one shard and one client")]
    Empty,
    #[error("key range must be positive")]
    KeyRange,
    #[error(
        "unknown workload preset `{0}` (expected read, write, mixed85, mixed50, w1, w2 or w3)"
    )]
    UnknownPreset(String),
}

fn default_clients() -> usize {
    64
}

fn default_requests() -> usize {
    10_000
}

/// A synthetic request mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    #[serde(default)]
    pub name: String,
    pub num_shards: usize,
    /// Share of operations that only read.
    pub read_fraction: f64,
    /// Share of operations that touch one shard.
    pub local_fraction: f64,
    /// How local reads spread over shards.
    pub read_skew: Vec<f64>,
    /// How local writes spread over shards.
    pub write_skew: Vec<f64>,
    #[serde(default)]
    pub cost: CostClass,
    #[serde(default = "default_clients")]
    pub clients: usize,
    #[serde(default = "default_requests")]
    pub requests: usize,
    /// Keys are drawn from `[0, key_range)`; defaults to the list size of
    /// `cost`.
    #[serde(default)]
    pub key_range: Option<u64>,
    #[serde(default)]
    pub seed: u64,
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// The first shard gets twice the share of each other shard.
fn first_heavy(n: usize) -> Vec<f64> {
    let total = (n + 1) as f64;
    (0..n)
        .map(|s| if s == 0 { 2.0 / total } else { 1.0 / total })
        .collect()
}

/// The first shard gets half the share of each other shard.
fn first_light(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let total = (2 * n - 1) as f64;
    (0..n)
        .map(|s| if s == 0 { 1.0 / total } else { 2.0 / total })
        .collect()
}

impl WorkloadSpec {
    pub fn uniform(name: &str, num_shards: usize, read_fraction: f64, local_fraction: f64) -> Self {
        Self {
            name: name.to_string(),
            num_shards,
            read_fraction,
            local_fraction,
            read_skew: uniform(num_shards.max(1)),
            write_skew: uniform(num_shards.max(1)),
            cost: CostClass::default(),
            clients: default_clients(),
            requests: default_requests(),
            key_range: None,
            seed: 0,
        }
    }

    /// `read` and `write` are single-kind local streams, `mixed85` and
    /// `mixed50` local mixes, and `w1`..`w3` the balanced and skewed
    /// 85/15 mixes with 5% global operations. With two shards the skewed
    /// presets split 67/33.
    pub fn preset(name: &str, num_shards: usize) -> Result<Self, WorkloadError> {
        let n = num_shards.max(1);
        let spec = match name {
            "read" => Self::uniform(name, n, 1.0, 1.0),
            "write" => Self::uniform(name, n, 0.0, 1.0),
            "mixed85" => Self::uniform(name, n, 0.85, 1.0),
            "mixed50" => Self::uniform(name, n, 0.5, 1.0),
            "w1" => Self::uniform(name, n, 0.85, 0.95),
            "w2" => Self {
                read_skew: first_heavy(n),
                write_skew: first_heavy(n),
                ..Self::uniform(name, n, 0.85, 0.95)
            },
            "w3" => Self {
                read_skew: first_light(n),
                write_skew: first_heavy(n),
                ..Self::uniform(name, n, 0.85, 0.95)
            },
            other => return Err(WorkloadError::UnknownPreset(other.to_string())),
        };
        Ok(Self { num_shards, ..spec })
    }

    pub fn with_requests(mut self, requests: usize) -> Self {
        self.requests = requests;
        self
    }

    pub fn with_clients(mut self, clients: usize) -> Self {
        self.clients = clients;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_cost(mut self, cost: CostClass) -> Self {
        self.cost = cost;
        self
    }

    pub fn with_key_range(mut self, key_range: Option<u64>) -> Self {
        self.key_range = key_range;
        self
    }

    pub fn key_range(&self) -> u64 {
        self.key_range.unwrap_or(self.cost.list_size() as u64)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.num_shards == 0 || self.clients == 0 {
            return Err(WorkloadError::Empty);
        }
        for (field, value) in [
            ("read_fraction", self.read_fraction),
            ("local_fraction", self.local_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(WorkloadError::Fraction { field, value });
            }
        }
        for (field, v) in [
            ("read_skew", &self.read_skew),
            ("write_skew", &self.write_skew),
        ] {
            if v.len() != self.num_shards {
                return Err(WorkloadError::SkewLength {
                    field,
                    len: v.len(),
                    num_shards: self.num_shards,
                });
            }
            let sum: f64 = v.iter().sum();
            if v.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
                return Err(WorkloadError::SkewSum { field, sum });
            }
        }
        if self.key_range() == 0 {
            return Err(WorkloadError::KeyRange);
        }
        Ok(())
    }

    /// Probability of each (kind, shard) bucket: local reads and writes per
    /// shard, then global reads and global writes.
    fn buckets(&self) -> Vec<(ServiceOp, f64)> {
        let (r, l) = (self.read_fraction, self.local_fraction);
        let mut out = Vec::new();
        for s in 0..self.num_shards {
            out.push((
                ServiceOp::Contains {
                    shard: s as u16,
                    key: 0,
                },
                r * l * self.read_skew[s],
            ));
            out.push((
                ServiceOp::Add {
                    shard: s as u16,
                    key: 0,
                },
                (1.0 - r) * l * self.write_skew[s],
            ));
        }
        out.push((ServiceOp::ContainsAll { key: 0 }, r * (1.0 - l)));
        out.push((ServiceOp::AddAll { key: 0 }, (1.0 - r) * (1.0 - l)));
        out
    }

    /// Expected share of each class under `classes`, usable as optimizer
    /// weights.
    pub fn class_weights(&self, classes: &RequestClasses) -> Result<Vec<f64>, ServiceError> {
        let cl = Classifier::new(classes, self.num_shards)?;
        let mut w = vec![0.0; classes.len()];
        for (op, p) in self.buckets() {
            if p > 0.0 {
                w[cl.class_of(&op)?.0] += p;
            }
        }
        Ok(w)
    }
}

impl fmt::Display for WorkloadSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.name.is_empty() {
            f.write_str("custom")
        } else {
            f.write_str(&self.name)
        }
    }
}

/// Draws `spec.requests` operations. Operation `j` belongs to client
/// `j % clients`, so each client's list is in `client_seq` order.
pub fn generate_workload(spec: &WorkloadSpec) -> Result<Vec<ClientRequest>, WorkloadError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let reads = WeightedIndex::new(&spec.read_skew).ok();
    let writes = WeightedIndex::new(&spec.write_skew).ok();
    let range = spec.key_range();
    let mut out = Vec::with_capacity(spec.requests);
    for j in 0..spec.requests {
        let read = rng.gen_bool(spec.read_fraction);
        let local = rng.gen_bool(spec.local_fraction);
        let key = rng.gen_range(0..range);
        let op = match (read, local) {
            (true, true) => {
                let shard = reads.as_ref().expect("validated skew").sample(&mut rng) as u16;
                ServiceOp::Contains { shard, key }
            }
            (false, true) => {
                let shard = writes.as_ref().expect("validated skew").sample(&mut rng) as u16;
                ServiceOp::Add { shard, key }
            }
            (true, false) => ServiceOp::ContainsAll { key },
            (false, false) => ServiceOp::AddAll { key },
        };
        out.push(ClientRequest {
            client_id: (j % spec.clients) as u32,
            client_seq: (j / spec.clients) as u64,
            op,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class_model::{builtin_topology, TopologyKind};

    fn count(ops: &[ClientRequest], f: impl Fn(&ServiceOp) -> bool) -> usize {
        ops.iter().filter(|r| f(&r.op)).count()
    }

    #[test]
    fn mixed_write_share_within_three_sigma() {
        let spec = WorkloadSpec::preset("mixed85", 1).unwrap().with_seed(7);
        let ops = generate_workload(&spec).unwrap();
        let writes = count(&ops, |o| o.is_write());
        assert!((1350..=1650).contains(&writes), "{writes}");
    }

    #[test]
    fn read_only_has_no_writes() {
        let spec = WorkloadSpec::preset("read", 2).unwrap().with_seed(3);
        assert_eq!(
            count(&generate_workload(&spec).unwrap(), |o| o.is_write()),
            0
        );
    }

    #[test]
    fn same_seed_same_stream() {
        let spec = WorkloadSpec::preset("w3", 2)
            .unwrap()
            .with_seed(11)
            .with_requests(500);
        assert_eq!(
            generate_workload(&spec).unwrap(),
            generate_workload(&spec).unwrap()
        );
        let other = generate_workload(&spec.clone().with_seed(12)).unwrap();
        assert_ne!(generate_workload(&spec).unwrap(), other);
    }

    #[test]
    fn clients_take_turns() {
        let spec = WorkloadSpec::preset("read", 1)
            .unwrap()
            .with_clients(3)
            .with_requests(7);
        let ops = generate_workload(&spec).unwrap();
        let ids: Vec<(u32, u64)> = ops.iter().map(|r| (r.client_id, r.client_seq)).collect();
        assert_eq!(
            ids,
            vec![(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1), (0, 2)]
        );
    }

    #[test]
    fn skewed_presets() {
        let w2 = WorkloadSpec::preset("w2", 2).unwrap();
        assert!((w2.read_skew[0] - 2.0 / 3.0).abs() < 1e-12);
        let w3 = WorkloadSpec::preset("w3", 2).unwrap();
        assert!((w3.read_skew[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((w3.write_skew[0] - 2.0 / 3.0).abs() < 1e-12);
        for n in 1..6 {
            for p in ["w1", "w2", "w3"] {
                WorkloadSpec::preset(p, n).unwrap().validate().unwrap();
            }
        }
    }

    #[test]
    fn class_weights_follow_the_mix() {
        let classes = builtin_topology(TopologyKind::ShardedGlobal, 2).unwrap();
        let w = WorkloadSpec::preset("w1", 2)
            .unwrap()
            .class_weights(&classes)
            .unwrap();
        let expect = [
            0.85 * 0.95 / 2.0,
            0.15 * 0.95 / 2.0,
            0.85 * 0.95 / 2.0,
            0.15 * 0.95 / 2.0,
            0.85 * 0.05,
            0.15 * 0.05,
        ];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        let mut s = WorkloadSpec::preset("w1", 2).unwrap();
        s.read_fraction = 1.5;
        assert!(matches!(s.validate(), Err(WorkloadError::Fraction { .. })));
        let mut s = WorkloadSpec::preset("w1", 2).unwrap();
        s.read_skew = vec![0.5, 0.6];
        assert!(matches!(s.validate(), Err(WorkloadError::SkewSum { .. })));
        assert!(matches!(
            WorkloadSpec::preset("bogus", 1),
            Err(WorkloadError::UnknownPreset(_))
        ));
    }
}
