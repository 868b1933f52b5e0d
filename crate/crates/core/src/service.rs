//! The replicated application: a set of integer lists, one per shard.
//!
//! `contains`/`add` touch one shard, `containsAll`/`addAll` touch every
//! shard with the same key. Besides executing operations the service
//! declares access sets (used by the late scheduler and the verifiers) and
//! maps operations onto classes of a topology (used by the early scheduler).

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class_model::{
    local_read_class, local_write_class, AccessSets, ClassId, ObjectId, RequestClasses,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ServiceError {
    #[error("operation names shard {shard} but the topology has {num_shards} shard(s)")]
    ShardOutOfRange { shard: u16, num_shards: usize },
    #[error("topology has no class `{0}` for this operation")]
    MissingClass(String),
    #[error("topology shape does not match any known layout")]
    UnknownLayout,
}

/// One list operation. Global operations apply the same key to all shards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ServiceOp {
    Contains { shard: u16, key: u64 },
    Add { shard: u16, key: u64 },
    ContainsAll { key: u64 },
    AddAll { key: u64 },
}

impl ServiceOp {
    pub fn key(&self) -> u64 {
        match *self {
            ServiceOp::Contains { key, .. }
            | ServiceOp::Add { key, .. }
            | ServiceOp::ContainsAll { key }
            | ServiceOp::AddAll { key } => key,
        }
    }

    pub fn shard(&self) -> Option<u16> {
        match *self {
            ServiceOp::Contains { shard, .. } | ServiceOp::Add { shard, .. } => Some(shard),
            _ => None,
        }
    }

    pub fn is_write(&self) -> bool {
        matches!(self, ServiceOp::Add { .. } | ServiceOp::AddAll { .. })
    }

    pub fn is_global(&self) -> bool {
        self.shard().is_none()
    }

    /// Key-granular access sets. Global operations need the shard count.
    pub fn access_sets_in(&self, num_shards: usize) -> AccessSets {
        let key = self.key();
        let all = |k| (0..num_shards as u16).map(move |s| ObjectId::new(s, k));
        match *self {
            ServiceOp::Contains { shard, key } => AccessSets::new([ObjectId::new(shard, key)], []),
            ServiceOp::Add { shard, key } => {
                let o = ObjectId::new(shard, key);
                AccessSets::new([o], [o])
            }
            ServiceOp::ContainsAll { .. } => AccessSets::new(all(key), []),
            ServiceOp::AddAll { .. } => AccessSets::new(all(key), all(key)),
        }
    }

    /// Shard-granular access sets: every key collapses onto key 0.
    pub fn shard_access_sets(&self, num_shards: usize) -> AccessSets {
        let coarse = self.access_sets_in(num_shards);
        let strip = |v: &[ObjectId]| {
            v.iter()
                .map(|o| ObjectId::new(o.shard, 0))
                .collect::<Vec<_>>()
        };
        AccessSets::new(strip(coarse.readset()), strip(coarse.writeset()))
    }
}

impl fmt::Display for ServiceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServiceOp::Contains { shard, key } => write!(f, "contains({key})@{shard}"),
            ServiceOp::Add { shard, key } => write!(f, "add({key})@{shard}"),
            ServiceOp::ContainsAll { key } => write!(f, "containsAll({key})"),
            ServiceOp::AddAll { key } => write!(f, "addAll({key})"),
        }
    }
}

/// Maps operations to classes by the naming conventions of the built-in
/// layouts (`C_R`/`C_W`, `C_Ri`/`C_Wi` plus `C_S` or `C_Rg`/`C_Wg`).
#[derive(Debug, Clone)]
pub struct Classifier {
    num_shards: usize,
    local_read: Vec<ClassId>,
    local_write: Vec<ClassId>,
    global_read: ClassId,
    global_write: Option<ClassId>,
}

impl Classifier {
    pub fn new(classes: &RequestClasses, num_shards: usize) -> Result<Self, ServiceError> {
        let find = |n: &str| {
            classes
                .index_of(n)
                .ok_or_else(|| ServiceError::MissingClass(n.into()))
        };
        if let (Some(r), Some(w)) = (classes.index_of("C_R"), classes.index_of("C_W")) {
            return Ok(Self {
                num_shards,
                local_read: vec![r; num_shards],
                local_write: vec![w; num_shards],
                global_read: r,
                global_write: Some(w),
            });
        }
        let local_read = (0..num_shards)
            .map(|s| find(&local_read_class(s)))
            .collect::<Result<_, _>>()?;
        let local_write = (0..num_shards)
            .map(|s| find(&local_write_class(s)))
            .collect::<Result<_, _>>()?;
        if let Some(s) = classes.index_of("C_S") {
            return Ok(Self {
                num_shards,
                local_read,
                local_write,
                global_read: s,
                global_write: None,
            });
        }
        if let (Some(rg), Some(wg)) = (classes.index_of("C_Rg"), classes.index_of("C_Wg")) {
            return Ok(Self {
                num_shards,
                local_read,
                local_write,
                global_read: rg,
                global_write: Some(wg),
            });
        }
        Err(ServiceError::UnknownLayout)
    }

    pub fn num_shards(&self) -> usize {
        self.num_shards
    }

    pub fn class_of(&self, op: &ServiceOp) -> Result<ClassId, ServiceError> {
        let check = |shard: u16| {
            if (shard as usize) < self.num_shards {
                Ok(shard as usize)
            } else {
                Err(ServiceError::ShardOutOfRange {
                    shard,
                    num_shards: self.num_shards,
                })
            }
        };
        match *op {
            ServiceOp::Contains { shard, .. } => Ok(self.local_read[check(shard)?]),
            ServiceOp::Add { shard, .. } => Ok(self.local_write[check(shard)?]),
            ServiceOp::ContainsAll { .. } => Ok(self.global_read),
            ServiceOp::AddAll { .. } => self
                .global_write
                .ok_or_else(|| ServiceError::MissingClass("C_Wg".into())),
        }
    }

    pub fn supports_global_writes(&self) -> bool {
        self.global_write.is_some()
    }
}

/// Convenience wrapper around [`Classifier::class_of`].
pub fn class_of(
    op: &ServiceOp,
    classes: &RequestClasses,
    num_shards: usize,
) -> Result<ClassId, ServiceError> {
    Classifier::new(classes, num_shards)?.class_of(op)
}

/// Operation cost tiers. Lists are prefilled with 1, 1k or 10k entries and
/// the simulator charges 1, 10 or 100 ticks per shard touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostClass {
    #[default]
    Light,
    Moderate,
    Heavy,
}

impl CostClass {
    pub fn list_size(self) -> usize {
        match self {
            CostClass::Light => 1,
            CostClass::Moderate => 1_000,
            CostClass::Heavy => 10_000,
        }
    }

    pub fn ticks(self) -> u64 {
        match self {
            CostClass::Light => 1,
            CostClass::Moderate => 10,
            CostClass::Heavy => 100,
        }
    }
}

impl FromStr for CostClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "light" => Ok(CostClass::Light),
            "moderate" => Ok(CostClass::Moderate),
            "heavy" => Ok(CostClass::Heavy),
            other => Err(format!("unknown cost class `{other}`")),
        }
    }
}

/// Replica state shared by the worker threads of one replica.
///
/// Each shard sits behind its own lock, acquired with `try_*` first: a
/// failed attempt means two workers touched the same shard in conflicting
/// modes at the same time and is counted in [`Service::contention_events`].
pub trait Service: Send + Sync {
    fn execute(&self, op: &ServiceOp) -> bool;
    fn digest(&self) -> u64;
    fn num_shards(&self) -> usize;
    fn contention_events(&self) -> u64;
}

struct Shards<T> {
    shards: Vec<RwLock<T>>,
    contention: AtomicU64,
}

impl<T> Shards<T> {
    fn read(&self, s: usize) -> RwLockReadGuard<'_, T> {
        match self.shards[s].try_read() {
            Ok(g) => g,
            Err(_) => {
                self.contention.fetch_add(1, Ordering::Relaxed);
                self.shards[s].read().expect("shard lock poisoned")
            }
        }
    }

    fn write(&self, s: usize) -> RwLockWriteGuard<'_, T> {
        match self.shards[s].try_write() {
            Ok(g) => g,
            Err(_) => {
                self.contention.fetch_add(1, Ordering::Relaxed);
                self.shards[s].write().expect("shard lock poisoned")
            }
        }
    }
}

/// The linked-list service. Shard `s` starts with `initial_size` entries,
/// the even numbers `0, 2, .., 2*(initial_size-1)`, so keys drawn from
/// `[0, initial_size)` hit and miss in equal measure.
pub struct ShardedList {
    inner: Shards<Vec<u64>>,
    initial_size: usize,
}

impl ShardedList {
    pub fn new(num_shards: usize, initial_size: usize) -> Self {
        let init: Vec<u64> = (0..initial_size as u64).map(|k| 2 * k).collect();
        Self {
            inner: Shards {
                shards: (0..num_shards).map(|_| RwLock::new(init.clone())).collect(),
                contention: AtomicU64::new(0),
            },
            initial_size,
        }
    }

    pub fn initially_contains(&self, key: u64) -> bool {
        key.is_multiple_of(2) && key / 2 < self.initial_size as u64
    }

    pub fn shard_len(&self, shard: usize) -> usize {
        self.inner.read(shard).len()
    }

    /// Lists are kept sorted, so adds of distinct keys commute.
    fn add_to(list: &mut Vec<u64>, key: u64) -> bool {
        match list.iter().position(|&x| x >= key) {
            Some(i) if list[i] == key => false,
            Some(i) => {
                list.insert(i, key);
                true
            }
            None => {
                list.push(key);
                true
            }
        }
    }
}

impl Service for ShardedList {
    fn execute(&self, op: &ServiceOp) -> bool {
        let n = self.num_shards();
        match *op {
            ServiceOp::Contains { shard, key } => self.inner.read(shard as usize).contains(&key),
            ServiceOp::Add { shard, key } => {
                Self::add_to(&mut self.inner.write(shard as usize), key)
            }
            ServiceOp::ContainsAll { key } => (0..n)
                .map(|s| self.inner.read(s).contains(&key))
                .fold(true, |acc, x| acc && x),
            ServiceOp::AddAll { key } => (0..n)
                .map(|s| Self::add_to(&mut self.inner.write(s), key))
                .fold(true, |acc, x| acc && x),
        }
    }

    fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for s in 0..self.num_shards() {
            let list = self.inner.read(s);
            s.hash(&mut h);
            list.hash(&mut h);
        }
        h.finish()
    }

    fn num_shards(&self) -> usize {
        self.inner.shards.len()
    }

    fn contention_events(&self) -> u64 {
        self.inner.contention.load(Ordering::Relaxed)
    }
}

/// Fixed-cost service: each shard is one 64-bit register folded with the
/// keys written to it, and every operation burns `spin` loop iterations.
pub struct SyntheticService {
    inner: Shards<u64>,
    spin: u64,
}

impl SyntheticService {
    pub fn new(num_shards: usize, spin: u64) -> Self {
        Self {
            inner: Shards {
                shards: (0..num_shards).map(|_| RwLock::new(0)).collect(),
                contention: AtomicU64::new(0),
            },
            spin,
        }
    }

    fn burn(&self) {
        let mut x = 0u64;
        for i in 0..self.spin {
            x = std::hint::black_box(x.wrapping_mul(31).wrapping_add(i));
        }
        std::hint::black_box(x);
    }

    fn fold(reg: u64, key: u64) -> u64 {
        reg.wrapping_add(
            (key ^ 0x5bd1_e995)
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .rotate_left(17),
        )
    }
}

impl Service for SyntheticService {
    fn execute(&self, op: &ServiceOp) -> bool {
        self.burn();
        let n = self.num_shards();
        match *op {
            ServiceOp::Contains { shard, key } => {
                let _ = *self.inner.read(shard as usize);
                key & 1 == 0
            }
            ServiceOp::Add { shard, key } => {
                let mut g = self.inner.write(shard as usize);
                *g = Self::fold(*g, key);
                true
            }
            ServiceOp::ContainsAll { key } => {
                for s in 0..n {
                    let _ = *self.inner.read(s);
                }
                key & 1 == 0
            }
            ServiceOp::AddAll { key } => {
                for s in 0..n {
                    let mut g = self.inner.write(s);
                    *g = Self::fold(*g, key);
                }
                true
            }
        }
    }

    fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for s in 0..self.num_shards() {
            self.inner.read(s).hash(&mut h);
        }
        h.finish()
    }

    fn num_shards(&self) -> usize {
        self.inner.shards.len()
    }

    fn contention_events(&self) -> u64 {
        self.inner.contention.load(Ordering::Relaxed)
    }
}

/// Which service implementation a replica runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ServiceConfig {
    List {
        num_shards: usize,
        initial_size: usize,
    },
    Synthetic {
        num_shards: usize,
        spin: u64,
    },
}

impl ServiceConfig {
    pub fn num_shards(&self) -> usize {
        match *self {
            ServiceConfig::List { num_shards, .. }
            | ServiceConfig::Synthetic { num_shards, .. } => num_shards,
        }
    }

    pub fn build(&self) -> Box<dyn Service> {
        match *self {
            ServiceConfig::List {
                num_shards,
                initial_size,
            } => Box::new(ShardedList::new(num_shards, initial_size)),
            ServiceConfig::Synthetic { num_shards, spin } => {
                Box::new(SyntheticService::new(num_shards, spin))
            }
        }
    }

    /// Whether `key` is present in every shard before any operation runs.
    pub fn initially_contains(&self, key: u64) -> bool {
        match *self {
            ServiceConfig::List { initial_size, .. } => {
                key.is_multiple_of(2) && key / 2 < initial_size as u64
            }
            ServiceConfig::Synthetic { .. } => key & 1 == 0,
        }
    }
}

/// Reference execution: applies `ops` one after another on a fresh service
/// and returns the responses and the final digest.
pub fn sequential_reference<'a>(
    config: &ServiceConfig,
    ops: impl IntoIterator<Item = &'a ServiceOp>,
) -> (Vec<bool>, u64) {
    let svc = config.build();
    let responses = ops.into_iter().map(|op| svc.execute(op)).collect();
    (responses, svc.digest())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class_model::{builtin_topology, conflicts_requests, TopologyKind};

    #[test]
    fn add_then_contains() {
        let svc = ShardedList::new(1, 4);
        assert_eq!(svc.shard_len(0), 4);
        assert!(svc.execute(&ServiceOp::Add { shard: 0, key: 5 }));
        assert_eq!(svc.shard_len(0), 5);
        let before = svc.digest();
        assert!(svc.execute(&ServiceOp::Contains { shard: 0, key: 5 }));
        assert_eq!(svc.digest(), before);
        assert!(!svc.execute(&ServiceOp::Add { shard: 0, key: 5 }));
        assert!(svc.execute(&ServiceOp::Contains { shard: 0, key: 2 }));
        assert!(!svc.execute(&ServiceOp::Contains { shard: 0, key: 3 }));
    }

    #[test]
    fn add_all_ands_per_shard_results() {
        let svc = ShardedList::new(2, 4);
        assert!(svc.execute(&ServiceOp::AddAll { key: 7 }));
        assert_eq!((svc.shard_len(0), svc.shard_len(1)), (5, 5));
        assert!(svc.execute(&ServiceOp::ContainsAll { key: 7 }));

        assert!(svc.execute(&ServiceOp::Add { shard: 1, key: 9 }));
        assert!(!svc.execute(&ServiceOp::AddAll { key: 9 }));
        assert_eq!((svc.shard_len(0), svc.shard_len(1)), (6, 6));
    }

    #[test]
    fn distinct_adds_commute() {
        let a = ShardedList::new(1, 0);
        a.execute(&ServiceOp::Add { shard: 0, key: 1 });
        a.execute(&ServiceOp::Add { shard: 0, key: 3 });
        let b = ShardedList::new(1, 0);
        b.execute(&ServiceOp::Add { shard: 0, key: 3 });
        b.execute(&ServiceOp::Add { shard: 0, key: 1 });
        assert_eq!(a.digest(), b.digest());
        b.execute(&ServiceOp::Add { shard: 0, key: 2 });
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn access_sets_by_kind() {
        let c = ServiceOp::Contains { shard: 1, key: 4 }.access_sets_in(2);
        assert_eq!(c.readset(), &[ObjectId::new(1, 4)]);
        assert!(c.writeset().is_empty());
        let a = ServiceOp::AddAll { key: 4 }.access_sets_in(3);
        assert_eq!(a.writeset().len(), 3);
        assert_eq!(a.readset(), a.writeset());
        let add = ServiceOp::Add { shard: 1, key: 4 }.access_sets_in(2);
        assert!(conflicts_requests(&c, &add));
        let other_key = ServiceOp::Add { shard: 1, key: 5 };
        assert!(!conflicts_requests(&c, &other_key.access_sets_in(2)));
        let coarse = ServiceOp::Contains { shard: 1, key: 4 }.shard_access_sets(2);
        assert!(conflicts_requests(&coarse, &other_key.shard_access_sets(2)));
    }

    #[test]
    fn class_mapping_follows_layout() {
        let g = builtin_topology(TopologyKind::ShardedGlobal, 2).unwrap();
        let cl = Classifier::new(&g, 2).unwrap();
        let name = |op| g.name(cl.class_of(&op).unwrap()).to_string();
        assert_eq!(name(ServiceOp::Contains { shard: 1, key: 0 }), "C_R2");
        assert_eq!(name(ServiceOp::Add { shard: 0, key: 0 }), "C_W1");
        assert_eq!(name(ServiceOp::ContainsAll { key: 0 }), "C_Rg");
        assert_eq!(name(ServiceOp::AddAll { key: 0 }), "C_Wg");
        assert_eq!(
            cl.class_of(&ServiceOp::Add { shard: 2, key: 0 }),
            Err(ServiceError::ShardOutOfRange {
                shard: 2,
                num_shards: 2
            })
        );

        let rw = builtin_topology(TopologyKind::ReadersWriters, 1).unwrap();
        let cl = Classifier::new(&rw, 1).unwrap();
        assert_eq!(
            rw.name(cl.class_of(&ServiceOp::AddAll { key: 1 }).unwrap()),
            "C_W"
        );
        assert_eq!(
            rw.name(cl.class_of(&ServiceOp::ContainsAll { key: 1 }).unwrap()),
            "C_R"
        );

        let snap = builtin_topology(TopologyKind::ShardedSnapshot, 2).unwrap();
        let cl = Classifier::new(&snap, 2).unwrap();
        assert!(cl.class_of(&ServiceOp::AddAll { key: 1 }).is_err());
        assert_eq!(
            snap.name(cl.class_of(&ServiceOp::ContainsAll { key: 1 }).unwrap()),
            "C_S"
        );
    }

    #[test]
    fn synthetic_service_is_deterministic() {
        let ops = [
            ServiceOp::Add { shard: 0, key: 3 },
            ServiceOp::AddAll { key: 8 },
            ServiceOp::Contains { shard: 1, key: 2 },
        ];
        let cfg = ServiceConfig::Synthetic {
            num_shards: 2,
            spin: 10,
        };
        assert_eq!(
            sequential_reference(&cfg, &ops),
            sequential_reference(&cfg, &ops)
        );
    }
}
