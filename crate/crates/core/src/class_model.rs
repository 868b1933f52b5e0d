//! Request classes and the conflict relations they summarize.
//!
//! A request touches application objects through its readset and writeset.
//! Two requests conflict when one of them writes an object the other reads
//! or writes. Classes group requests so that schedulers never have to look
//! at access sets at runtime: the class conflict matrix must cover every
//! request-level conflict, which [`validate_classes`] checks on a finite
//! sample of requests.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::service::ServiceOp;

/// Errors raised while building or parsing class definitions.
#[derive(Debug, Error, PartialEq)]
pub enum ClassModelError {
    #[error("a class set needs at least one class")]
    Empty,
    #[error("conflict matrix is not {n}x{n}")]
    BadShape { n: usize },
    #[error("conflict matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("class {name} has invalid weight {weight}")]
    BadWeight { name: String, weight: f64 },
    #[error("class id {0} is out of range")]
    InvalidClassId(usize),
    #[error("duplicate class `{0}`")]
    DuplicateClass(String),
    #[error("unsupported topology {kind} with {num_shards} shard(s)")]
    UnsupportedTopology {
        kind: TopologyKind,
        num_shards: usize,
    },
    #[error("line {line}: unknown class `{name}`")]
    UnknownClass { line: usize, name: String },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

/// An application object: a key inside one shard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId {
    pub shard: u16,
    pub key: u64,
}

impl ObjectId {
    pub fn new(shard: u16, key: u64) -> Self {
        Self { shard, key }
    }
}

/// Readset and writeset of a request. Both are kept sorted and deduplicated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessSets {
    readset: Vec<ObjectId>,
    writeset: Vec<ObjectId>,
}

impl AccessSets {
    pub fn new(
        readset: impl IntoIterator<Item = ObjectId>,
        writeset: impl IntoIterator<Item = ObjectId>,
    ) -> Self {
        let norm = |it: &mut dyn Iterator<Item = ObjectId>| {
            let mut v: Vec<ObjectId> = it.collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        Self {
            readset: norm(&mut readset.into_iter()),
            writeset: norm(&mut writeset.into_iter()),
        }
    }

    pub fn readset(&self) -> &[ObjectId] {
        &self.readset
    }

    pub fn writeset(&self) -> &[ObjectId] {
        &self.writeset
    }

    pub fn is_read_only(&self) -> bool {
        self.writeset.is_empty()
    }

    /// Every object the request touches, in order.
    pub fn objects(&self) -> impl Iterator<Item = (ObjectId, bool)> + '_ {
        let reads = self
            .readset
            .iter()
            .filter(|o| self.writeset.binary_search(o).is_err())
            .map(|o| (*o, false));
        self.writeset.iter().map(|o| (*o, true)).chain(reads)
    }
}

fn sorted_intersect(a: &[ObjectId], b: &[ObjectId]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Request-level conflict: some object is written by one side and read or
/// written by the other.
pub fn conflicts_requests(a: &AccessSets, b: &AccessSets) -> bool {
    sorted_intersect(&a.readset, &b.writeset)
        || sorted_intersect(&a.writeset, &b.readset)
        || sorted_intersect(&a.writeset, &b.writeset)
}

/// Index into a [`RequestClasses`] list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(pub usize);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Class names, weights and the symmetric class conflict matrix. A `true`
/// on the diagonal marks a class with internal conflicts.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestClasses {
    names: Vec<String>,
    weights: Vec<f64>,
    conflicts: Vec<Vec<bool>>,
}

impl RequestClasses {
    pub fn new(
        names: Vec<String>,
        weights: Vec<f64>,
        conflicts: Vec<Vec<bool>>,
    ) -> Result<Self, ClassModelError> {
        let n = names.len();
        if n == 0 {
            return Err(ClassModelError::Empty);
        }
        if weights.len() != n || conflicts.len() != n || conflicts.iter().any(|r| r.len() != n) {
            return Err(ClassModelError::BadShape { n });
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(ClassModelError::DuplicateClass(name.clone()));
            }
        }
        for (name, &w) in names.iter().zip(&weights) {
            if !(w.is_finite() && w >= 0.0) {
                return Err(ClassModelError::BadWeight {
                    name: name.clone(),
                    weight: w,
                });
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if conflicts[i][j] != conflicts[j][i] {
                    return Err(ClassModelError::Asymmetric(i, j));
                }
            }
        }
        Ok(Self {
            names,
            weights,
            conflicts,
        })
    }

    /// Builds a class set with unit weights from a list of conflicting
    /// name pairs. Self-pairs mark internal conflicts.
    pub fn from_edges(names: &[&str], edges: &[(&str, &str)]) -> Result<Self, ClassModelError> {
        let n = names.len();
        let mut conflicts = vec![vec![false; n]; n];
        let pos = |name: &str| {
            names
                .iter()
                .position(|x| *x == name)
                .ok_or_else(|| ClassModelError::UnknownClass {
                    line: 0,
                    name: name.to_string(),
                })
        };
        for (a, b) in edges {
            let (i, j) = (pos(a)?, pos(b)?);
            conflicts[i][j] = true;
            conflicts[j][i] = true;
        }
        Self::new(
            names.iter().map(|s| s.to_string()).collect(),
            vec![1.0; n],
            conflicts,
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, c: ClassId) -> &str {
        &self.names[c.0]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, c: ClassId) -> f64 {
        self.weights[c.0]
    }

    pub fn conflicts(&self, a: ClassId, b: ClassId) -> bool {
        self.conflicts[a.0][b.0]
    }

    pub fn has_internal_conflict(&self, c: ClassId) -> bool {
        self.conflicts[c.0][c.0]
    }

    pub fn conflict_matrix(&self) -> &[Vec<bool>] {
        &self.conflicts
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> {
        (0..self.len()).map(ClassId)
    }

    pub fn index_of(&self, name: &str) -> Option<ClassId> {
        self.names.iter().position(|n| n == name).map(ClassId)
    }

    pub fn check_id(&self, c: ClassId) -> Result<ClassId, ClassModelError> {
        if c.0 < self.len() {
            Ok(c)
        } else {
            Err(ClassModelError::InvalidClassId(c.0))
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, ClassModelError> {
        if weights.len() != self.len() {
            return Err(ClassModelError::BadShape { n: self.len() });
        }
        self.weights = weights;
        Self::new(self.names, self.weights, self.conflicts)
    }

    /// Unordered conflicting pairs, diagonal included.
    pub fn edges(&self) -> Vec<(ClassId, ClassId)> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            for j in i..self.len() {
                if self.conflicts[i][j] {
                    out.push((ClassId(i), ClassId(j)));
                }
            }
        }
        out
    }

    /// Renders the line-oriented topology format read by [`parse_topology`].
    pub fn to_topology_text(&self) -> String {
        let mut out = String::new();
        for (name, w) in self.names.iter().zip(&self.weights) {
            out.push_str(&format!("class {name} {w}\n"));
        }
        for (a, b) in self.edges() {
            out.push_str(&format!("conflict {} {}\n", self.name(a), self.name(b)));
        }
        out
    }
}

/// One ordered client operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub global_seq: u64,
    pub client_id: u32,
    pub client_seq: u64,
    pub class_id: ClassId,
    pub payload: ServiceOp,
}

/// A sampled request pair that conflicts although its classes do not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassViolation {
    /// Positions of the two requests in the sample.
    pub pair: (usize, usize),
    pub missing_edge: (String, String),
}

impl fmt::Display for ClassViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "requests #{} and #{} conflict but ({}, {}) is not a class conflict",
            self.pair.0, self.pair.1, self.missing_edge.0, self.missing_edge.1
        )
    }
}

/// Checks that every conflicting pair in `sample` falls in mutually
/// conflicting classes. Only the sampled pairs are inspected, so an empty
/// result certifies the class set on that finite universe and nothing more.
pub fn validate_classes<F>(
    classes: &RequestClasses,
    request_conflict: F,
    sample: &[Request],
) -> Result<Vec<ClassViolation>, ClassModelError>
where
    F: Fn(&Request, &Request) -> bool,
{
    for r in sample {
        classes.check_id(r.class_id)?;
    }
    let mut out = Vec::new();
    let mut reported = HashSet::new();
    for i in 0..sample.len() {
        for j in (i + 1)..sample.len() {
            let (a, b) = (&sample[i], &sample[j]);
            if classes.conflicts(a.class_id, b.class_id) || !request_conflict(a, b) {
                continue;
            }
            let key = (a.class_id.min(b.class_id), a.class_id.max(b.class_id));
            if reported.insert(key) {
                out.push(ClassViolation {
                    pair: (i, j),
                    missing_edge: (
                        classes.name(key.0).to_string(),
                        classes.name(key.1).to_string(),
                    ),
                });
            }
        }
    }
    Ok(out)
}

/// The three prototypical class layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TopologyKind {
    /// One read-only class and one internally conflicting write class.
    ReadersWriters,
    /// Per-shard readers and writers plus a global snapshot class.
    ShardedSnapshot,
    /// Per-shard readers and writers plus global readers and writers.
    ShardedGlobal,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::ReadersWriters => "readers_writers",
            TopologyKind::ShardedSnapshot => "sharded_snapshot",
            TopologyKind::ShardedGlobal => "sharded_global",
        })
    }
}

impl FromStr for TopologyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rw" | "readers_writers" => Ok(TopologyKind::ReadersWriters),
            "snapshot" | "sharded_snapshot" => Ok(TopologyKind::ShardedSnapshot),
            "global" | "sharded_global" => Ok(TopologyKind::ShardedGlobal),
            other => Err(format!("unknown topology kind `{other}`")),
        }
    }
}

pub(crate) fn local_read_class(shard: usize) -> String {
    format!("C_R{}", shard + 1)
}

pub(crate) fn local_write_class(shard: usize) -> String {
    format!("C_W{}", shard + 1)
}

/// Builds one of the built-in class layouts with unit weights.
///
/// Sharded layouts name classes `C_R1, C_W1, .., C_Rk, C_Wk` followed by
/// `C_S` (snapshot) or `C_Rg, C_Wg` (global). Readers/writers uses `C_R`
/// and `C_W` and only exists for one shard.
pub fn builtin_topology(
    kind: TopologyKind,
    num_shards: usize,
) -> Result<RequestClasses, ClassModelError> {
    if num_shards == 0 || num_shards > u16::MAX as usize {
        return Err(ClassModelError::UnsupportedTopology { kind, num_shards });
    }
    let mut names: Vec<String> = Vec::new();
    let mut edges: Vec<(String, String)> = Vec::new();
    match kind {
        TopologyKind::ReadersWriters => {
            if num_shards != 1 {
                return Err(ClassModelError::UnsupportedTopology { kind, num_shards });
            }
            names.extend(["C_R".to_string(), "C_W".to_string()]);
            edges.push(("C_W".into(), "C_W".into()));
            edges.push(("C_W".into(), "C_R".into()));
        }
        TopologyKind::ShardedSnapshot | TopologyKind::ShardedGlobal => {
            for s in 0..num_shards {
                let (r, w) = (local_read_class(s), local_write_class(s));
                edges.push((w.clone(), w.clone()));
                edges.push((r.clone(), w.clone()));
                names.push(r);
                names.push(w);
            }
            let global_read = if kind == TopologyKind::ShardedSnapshot {
                "C_S"
            } else {
                "C_Rg"
            };
            names.push(global_read.to_string());
            for s in 0..num_shards {
                edges.push((global_read.to_string(), local_write_class(s)));
            }
            if kind == TopologyKind::ShardedGlobal {
                let wg = "C_Wg".to_string();
                for other in names.clone() {
                    edges.push((wg.clone(), other));
                }
                edges.push((wg.clone(), wg.clone()));
                names.push(wg);
            }
        }
    }
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let edge_refs: Vec<(&str, &str)> = edges
        .iter()
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    RequestClasses::from_edges(&name_refs, &edge_refs)
}

/// Parses the topology format: `class <name> <weight>` lines followed by
/// `conflict <name> <name>` lines. Blank lines and `#` comments are skipped.
pub fn parse_topology(text: &str) -> Result<RequestClasses, ClassModelError> {
    let mut names: Vec<String> = Vec::new();
    let mut weights = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        match words.as_slice() {
            ["class", name, weight] => {
                if !pairs.is_empty() {
                    return Err(ClassModelError::Syntax {
                        line,
                        msg: "class declarations must precede conflicts".into(),
                    });
                }
                if names.iter().any(|n| n == name) {
                    return Err(ClassModelError::DuplicateClass(name.to_string()));
                }
                let w: f64 = weight.parse().map_err(|_| ClassModelError::Syntax {
                    line,
                    msg: format!("bad weight `{weight}`"),
                })?;
                names.push(name.to_string());
                weights.push(w);
            }
            ["class", name] => {
                if names.iter().any(|n| n == name) {
                    return Err(ClassModelError::DuplicateClass(name.to_string()));
                }
                names.push(name.to_string());
                weights.push(1.0);
            }
            ["conflict", a, b] => {
                let find = |n: &str| {
                    names
                        .iter()
                        .position(|x| x == n)
                        .ok_or_else(|| ClassModelError::UnknownClass {
                            line,
                            name: n.to_string(),
                        })
                };
                pairs.push((find(a)?, find(b)?));
            }
            _ => {
                return Err(ClassModelError::Syntax {
                    line,
                    msg: format!("unrecognized line `{content}`"),
                })
            }
        }
    }
    let n = names.len();
    let mut conflicts = vec![vec![false; n]; n];
    for (i, j) in pairs {
        conflicts[i][j] = true;
        conflicts[j][i] = true;
    }
    RequestClasses::new(names, weights, conflicts)
}
