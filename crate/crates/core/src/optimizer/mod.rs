//! Mapping request classes to worker threads.
//!
//! An [`Assignment`] gives every class a synchronization mode and a set of
//! worker threads. [`check_feasible`] enforces the five mapping rules that
//! make early scheduling correct, [`cost`] scores an assignment, and
//! [`solve`] searches for a minimum-cost feasible assignment.

mod brute;
mod format;
mod solver;

use std::fmt;
use std::ops::ControlFlow;
use std::time::Duration;

use thiserror::Error;

use crate::class_model::{ClassId, ClassModelError, RequestClasses};

pub use brute::{brute_force, brute_force_with_limit, BRUTE_FORCE_MAX_BITS};
pub use format::{parse_assignment, parse_instance, serialize_assignment, serialize_instance};
pub use solver::{solve, SolveOptions};

/// Weight substituted for zero-weight classes when normalizing.
pub const ZERO_WEIGHT_EPSILON: f64 = 1e-6;

/// Absolute tolerance used to rank candidate costs.
pub const COST_TOLERANCE: f64 = 1e-9;

/// Largest supported thread count (thread sets are 64-bit masks).
pub const MAX_THREADS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum OptimizerError {
    #[error("instance needs between 1 and {MAX_THREADS} threads, got {0}")]
    BadThreadCount(usize),
    #[error("assignment covers {got} classes, instance has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("thread {thread} is outside 0..{threads}")]
    ThreadOutOfRange { thread: usize, threads: usize },
    #[error("exhaustive search needs {bits} bits, limit is {limit}")]
    TooLarge { bits: usize, limit: usize },
    #[error("no feasible assignment found (the all-sequential mapping should always be feasible)")]
    NoFeasible,
    #[error(transparent)]
    Classes(#[from] ClassModelError),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown class `{name}`")]
    UnknownClass { line: usize, name: String },
}

/// Set of worker thread indices, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ThreadSet(pub u64);

impl ThreadSet {
    pub const EMPTY: ThreadSet = ThreadSet(0);

    pub fn all(threads: usize) -> Self {
        if threads >= 64 {
            ThreadSet(u64::MAX)
        } else {
            ThreadSet((1u64 << threads) - 1)
        }
    }

    pub fn single(t: usize) -> Self {
        ThreadSet(1 << t)
    }

    pub fn contains(self, t: usize) -> bool {
        t < 64 && self.0 >> t & 1 == 1
    }

    pub fn insert(&mut self, t: usize) {
        self.0 |= 1 << t;
    }

    pub fn remove(&mut self, t: usize) {
        self.0 &= !(1 << t);
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: ThreadSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersection(self, other: ThreadSet) -> ThreadSet {
        ThreadSet(self.0 & other.0)
    }

    pub fn min(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let t = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(t)
            }
        })
    }
}

impl FromIterator<usize> for ThreadSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = ThreadSet::EMPTY;
        for t in iter {
            s.insert(t);
        }
        s
    }
}

impl fmt::Display for ThreadSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|t| t.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Synchronization mode of a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Every thread of the class receives each request and they synchronize.
    Seq,
    /// Each request goes to one thread of the class, round-robin.
    Cnc,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Seq => "Seq",
            Mode::Cnc => "Cnc",
        })
    }
}

/// Optimizer input: a class set and a worker-thread count.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    classes: RequestClasses,
    threads: usize,
}

impl ProblemInstance {
    pub fn new(classes: RequestClasses, threads: usize) -> Result<Self, OptimizerError> {
        if threads == 0 || threads > MAX_THREADS {
            return Err(OptimizerError::BadThreadCount(threads));
        }
        Ok(Self { classes, threads })
    }

    pub fn classes(&self) -> &RequestClasses {
        &self.classes
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Class weights with zeros replaced by [`ZERO_WEIGHT_EPSILON`].
    pub fn effective_weights(&self) -> Vec<f64> {
        self.classes
            .weights()
            .iter()
            .map(|&w| if w == 0.0 { ZERO_WEIGHT_EPSILON } else { w })
            .collect()
    }

    pub(crate) fn conflict(&self, a: usize, b: usize) -> bool {
        self.classes.conflicts(ClassId(a), ClassId(b))
    }
}

/// Per-class mode and thread set: the classes-to-threads map used by the
/// early scheduler.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub modes: Vec<Mode>,
    pub uses: Vec<ThreadSet>,
}

impl Assignment {
    /// Every class sequential on every thread; feasible for any instance.
    pub fn all_sequential(inst: &ProblemInstance) -> Self {
        Self {
            modes: vec![Mode::Seq; inst.num_classes()],
            uses: vec![ThreadSet::all(inst.threads()); inst.num_classes()],
        }
    }

    pub fn mode(&self, c: ClassId) -> Mode {
        self.modes[c.0]
    }

    pub fn threads_of(&self, c: ClassId) -> ThreadSet {
        self.uses[c.0]
    }

    pub fn num_classes(&self) -> usize {
        self.modes.len()
    }

    pub fn check_dims(&self, inst: &ProblemInstance) -> Result<(), OptimizerError> {
        let n = inst.num_classes();
        if self.modes.len() != n || self.uses.len() != n {
            return Err(OptimizerError::DimensionMismatch {
                expected: n,
                got: self.modes.len().min(self.uses.len()),
            });
        }
        let allowed = ThreadSet::all(inst.threads());
        for set in &self.uses {
            if !set.is_subset(allowed) {
                let thread = set.iter().find(|&t| !allowed.contains(t)).unwrap_or(0);
                return Err(OptimizerError::ThreadOutOfRange {
                    thread,
                    threads: inst.threads(),
                });
            }
        }
        Ok(())
    }

    /// Renames thread `t` to `perm[t]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        Self {
            modes: self.modes.clone(),
            uses: self
                .uses
                .iter()
                .map(|s| s.iter().map(|t| perm[t]).collect())
                .collect(),
        }
    }

    /// The encoding used to order cost-equal assignments: the sequential
    /// bit vector first, then the class-major thread matrix read from the
    /// last class down.
    pub fn encoding_cmp(&self, other: &Assignment) -> std::cmp::Ordering {
        let seq_bits = |a: &Assignment| {
            a.modes.iter().enumerate().fold(0u128, |acc, (c, m)| {
                if *m == Mode::Seq {
                    acc | 1u128 << c
                } else {
                    acc
                }
            })
        };
        seq_bits(self)
            .cmp(&seq_bits(other))
            .then_with(|| self.uses.iter().rev().cmp(other.uses.iter().rev()))
    }
}

/// The mapping rule an assignment breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    /// Every class has at least one thread.
    AtLeastOneThread,
    /// Internally conflicting classes are sequential.
    InternalConflictSequential,
    /// One side of every conflicting pair is sequential.
    ConflictOneSequential,
    /// A concurrent class's threads are included in each conflicting
    /// sequential class's threads.
    ConcurrentSubsetOfSequential,
    /// Conflicting sequential classes share a thread.
    SequentialPairShareThread,
}

impl Rule {
    pub fn label(self) -> &'static str {
        match self {
            Rule::AtLeastOneThread => "R.1",
            Rule::InternalConflictSequential => "R.2",
            Rule::ConflictOneSequential => "R.3",
            Rule::ConcurrentSubsetOfSequential => "R.4",
            Rule::SequentialPairShareThread => "R.5",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleViolation {
    pub rule: Rule,
    pub classes: Vec<ClassId>,
}

impl fmt::Display for RuleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.classes.iter().map(|c| c.to_string()).collect();
        write!(
            f,
            "{} violated by class(es) {}",
            self.rule.label(),
            ids.join(", ")
        )
    }
}

fn visit_violations<B>(
    inst: &ProblemInstance,
    a: &Assignment,
    mut f: impl FnMut(RuleViolation) -> ControlFlow<B>,
) -> ControlFlow<B> {
    let n = inst.num_classes();
    let v = |rule, classes: Vec<usize>| RuleViolation {
        rule,
        classes: classes.into_iter().map(ClassId).collect(),
    };
    for c in 0..n {
        if a.uses[c].is_empty() {
            f(v(Rule::AtLeastOneThread, vec![c]))?;
        }
        if inst.conflict(c, c) && a.modes[c] != Mode::Seq {
            f(v(Rule::InternalConflictSequential, vec![c]))?;
        }
    }
    for c1 in 0..n {
        for c2 in (c1 + 1)..n {
            if !inst.conflict(c1, c2) {
                continue;
            }
            match (a.modes[c1], a.modes[c2]) {
                (Mode::Cnc, Mode::Cnc) => f(v(Rule::ConflictOneSequential, vec![c1, c2]))?,
                (Mode::Seq, Mode::Cnc) if !a.uses[c2].is_subset(a.uses[c1]) => {
                    f(v(Rule::ConcurrentSubsetOfSequential, vec![c1, c2]))?
                }
                (Mode::Cnc, Mode::Seq) if !a.uses[c1].is_subset(a.uses[c2]) => {
                    f(v(Rule::ConcurrentSubsetOfSequential, vec![c2, c1]))?
                }
                (Mode::Seq, Mode::Seq) if a.uses[c1].intersection(a.uses[c2]).is_empty() => {
                    f(v(Rule::SequentialPairShareThread, vec![c1, c2]))?
                }
                _ => {}
            }
        }
    }
    ControlFlow::Continue(())
}

/// Lists every mapping-rule violation. Pairs are reported once with the
/// sequential class first for the subset rule.
pub fn check_feasible(
    inst: &ProblemInstance,
    a: &Assignment,
) -> Result<Vec<RuleViolation>, OptimizerError> {
    a.check_dims(inst)?;
    let mut out = Vec::new();
    let _ = visit_violations::<()>(inst, a, |v| {
        out.push(v);
        ControlFlow::Continue(())
    });
    Ok(out)
}

/// Short-circuiting feasibility test; dimensions are assumed valid.
pub fn is_feasible(inst: &ProblemInstance, a: &Assignment) -> bool {
    visit_violations(inst, a, |_| ControlFlow::Break(())).is_continue()
}

/// The four cost terms, kept apart for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub seq_threads: f64,
    pub cnc_threads: f64,
    pub balance: f64,
    pub shared_independent: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.seq_threads + self.cnc_threads + self.balance + self.shared_independent
    }
}

/// Cost terms of an assignment (feasibility not required):
///
/// * sequential classes pay `w[c]/ws` per thread,
/// * concurrent classes earn `w[c]/wc` per thread,
/// * concurrent classes pay `|w[c]/wc - |uses[c]|/nt|`,
/// * each unordered pair of independent sequential classes pays
///   `|uses[c1] ∩ uses[c2]| * nt * nc`.
///
/// `ws`/`wc` are the total weights of sequential/concurrent classes; a term
/// whose normalizer is zero contributes nothing.
pub fn cost_breakdown(inst: &ProblemInstance, a: &Assignment) -> CostBreakdown {
    let w = inst.effective_weights();
    let n = inst.num_classes();
    let nt = inst.threads() as f64;
    let (mut ws, mut wc) = (0.0, 0.0);
    for c in 0..n {
        match a.modes[c] {
            Mode::Seq => ws += w[c],
            Mode::Cnc => wc += w[c],
        }
    }
    let mut out = CostBreakdown::default();
    for c in 0..n {
        let k = a.uses[c].len() as f64;
        match a.modes[c] {
            Mode::Seq if ws > 0.0 => out.seq_threads += k * w[c] / ws,
            Mode::Cnc if wc > 0.0 => {
                out.cnc_threads -= k * w[c] / wc;
                out.balance += (w[c] / wc - k / nt).abs();
            }
            _ => {}
        }
    }
    for c1 in 0..n {
        for c2 in (c1 + 1)..n {
            if a.modes[c1] == Mode::Seq && a.modes[c2] == Mode::Seq && !inst.conflict(c1, c2) {
                let shared = a.uses[c1].intersection(a.uses[c2]).len() as f64;
                out.shared_independent += shared * nt * n as f64;
            }
        }
    }
    out
}

pub fn cost(inst: &ProblemInstance, a: &Assignment) -> f64 {
    cost_breakdown(inst, a).total()
}

/// Result of a search.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub assignment: Assignment,
    pub cost: f64,
    /// Whether the search proved the assignment optimal.
    pub optimal: bool,
    pub nodes_explored: u64,
    pub wall_time: Duration,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class_model::{builtin_topology, TopologyKind};
    use proptest::prelude::*;

    fn set(ts: &[usize]) -> ThreadSet {
        ts.iter().copied().collect()
    }

    fn rw(threads: usize) -> ProblemInstance {
        ProblemInstance::new(
            builtin_topology(TopologyKind::ReadersWriters, 1).unwrap(),
            threads,
        )
        .unwrap()
    }

    fn even_split_solution() -> (ProblemInstance, Assignment) {
        let t = builtin_topology(TopologyKind::ShardedGlobal, 2).unwrap();
        let inst = ProblemInstance::new(t, 8).unwrap();
        // C_R1, C_W1, C_R2, C_W2, C_Rg, C_Wg
        let a = Assignment {
            modes: vec![
                Mode::Cnc,
                Mode::Seq,
                Mode::Cnc,
                Mode::Seq,
                Mode::Seq,
                Mode::Seq,
            ],
            uses: vec![
                set(&[0, 1, 2, 3]),
                set(&[0, 1, 2, 3]),
                set(&[4, 5, 6, 7]),
                set(&[4, 5, 6, 7]),
                set(&[0, 4]),
                ThreadSet::all(8),
            ],
        };
        (inst, a)
    }

    #[test]
    fn two_shard_eight_thread_mapping_is_feasible() {
        let (inst, a) = even_split_solution();
        assert_eq!(check_feasible(&inst, &a).unwrap(), vec![]);
        // O.1a = 18/4, O.1b = -4, O.2 = 0, O.3 = 0
        let b = cost_breakdown(&inst, &a);
        assert_eq!(b.seq_threads, 4.5);
        assert_eq!(b.cnc_threads, -4.0);
        assert_eq!(b.balance, 0.0);
        assert_eq!(b.shared_independent, 0.0);
    }

    #[test]
    fn disjoint_reader_writer_threads_break_subset_rule() {
        let inst = rw(2);
        let a = Assignment {
            modes: vec![Mode::Cnc, Mode::Seq],
            uses: vec![set(&[0]), set(&[1])],
        };
        let v = check_feasible(&inst, &a).unwrap();
        assert_eq!(
            v,
            vec![RuleViolation {
                rule: Rule::ConcurrentSubsetOfSequential,
                classes: vec![ClassId(1), ClassId(0)],
            }]
        );
    }

    #[test]
    fn empty_thread_set_breaks_first_rule() {
        let inst = rw(2);
        let a = Assignment {
            modes: vec![Mode::Cnc, Mode::Seq],
            uses: vec![set(&[]), set(&[0])],
        };
        let v = check_feasible(&inst, &a).unwrap();
        assert_eq!(v[0].rule, Rule::AtLeastOneThread);
        assert_eq!(v[0].classes, vec![ClassId(0)]);
    }

    #[test]
    fn internal_conflict_and_pair_rules() {
        let inst = rw(2);
        let a = Assignment {
            modes: vec![Mode::Cnc, Mode::Cnc],
            uses: vec![set(&[0]), set(&[0])],
        };
        let rules: Vec<Rule> = check_feasible(&inst, &a)
            .unwrap()
            .iter()
            .map(|v| v.rule)
            .collect();
        assert_eq!(
            rules,
            vec![
                Rule::InternalConflictSequential,
                Rule::ConflictOneSequential
            ]
        );

        let a = Assignment {
            modes: vec![Mode::Seq, Mode::Seq],
            uses: vec![set(&[0]), set(&[1])],
        };
        let rules: Vec<Rule> = check_feasible(&inst, &a)
            .unwrap()
            .iter()
            .map(|v| v.rule)
            .collect();
        assert_eq!(rules, vec![Rule::SequentialPairShareThread]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let inst = rw(2);
        let a = Assignment {
            modes: vec![Mode::Seq],
            uses: vec![set(&[0])],
        };
        assert!(matches!(
            check_feasible(&inst, &a),
            Err(OptimizerError::DimensionMismatch { .. })
        ));
        let a = Assignment {
            modes: vec![Mode::Seq; 2],
            uses: vec![set(&[0]), set(&[5])],
        };
        assert_eq!(
            check_feasible(&inst, &a),
            Err(OptimizerError::ThreadOutOfRange {
                thread: 5,
                threads: 2
            })
        );
    }

    #[test]
    fn cost_hand_expansions() {
        let inst = rw(2);
        let full = Assignment {
            modes: vec![Mode::Cnc, Mode::Seq],
            uses: vec![set(&[0, 1]); 2],
        };
        let b = cost_breakdown(&inst, &full);
        assert_eq!(
            (
                b.seq_threads,
                b.cnc_threads,
                b.balance,
                b.shared_independent
            ),
            (2.0, -2.0, 0.0, 0.0)
        );
        assert_eq!(cost(&inst, &full), 0.0);

        let one = Assignment {
            modes: vec![Mode::Cnc, Mode::Seq],
            uses: vec![set(&[0]); 2],
        };
        let b = cost_breakdown(&inst, &one);
        assert_eq!((b.seq_threads, b.cnc_threads, b.balance), (1.0, -1.0, 0.5));
        assert_eq!(cost(&inst, &one), 0.5);

        let single = RequestClasses::from_edges(&["A"], &[]).unwrap();
        let inst = ProblemInstance::new(single, 2).unwrap();
        let a = Assignment {
            modes: vec![Mode::Cnc],
            uses: vec![set(&[0, 1])],
        };
        assert_eq!(cost(&inst, &a), -2.0);
    }

    #[test]
    fn independent_sequential_overlap_is_penalized() {
        let classes = RequestClasses::from_edges(&["A", "B"], &[("A", "A"), ("B", "B")]).unwrap();
        let inst = ProblemInstance::new(classes, 3).unwrap();
        let a = Assignment {
            modes: vec![Mode::Seq; 2],
            uses: vec![set(&[0, 1]), set(&[1, 2])],
        };
        // one shared thread * nt(3) * nc(2)
        assert_eq!(cost_breakdown(&inst, &a).shared_independent, 6.0);
    }

    #[test]
    fn zero_weights_are_lifted_to_epsilon() {
        let classes = RequestClasses::from_edges(&["A", "B"], &[])
            .unwrap()
            .with_weights(vec![0.0, 0.0])
            .unwrap();
        let inst = ProblemInstance::new(classes, 2).unwrap();
        let a = Assignment {
            modes: vec![Mode::Cnc; 2],
            uses: vec![set(&[0]), set(&[1])],
        };
        let c = cost(&inst, &a);
        assert!(c.is_finite());
        assert!((c - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn all_sequential_witness_is_feasible_for_builtins() {
        for (kind, shards) in [
            (TopologyKind::ReadersWriters, 1),
            (TopologyKind::ShardedSnapshot, 3),
            (TopologyKind::ShardedGlobal, 4),
        ] {
            let inst = ProblemInstance::new(builtin_topology(kind, shards).unwrap(), 5).unwrap();
            assert!(check_feasible(&inst, &Assignment::all_sequential(&inst))
                .unwrap()
                .is_empty());
        }
    }

    pub(crate) fn arb_instance(
        max_classes: usize,
        max_threads: usize,
    ) -> impl Strategy<Value = ProblemInstance> {
        (1..=max_classes, 1..=max_threads).prop_flat_map(|(n, nt)| {
            (
                prop::collection::vec(any::<bool>(), n * n),
                prop::collection::vec(prop_oneof![Just(0.0), 0.5f64..3.0], n),
                Just((n, nt)),
            )
                .prop_map(|(bits, weights, (n, nt))| {
                    let mut m = vec![vec![false; n]; n];
                    for i in 0..n {
                        for j in i..n {
                            m[i][j] = bits[i * n + j];
                            m[j][i] = bits[i * n + j];
                        }
                    }
                    let names = (0..n).map(|i| format!("K{i}")).collect();
                    ProblemInstance::new(RequestClasses::new(names, weights, m).unwrap(), nt)
                        .unwrap()
                })
        })
    }

    fn arb_assignment(inst: &ProblemInstance) -> impl Strategy<Value = Assignment> {
        let n = inst.num_classes();
        let mask = ThreadSet::all(inst.threads()).0;
        (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<u64>(), n),
        )
            .prop_map(move |(seq, raw)| Assignment {
                modes: seq
                    .into_iter()
                    .map(|s| if s { Mode::Seq } else { Mode::Cnc })
                    .collect(),
                uses: raw.into_iter().map(|r| ThreadSet(r & mask)).collect(),
            })
    }

    proptest! {
        #[test]
        fn all_sequential_always_feasible(inst in arb_instance(6, 8)) {
            prop_assert!(check_feasible(&inst, &Assignment::all_sequential(&inst)).unwrap().is_empty());
        }

        #[test]
        fn internal_conflicts_force_sequential(
            (inst, a) in arb_instance(5, 4).prop_flat_map(|i| { let s = arb_assignment(&i); (Just(i), s) })
        ) {
            if is_feasible(&inst, &a) {
                for c in 0..inst.num_classes() {
                    if inst.conflict(c, c) {
                        prop_assert_eq!(a.modes[c], Mode::Seq);
                    }
                }
            }
            prop_assert_eq!(is_feasible(&inst, &a), check_feasible(&inst, &a).unwrap().is_empty());
        }

        #[test]
        fn relabeling_threads_preserves_cost(
            (inst, a, perm) in arb_instance(5, 6).prop_flat_map(|i| {
                let nt = i.threads();
                let s = arb_assignment(&i);
                (Just(i), s, Just((0..nt).collect::<Vec<_>>()).prop_shuffle())
            })
        ) {
            let b = a.relabel(&perm);
            prop_assert!((cost(&inst, &a) - cost(&inst, &b)).abs() < 1e-9);
            prop_assert_eq!(is_feasible(&inst, &a), is_feasible(&inst, &b));
        }
    }
}
