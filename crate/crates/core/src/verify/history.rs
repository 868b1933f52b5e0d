use std::collections::HashSet;
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::service::{ServiceConfig, ServiceOp};

/// Largest history [`check_linearizable_small`] accepts.
pub const MAX_SMALL_HISTORY: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HistoryError {
    #[error("history has {0} operations, more than {MAX_SMALL_HISTORY}")]
    TooLarge(usize),
    #[error("client {client} has overlapping operations")]
    Overlap { client: u32 },
    #[error("operation responds at {response} before it is invoked at {invoke}")]
    BadInterval { invoke: u64, response: u64 },
    #[error("window sampling supports only the list service")]
    UnsupportedService,
}

/// One completed client operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryOp {
    pub client: u32,
    pub invoke: u64,
    pub response_time: u64,
    pub op: ServiceOp,
    pub response: bool,
}

impl HistoryOp {
    /// Real-time order. A closed-loop client may issue its next operation
    /// at the same instant the previous one returned.
    fn precedes(&self, other: &HistoryOp) -> bool {
        self.response_time < other.invoke
            || (self.client == other.client && self.response_time <= other.invoke)
    }
}

/// Operations observed by clients, in invocation order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClientHistory {
    pub ops: Vec<HistoryOp>,
}

impl ClientHistory {
    pub fn new(mut ops: Vec<HistoryOp>) -> Self {
        ops.sort_by_key(|o| (o.invoke, o.client, o.response_time));
        Self { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Intervals are well formed and no client has two operations in flight.
    pub fn validate(&self) -> Result<(), HistoryError> {
        let mut last: std::collections::HashMap<u32, u64> = std::collections::HashMap::new();
        for o in &self.ops {
            if o.response_time < o.invoke {
                return Err(HistoryError::BadInterval {
                    invoke: o.invoke,
                    response: o.response_time,
                });
            }
            if let Some(&prev) = last.get(&o.client) {
                if prev > o.invoke {
                    return Err(HistoryError::Overlap { client: o.client });
                }
            }
            last.insert(o.client, o.response_time);
        }
        Ok(())
    }
}

/// A sequential object to linearize against.
pub trait SequentialSpec {
    type State: Clone + Eq + Hash;

    /// Next state and the response `op` must give.
    fn apply(&self, state: &Self::State, op: &ServiceOp) -> (Self::State, bool);
}

/// One key of the list service, as the set of shards holding it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyMembership {
    pub num_shards: usize,
}

impl KeyMembership {
    fn all(&self) -> u64 {
        if self.num_shards >= 64 {
            u64::MAX
        } else {
            (1u64 << self.num_shards) - 1
        }
    }
}

impl SequentialSpec for KeyMembership {
    type State = u64;

    fn apply(&self, state: &u64, op: &ServiceOp) -> (u64, bool) {
        let all = self.all();
        match *op {
            ServiceOp::Contains { shard, .. } => (*state, state & (1 << shard) != 0),
            ServiceOp::Add { shard, .. } => (state | (1 << shard), state & (1 << shard) == 0),
            ServiceOp::ContainsAll { .. } => (*state, state & all == all),
            ServiceOp::AddAll { .. } => (state | all, state & all == 0),
        }
    }
}

/// Searches for an order of `ops` that respects real time and reproduces
/// every response from `initial`. Returns the indices of a witness order,
/// or `None` when the history is not linearizable.
pub fn check_linearizable_small<S: SequentialSpec>(
    ops: &[HistoryOp],
    spec: &S,
    initial: S::State,
) -> Result<Option<Vec<usize>>, HistoryError> {
    if ops.len() > MAX_SMALL_HISTORY {
        return Err(HistoryError::TooLarge(ops.len()));
    }
    let n = ops.len();
    let mut preds = vec![0u32; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && ops[j].precedes(&ops[i]) {
                preds[i] |= 1 << j;
            }
        }
    }
    let mut failed = HashSet::new();
    let mut order = Vec::with_capacity(n);
    let found = search(ops, spec, &preds, 0, initial, &mut order, &mut failed);
    Ok(found.then_some(order))
}

fn search<S: SequentialSpec>(
    ops: &[HistoryOp],
    spec: &S,
    preds: &[u32],
    done: u32,
    state: S::State,
    order: &mut Vec<usize>,
    failed: &mut HashSet<(u32, S::State)>,
) -> bool {
    if order.len() == ops.len() {
        return true;
    }
    if failed.contains(&(done, state.clone())) {
        return false;
    }
    for i in 0..ops.len() {
        if done & (1 << i) != 0 || preds[i] & !done != 0 {
            continue;
        }
        let (next, resp) = spec.apply(&state, &ops[i].op);
        if resp != ops[i].response {
            continue;
        }
        order.push(i);
        if search(ops, spec, preds, done | (1 << i), next, order, failed) {
            return true;
        }
        order.pop();
    }
    failed.insert((done, state));
    false
}

/// Outcome of [`sample_key_windows`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampleReport {
    /// Windows of at most [`MAX_SMALL_HISTORY`] operations available.
    pub eligible: usize,
    /// Windows too large to check.
    pub oversized: usize,
    pub checked: usize,
    /// Operations across the checked windows.
    pub checked_ops: usize,
    /// Invocation times of the first operation of each failing window.
    pub failures: Vec<(u64, u64)>,
}

impl SampleReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Splits the history of each key at quiescent points, where every
/// earlier operation on the key returned before any later one was
/// invoked, and checks up to `samples` of the resulting windows with
/// [`check_linearizable_small`]. Adds to one key commute, so the state at
/// a window's start is the initial membership plus every earlier add.
pub fn sample_key_windows(
    history: &ClientHistory,
    service: &ServiceConfig,
    samples: usize,
    seed: u64,
) -> Result<SampleReport, HistoryError> {
    let ServiceConfig::List { num_shards, .. } = *service else {
        return Err(HistoryError::UnsupportedService);
    };
    history.validate()?;
    let spec = KeyMembership { num_shards };
    let mut per_key: std::collections::BTreeMap<u64, Vec<HistoryOp>> =
        std::collections::BTreeMap::new();
    for o in &history.ops {
        per_key.entry(o.op.key()).or_default().push(*o);
    }
    let mut windows: Vec<(u64, Vec<HistoryOp>, u64)> = Vec::new();
    let mut report = SampleReport::default();
    for (&key, ops) in &per_key {
        let mut state = if service.initially_contains(key) {
            spec.all()
        } else {
            0
        };
        let mut start = 0;
        let mut max_resp = 0;
        for i in 0..ops.len() {
            max_resp = max_resp.max(ops[i].response_time);
            let cut = i + 1 == ops.len() || max_resp < ops[i + 1].invoke;
            if !cut {
                continue;
            }
            let window = &ops[start..=i];
            if window.len() <= MAX_SMALL_HISTORY {
                windows.push((key, window.to_vec(), state));
            } else {
                report.oversized += 1;
            }
            for o in window {
                state = spec.apply(&state, &o.op).0;
            }
            start = i + 1;
        }
    }
    report.eligible = windows.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    windows.shuffle(&mut rng);
    windows.truncate(samples);
    for (key, ops, state) in &windows {
        if check_linearizable_small(ops, &spec, *state)?.is_none() {
            report.failures.push((*key, ops[0].invoke));
        }
        report.checked += 1;
        report.checked_ops += ops.len();
    }
    Ok(report)
}
