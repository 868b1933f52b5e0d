//! Checkers for execution traces and client histories.

mod history;
mod trace;

pub use history::{
    check_linearizable_small, sample_key_windows, ClientHistory, HistoryError, HistoryOp,
    KeyMembership, SampleReport, SequentialSpec, MAX_SMALL_HISTORY,
};
pub use trace::{ExecutionTrace, TraceError, TraceRecord};

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::class_model::{AccessSets, ObjectId, Request, RequestClasses};

/// Two conflicting requests whose executions overlapped or ran in the
/// wrong order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderViolation {
    pub earlier: u64,
    pub later: u64,
}

impl fmt::Display for OrderViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "request {} started before conflicting request {} ended",
            self.later, self.earlier
        )
    }
}

fn request_index(requests: &[Request]) -> HashMap<u64, &Request> {
    requests.iter().map(|r| (r.global_seq, r)).collect()
}

/// Reference check: tests every pair of executed requests with `conflicts`.
/// Quadratic, meant for small traces and for cross-checking.
pub fn check_conflict_order_pairwise<F>(
    trace: &ExecutionTrace,
    requests: &[Request],
    conflicts: F,
) -> Result<Vec<OrderViolation>, TraceError>
where
    F: Fn(&Request, &Request) -> bool,
{
    trace.validate()?;
    let index = request_index(requests);
    let recs = &trace.records;
    let mut out = Vec::new();
    for (i, a) in recs.iter().enumerate() {
        let ra = index
            .get(&a.global_seq)
            .ok_or(TraceError::Unexpected(a.global_seq))?;
        for b in &recs[i + 1..] {
            let rb = index
                .get(&b.global_seq)
                .ok_or(TraceError::Unexpected(b.global_seq))?;
            if conflicts(ra, rb) && a.t_end > b.t_start {
                out.push(OrderViolation {
                    earlier: a.global_seq,
                    later: b.global_seq,
                });
            }
        }
    }
    Ok(out)
}

/// Checks that for every conflicting pair under `access`, the earlier
/// request ends no later than the later one starts. Sweeps each object's
/// accesses in sequence order instead of testing all pairs, and reports
/// for each offending access the earlier request that ended last.
pub fn check_conflict_order<F>(
    trace: &ExecutionTrace,
    requests: &[Request],
    access: F,
) -> Result<Vec<OrderViolation>, TraceError>
where
    F: Fn(&Request) -> AccessSets,
{
    trace.validate()?;
    let index = request_index(requests);
    let mut by_object: HashMap<ObjectId, Vec<(u64, bool)>> = HashMap::new();
    for r in &trace.records {
        let req = index
            .get(&r.global_seq)
            .ok_or(TraceError::Unexpected(r.global_seq))?;
        for (obj, writes) in access(req).objects() {
            by_object
                .entry(obj)
                .or_default()
                .push((r.global_seq, writes));
        }
    }
    let mut out = BTreeSet::new();
    for accesses in by_object.values() {
        // Records are sorted by sequence, so each list already is.
        let mut last_write: Option<(u64, u64)> = None;
        let mut last_any: Option<(u64, u64)> = None;
        for &(seq, writes) in accesses {
            let rec = trace.record(seq).expect("record vanished");
            let bound = if writes { last_any } else { last_write };
            if let Some((end, earlier)) = bound {
                if end > rec.t_start {
                    out.insert(OrderViolation {
                        earlier,
                        later: seq,
                    });
                }
            }
            let mine = (rec.t_end, seq);
            if writes {
                last_write = last_write.max(Some(mine));
            }
            last_any = last_any.max(Some(mine));
        }
    }
    Ok(out.into_iter().collect())
}

/// Conflict-order check at class granularity, for traces without
/// payloads. Sweeps records in sequence order keeping, per class, the
/// request that ended last.
pub fn check_class_order(
    trace: &ExecutionTrace,
    classes: &RequestClasses,
) -> Result<Vec<OrderViolation>, TraceError> {
    trace.validate()?;
    let n = classes.len();
    let mut last: Vec<Option<(u64, u64)>> = vec![None; n];
    let mut out = Vec::new();
    for r in &trace.records {
        let k = classes
            .check_id(r.class)
            .map_err(|_| TraceError::Unexpected(r.global_seq))?;
        for c in classes.ids() {
            if !classes.conflicts(c, k) {
                continue;
            }
            if let Some((end, earlier)) = last[c.0] {
                if end > r.t_start {
                    out.push(OrderViolation {
                        earlier,
                        later: r.global_seq,
                    });
                }
            }
        }
        last[k.0] = last[k.0].max(Some((r.t_end, r.global_seq)));
    }
    Ok(out)
}

/// Ways an execution can break first-in first-out delivery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FifoViolation {
    /// The scheduler saw sequence numbers out of order.
    Delivery {
        position: usize,
        previous: u64,
        next: u64,
    },
    /// A worker queue released requests out of order.
    Queue {
        worker: usize,
        previous: u64,
        next: u64,
    },
    /// A worker executed requests in a different order than it dequeued them.
    Execution {
        worker: usize,
        previous: u64,
        next: u64,
    },
}

impl fmt::Display for FifoViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FifoViolation::Delivery {
                position,
                previous,
                next,
            } => {
                write!(f, "delivery position {position}: {next} after {previous}")
            }
            FifoViolation::Queue {
                worker,
                previous,
                next,
            } => {
                write!(f, "worker {worker} dequeued {next} after {previous}")
            }
            FifoViolation::Execution {
                worker,
                previous,
                next,
            } => {
                write!(f, "worker {worker} executed {next} after {previous}")
            }
        }
    }
}

/// Delivery must follow the total order and each worker queue must hand
/// out requests in that order. For schedulers with per-worker queues,
/// each worker's executions must also follow its queue.
pub fn check_fifo(trace: &ExecutionTrace) -> Vec<FifoViolation> {
    let mut out = Vec::new();
    for (i, w) in trace.delivered.windows(2).enumerate() {
        if w[1] <= w[0] {
            out.push(FifoViolation::Delivery {
                position: i + 1,
                previous: w[0],
                next: w[1],
            });
        }
    }
    for (worker, log) in trace.dequeued.iter().enumerate() {
        for w in log.windows(2) {
            if w[1] <= w[0] {
                out.push(FifoViolation::Queue {
                    worker,
                    previous: w[0],
                    next: w[1],
                });
            }
        }
    }
    if !trace.dequeued.is_empty() {
        let mut per_worker: Vec<Vec<(u64, u64)>> = vec![Vec::new(); trace.dequeued.len()];
        for r in &trace.records {
            if let Some(v) = per_worker.get_mut(r.worker) {
                v.push((r.exec_index, r.global_seq));
            }
        }
        for (worker, mut v) in per_worker.into_iter().enumerate() {
            v.sort_unstable();
            for w in v.windows(2) {
                if w[1].1 <= w[0].1 {
                    out.push(FifoViolation::Execution {
                        worker,
                        previous: w[0].1,
                        next: w[1].1,
                    });
                }
            }
        }
    }
    out
}

/// True when every replica reports the same digest.
pub fn check_convergence(digests: &[u64]) -> bool {
    digests.windows(2).all(|w| w[0] == w[1])
}
