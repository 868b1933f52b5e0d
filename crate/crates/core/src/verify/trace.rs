use std::collections::HashSet;

use thiserror::Error;

use crate::class_model::{ClassId, RequestClasses};
use crate::optimizer::ThreadSet;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("request {0} appears more than once")]
    Duplicate(u64),
    #[error("delivered request {0} was never executed")]
    Missing(u64),
    #[error("request {0} was executed but never delivered")]
    Unexpected(u64),
    #[error("worker {worker} execution indices are not dense")]
    ExecIndexGap { worker: usize },
    #[error("request {0} ends before it starts")]
    BadInterval(u64),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown class `{name}`")]
    UnknownClass { line: usize, name: String },
}

/// One executed request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub global_seq: u64,
    pub class: ClassId,
    /// Worker that ran the operation.
    pub worker: usize,
    /// Position among the requests this worker executed (dense from 0).
    pub exec_index: u64,
    pub t_start: u64,
    pub t_end: u64,
    /// Workers that took part in the rendezvous (just `worker` for
    /// concurrent requests).
    pub participants: ThreadSet,
}

/// What one replica did with its delivered stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub replica: usize,
    /// Sorted by `global_seq` once the run finishes.
    pub records: Vec<TraceRecord>,
    /// Per worker, the sequence numbers in the order they left the
    /// worker's queue. Empty for schedulers without per-worker queues.
    pub dequeued: Vec<Vec<u64>>,
    /// Sequence numbers in delivery order.
    pub delivered: Vec<u64>,
}

impl ExecutionTrace {
    pub fn new(replica: usize, queues: usize) -> Self {
        Self {
            replica,
            records: Vec::new(),
            dequeued: vec![Vec::new(); queues],
            delivered: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sort(&mut self) {
        self.records.sort_by_key(|r| r.global_seq);
    }

    pub fn record(&self, global_seq: u64) -> Option<&TraceRecord> {
        self.records
            .binary_search_by_key(&global_seq, |r| r.global_seq)
            .ok()
            .map(|i| &self.records[i])
    }

    /// Structural checks: each delivered request executed exactly once,
    /// intervals well formed, execution indices dense per worker.
    pub fn validate(&self) -> Result<(), TraceError> {
        let mut seen = HashSet::with_capacity(self.records.len());
        let mut per_worker: Vec<Vec<u64>> = Vec::new();
        for r in &self.records {
            if !seen.insert(r.global_seq) {
                return Err(TraceError::Duplicate(r.global_seq));
            }
            if r.t_end < r.t_start {
                return Err(TraceError::BadInterval(r.global_seq));
            }
            if per_worker.len() <= r.worker {
                per_worker.resize(r.worker + 1, Vec::new());
            }
            per_worker[r.worker].push(r.exec_index);
        }
        let delivered: HashSet<u64> = self.delivered.iter().copied().collect();
        if let Some(&s) = self.delivered.iter().find(|s| !seen.contains(s)) {
            return Err(TraceError::Missing(s));
        }
        if let Some(r) = self
            .records
            .iter()
            .find(|r| !delivered.contains(&r.global_seq))
        {
            return Err(TraceError::Unexpected(r.global_seq));
        }
        for (worker, mut idx) in per_worker.into_iter().enumerate() {
            idx.sort_unstable();
            if idx.iter().enumerate().any(|(i, &x)| x != i as u64) {
                return Err(TraceError::ExecIndexGap { worker });
            }
        }
        Ok(())
    }

    /// Tab-separated dump: `global_seq class worker exec_index t_start t_end`.
    pub fn to_tsv(&self, classes: &RequestClasses) -> String {
        let mut out = String::from("# global_seq\tclass\tworker\texec_index\tt_start\tt_end\n");
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.global_seq,
                classes.name(r.class),
                r.worker,
                r.exec_index,
                r.t_start,
                r.t_end
            ));
        }
        out
    }

    /// Reads a dump written by [`ExecutionTrace::to_tsv`]. The delivery
    /// order is taken to be `global_seq` order and participants are not
    /// recoverable (each record lists only its executing worker).
    pub fn parse_tsv(text: &str, classes: &RequestClasses) -> Result<Self, TraceError> {
        let mut trace = ExecutionTrace::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = content.split('\t').collect();
            if cols.len() != 6 {
                return Err(TraceError::Syntax {
                    line,
                    msg: format!("expected 6 columns, got {}", cols.len()),
                });
            }
            let num = |i: usize| {
                cols[i]
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| TraceError::Syntax {
                        line,
                        msg: format!("bad number `{}`", cols[i]),
                    })
            };
            let class =
                classes
                    .index_of(cols[1].trim())
                    .ok_or_else(|| TraceError::UnknownClass {
                        line,
                        name: cols[1].trim().to_string(),
                    })?;
            let worker = num(2)? as usize;
            trace.records.push(TraceRecord {
                global_seq: num(0)?,
                class,
                worker,
                exec_index: num(3)?,
                t_start: num(4)?,
                t_end: num(5)?,
                participants: ThreadSet::single(worker),
            });
        }
        trace.sort();
        trace.delivered = trace.records.iter().map(|r| r.global_seq).collect();
        Ok(trace)
    }
}
