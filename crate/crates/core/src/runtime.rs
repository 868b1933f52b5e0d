//! Types shared by the early and late replica runtimes.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crossbeam_channel::{Receiver, Sender};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class_model::{ClassId, ClassModelError, Request, RequestClasses};
use crate::early::EarlyConfig;
use crate::late::LateConfig;
use crate::optimizer::{OptimizerError, RuleViolation};
use crate::service::{ServiceConfig, ServiceOp};
use crate::verify::ExecutionTrace;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("class-to-thread mapping is infeasible: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Infeasible(Vec<RuleViolation>),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Classes(#[from] ClassModelError),
    #[error("request {global_seq} has unknown class {class}")]
    UnknownClass { global_seq: u64, class: ClassId },
    #[error("simulation stalled at tick {time} with {pending} request(s) outstanding")]
    Deadlock { time: u64, pending: usize },
    #[error("mapping has {mapping} classes but the topology has {topology}")]
    TopologyMismatch { mapping: usize, topology: usize },
    #[error("delivery out of order: expected sequence {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("worker thread panicked")]
    WorkerPanicked,
}

/// Real threads or the deterministic virtual-time simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    #[default]
    Sim,
    Threads,
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sim" => Ok(RunMode::Sim),
            "threads" => Ok(RunMode::Threads),
            other => Err(format!("unknown mode `{other}` (expected sim or threads)")),
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Sim => "sim",
            RunMode::Threads => "threads",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    #[default]
    Early,
    Late,
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "early" => Ok(SchedulerKind::Early),
            "late" => Ok(SchedulerKind::Late),
            other => Err(format!(
                "unknown scheduler `{other}` (expected early or late)"
            )),
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerKind::Early => "early",
            SchedulerKind::Late => "late",
        })
    }
}

/// Virtual-time charges used by the simulator, in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimCosts {
    /// Scheduler time to classify and enqueue one request.
    pub dispatch: u64,
    /// One rendezvous round on a class barrier with two or more parties.
    pub barrier: u64,
    /// Execution time per shard an operation touches.
    pub op: u64,
    /// Fixed time to hold the dependency-graph lock.
    pub graph_base: u64,
    /// The lock is held one extra tick per this many graph nodes.
    pub graph_nodes_per_tick: u64,
}

impl Default for SimCosts {
    fn default() -> Self {
        Self {
            dispatch: 1,
            barrier: 1,
            op: 1,
            graph_base: 1,
            graph_nodes_per_tick: 16,
        }
    }
}

impl SimCosts {
    pub fn with_op(op: u64) -> Self {
        Self {
            op,
            ..Self::default()
        }
    }

    pub fn op_cost(&self, op: &ServiceOp, num_shards: usize) -> u64 {
        if op.is_global() {
            self.op * num_shards as u64
        } else {
            self.op
        }
    }

    pub fn graph_hold(&self, nodes: usize) -> u64 {
        self.graph_base + nodes as u64 / self.graph_nodes_per_tick.max(1)
    }
}

/// A response leaving a replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Completion {
    pub global_seq: u64,
    pub client_id: u32,
    pub client_seq: u64,
    pub class_id: ClassId,
    pub response: bool,
    /// Sim ticks, or nanoseconds since the replica started.
    pub time: u64,
}

/// Counters collected by a runtime.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuntimeStats {
    /// Time of the last completion.
    pub makespan: u64,
    /// Per-worker time spent executing or inside a rendezvous.
    pub busy: Vec<u64>,
    /// Completed rendezvous rounds with two or more parties.
    pub rendezvous: u64,
    /// Times the late scheduler found the graph full.
    pub graph_blocked: u64,
    /// Total time the late scheduler spent blocked on a full graph.
    pub graph_blocked_time: u64,
    pub max_graph_nodes: usize,
    /// Times a shard lock was found held when the service tried to take it.
    pub contention: u64,
}

#[derive(Debug, Clone)]
pub struct ReplicaOutcome {
    pub digest: u64,
    pub trace: ExecutionTrace,
    /// In completion order.
    pub completions: Vec<Completion>,
    pub stats: RuntimeStats,
}

/// Which scheduler a replica runs, with its parameters.
#[derive(Debug, Clone)]
pub enum SchedulerConfig {
    Early(EarlyConfig),
    Late(LateConfig),
}

impl SchedulerConfig {
    pub fn kind(&self) -> SchedulerKind {
        match self {
            SchedulerConfig::Early(_) => SchedulerKind::Early,
            SchedulerConfig::Late(_) => SchedulerKind::Late,
        }
    }

    pub fn workers(&self) -> usize {
        match self {
            SchedulerConfig::Early(c) => c.instance.threads(),
            SchedulerConfig::Late(c) => c.workers,
        }
    }

    pub fn classes(&self) -> &RequestClasses {
        match self {
            SchedulerConfig::Early(c) => c.instance.classes(),
            SchedulerConfig::Late(c) => &c.classes,
        }
    }
}

/// A simulated replica that is fed deliveries and stepped until idle.
pub trait SimReplica {
    /// Makes `req` available to the scheduler at tick `at`, which must not
    /// be earlier than the last completion returned.
    fn deliver(&mut self, req: Arc<Request>, at: u64);

    /// Runs events up to and including the next completion. `Ok(None)`
    /// means the replica is idle with nothing left to do.
    fn advance(&mut self) -> Result<Option<Completion>, RuntimeError>;

    fn finish(self: Box<Self>) -> ReplicaOutcome;
}

pub fn sim_replica(
    replica: usize,
    sched: &SchedulerConfig,
    service: &ServiceConfig,
    costs: SimCosts,
) -> Result<Box<dyn SimReplica>, RuntimeError> {
    Ok(match sched {
        SchedulerConfig::Early(c) => {
            Box::new(crate::early::EarlySim::new(replica, c, service, costs)?)
        }
        SchedulerConfig::Late(c) => Box::new(crate::late::LateSim::new(replica, c, service, costs)),
    })
}

/// Hands out totally ordered timestamps for threads-mode traces. Every
/// stamp is a sequentially consistent read-modify-write on one counter,
/// so stamp order agrees with happens-before between workers.
#[derive(Debug, Default)]
pub struct LogicalClock(AtomicU64);

impl LogicalClock {
    pub fn stamp(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst)
    }
}

/// A running threads-mode replica. The replica shuts down once the input
/// channel is closed and drained.
pub struct ThreadReplica {
    handle: JoinHandle<Result<ReplicaOutcome, RuntimeError>>,
}

impl ThreadReplica {
    pub fn spawn(
        replica: usize,
        sched: &SchedulerConfig,
        service: &ServiceConfig,
        input: Receiver<Arc<Request>>,
        notify: Option<Sender<Completion>>,
    ) -> Result<Self, RuntimeError> {
        let handle = match sched {
            SchedulerConfig::Early(c) => {
                crate::early::spawn_threads(replica, c, service, input, notify)?
            }
            SchedulerConfig::Late(c) => {
                crate::late::spawn_threads(replica, c, service, input, notify)
            }
        };
        Ok(Self { handle })
    }

    pub fn join(self) -> Result<ReplicaOutcome, RuntimeError> {
        self.handle
            .join()
            .map_err(|_| RuntimeError::WorkerPanicked)?
    }
}

/// Executes an already ordered stream on one replica. In sim mode every
/// request is available at tick 0.
pub fn run_replica(
    requests: &[Request],
    sched: &SchedulerConfig,
    service: &ServiceConfig,
    mode: RunMode,
    costs: SimCosts,
) -> Result<ReplicaOutcome, RuntimeError> {
    for (i, r) in requests.iter().enumerate() {
        let expected = requests[0].global_seq + i as u64;
        if r.global_seq != expected {
            return Err(RuntimeError::OutOfOrder {
                expected,
                got: r.global_seq,
            });
        }
    }
    match mode {
        RunMode::Sim => {
            let mut sim = sim_replica(0, sched, service, costs)?;
            for r in requests {
                sim.deliver(Arc::new(r.clone()), 0);
            }
            while sim.advance()?.is_some() {}
            Ok(sim.finish())
        }
        RunMode::Threads => {
            let (tx, rx) = crossbeam_channel::unbounded();
            let replica = ThreadReplica::spawn(0, sched, service, rx, None)?;
            for r in requests {
                let _ = tx.send(Arc::new(r.clone()));
            }
            drop(tx);
            replica.join()
        }
    }
}

struct Scheduled<E> {
    time: u64,
    order: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.order) == (other.time, other.order)
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (other.time, other.order).cmp(&(self.time, self.order))
    }
}

/// Min-heap of timed events; equal times pop in insertion order.
pub(crate) struct EventQueue<E> {
    heap: std::collections::BinaryHeap<Scheduled<E>>,
    next_order: u64,
}

impl<E> EventQueue<E> {
    pub(crate) fn new() -> Self {
        Self {
            heap: std::collections::BinaryHeap::new(),
            next_order: 0,
        }
    }

    pub(crate) fn push(&mut self, time: u64, event: E) {
        self.heap.push(Scheduled {
            time,
            order: self.next_order,
            event,
        });
        self.next_order += 1;
    }

    pub(crate) fn pop(&mut self) -> Option<(u64, E)> {
        self.heap.pop().map(|s| (s.time, s.event))
    }
}
