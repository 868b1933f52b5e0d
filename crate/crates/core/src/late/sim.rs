use std::collections::VecDeque;
use std::sync::Arc;

use super::{DependencyGraph, LateConfig};
use crate::class_model::Request;
use crate::optimizer::ThreadSet;
use crate::runtime::{
    Completion, EventQueue, ReplicaOutcome, RuntimeError, RuntimeStats, SimCosts, SimReplica,
};
use crate::service::{Service, ServiceConfig};
use crate::verify::{ExecutionTrace, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Actor {
    Scheduler,
    Worker(usize),
}

enum Outcome {
    Inserted,
    Full,
    Took(Option<Arc<Request>>),
    Completed,
}

enum Event {
    Arrive(Arc<Request>),
    Prepared,
    Unlock {
        actor: Actor,
        outcome: Outcome,
    },
    ExecDone {
        worker: usize,
        req: Arc<Request>,
        t_start: u64,
        response: bool,
    },
}

enum Scheduler {
    Idle,
    Preparing(Arc<Request>),
    Waiting(Arc<Request>),
    Blocked { req: Arc<Request>, since: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Worker {
    Sleeping,
    WantTake,
    WantComplete(u64),
    Busy,
}

/// Virtual-time replica running the late scheduler.
///
/// The graph sits behind one FIFO lock. Every insert, take and completion
/// holds it for `graph_base + nodes / graph_nodes_per_tick` ticks, with
/// the node count taken when the lock is granted. The scheduler spends
/// `dispatch` ticks on a request before asking for the lock. A worker
/// that finds nothing ready sleeps until an insert or completion makes a
/// node ready.
pub struct LateSim {
    service: Box<dyn Service>,
    num_shards: usize,
    costs: SimCosts,
    num_classes: usize,
    graph: DependencyGraph,
    now: u64,
    events: EventQueue<Event>,
    inbox: VecDeque<Arc<Request>>,
    scheduler: Scheduler,
    workers: Vec<Worker>,
    lock_held: bool,
    lock_queue: VecDeque<Actor>,
    executed: Vec<u64>,
    outstanding: usize,
    ready: VecDeque<Completion>,
    failure: Option<RuntimeError>,
    trace: ExecutionTrace,
    completions: Vec<Completion>,
    stats: RuntimeStats,
}

impl LateSim {
    pub fn new(
        replica: usize,
        config: &LateConfig,
        service: &ServiceConfig,
        costs: SimCosts,
    ) -> Self {
        let nt = config.workers;
        Self {
            service: service.build(),
            num_shards: service.num_shards(),
            costs,
            num_classes: config.classes.len(),
            graph: DependencyGraph::new(config.oracle(), config.capacity),
            now: 0,
            events: EventQueue::new(),
            inbox: VecDeque::new(),
            scheduler: Scheduler::Idle,
            workers: vec![Worker::Sleeping; nt],
            lock_held: false,
            lock_queue: VecDeque::new(),
            executed: vec![0; nt],
            outstanding: 0,
            ready: VecDeque::new(),
            failure: None,
            trace: ExecutionTrace::new(replica, 0),
            completions: Vec::new(),
            stats: RuntimeStats {
                busy: vec![0; nt],
                ..RuntimeStats::default()
            },
        }
    }

    /// Wakes sleeping workers for ready nodes nobody is queued to take.
    fn wake_sleepers(&mut self) {
        let takers = self
            .workers
            .iter()
            .filter(|w| **w == Worker::WantTake)
            .count();
        let mut spare = self.graph.ready_count().saturating_sub(takers);
        for w in 0..self.workers.len() {
            if spare == 0 {
                break;
            }
            if self.workers[w] == Worker::Sleeping {
                self.workers[w] = Worker::WantTake;
                self.lock_queue.push_back(Actor::Worker(w));
                spare -= 1;
            }
        }
    }

    fn grant(&mut self, actor: Actor) {
        let hold = self.costs.graph_hold(self.graph.len());
        let outcome = match actor {
            Actor::Scheduler => {
                let Scheduler::Waiting(req) =
                    std::mem::replace(&mut self.scheduler, Scheduler::Idle)
                else {
                    unreachable!("scheduler granted the lock without a pending insert");
                };
                match self.graph.try_insert(req) {
                    Ok(_) => {
                        self.stats.max_graph_nodes =
                            self.stats.max_graph_nodes.max(self.graph.len());
                        Outcome::Inserted
                    }
                    Err(req) => {
                        self.stats.graph_blocked += 1;
                        self.scheduler = Scheduler::Blocked {
                            req,
                            since: self.now,
                        };
                        Outcome::Full
                    }
                }
            }
            Actor::Worker(w) => match self.workers[w] {
                Worker::WantTake => Outcome::Took(self.graph.take_ready()),
                Worker::WantComplete(seq) => {
                    self.graph.complete(seq);
                    Outcome::Completed
                }
                other => unreachable!("worker {w} granted the lock while {other:?}"),
            },
        };
        self.lock_held = true;
        self.events
            .push(self.now + hold, Event::Unlock { actor, outcome });
    }

    fn unlock(&mut self, actor: Actor, outcome: Outcome) {
        self.lock_held = false;
        match (actor, outcome) {
            (Actor::Scheduler, Outcome::Inserted) => {}
            (Actor::Scheduler, Outcome::Full) => {}
            (Actor::Worker(w), Outcome::Took(Some(req))) => {
                self.workers[w] = Worker::Busy;
                let response = self.service.execute(&req.payload);
                let cost = self.costs.op_cost(&req.payload, self.num_shards);
                self.stats.busy[w] += cost;
                let t_start = self.now;
                self.events.push(
                    t_start + cost,
                    Event::ExecDone {
                        worker: w,
                        req,
                        t_start,
                        response,
                    },
                );
            }
            (Actor::Worker(w), Outcome::Took(None)) => self.workers[w] = Worker::Sleeping,
            (Actor::Worker(w), Outcome::Completed) => {
                self.workers[w] = Worker::WantTake;
                self.lock_queue.push_back(actor);
                if let Scheduler::Blocked { .. } = self.scheduler {
                    let Scheduler::Blocked { req, since } =
                        std::mem::replace(&mut self.scheduler, Scheduler::Idle)
                    else {
                        unreachable!()
                    };
                    self.stats.graph_blocked_time += self.now - since;
                    self.scheduler = Scheduler::Waiting(req);
                    self.lock_queue.push_back(Actor::Scheduler);
                }
            }
            _ => unreachable!("mismatched lock outcome"),
        }
        self.wake_sleepers();
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::Arrive(req) => self.inbox.push_back(req),
            Event::Prepared => {
                let Scheduler::Preparing(req) =
                    std::mem::replace(&mut self.scheduler, Scheduler::Idle)
                else {
                    unreachable!("prepared without a request");
                };
                self.scheduler = Scheduler::Waiting(req);
                self.lock_queue.push_back(Actor::Scheduler);
            }
            Event::Unlock { actor, outcome } => self.unlock(actor, outcome),
            Event::ExecDone {
                worker,
                req,
                t_start,
                response,
            } => {
                let exec_index = self.executed[worker];
                self.executed[worker] += 1;
                self.trace.records.push(TraceRecord {
                    global_seq: req.global_seq,
                    class: req.class_id,
                    worker,
                    exec_index,
                    t_start,
                    t_end: self.now,
                    participants: ThreadSet::single(worker),
                });
                let done = Completion {
                    global_seq: req.global_seq,
                    client_id: req.client_id,
                    client_seq: req.client_seq,
                    class_id: req.class_id,
                    response,
                    time: self.now,
                };
                self.completions.push(done);
                self.ready.push_back(done);
                self.outstanding -= 1;
                self.workers[worker] = Worker::WantComplete(req.global_seq);
                self.lock_queue.push_back(Actor::Worker(worker));
            }
        }
    }

    fn settle(&mut self) {
        loop {
            let mut progress = false;
            if matches!(self.scheduler, Scheduler::Idle) {
                if let Some(req) = self.inbox.pop_front() {
                    self.trace.delivered.push(req.global_seq);
                    if req.class_id.0 >= self.num_classes {
                        self.failure.get_or_insert(RuntimeError::UnknownClass {
                            global_seq: req.global_seq,
                            class: req.class_id,
                        });
                        self.outstanding -= 1;
                    } else {
                        self.scheduler = Scheduler::Preparing(req);
                        self.events
                            .push(self.now + self.costs.dispatch, Event::Prepared);
                    }
                    progress = true;
                }
            }
            if !self.lock_held {
                if let Some(actor) = self.lock_queue.pop_front() {
                    self.grant(actor);
                    progress = true;
                }
            }
            if !progress {
                break;
            }
        }
    }
}

impl SimReplica for LateSim {
    fn deliver(&mut self, req: Arc<Request>, at: u64) {
        self.outstanding += 1;
        self.events.push(at.max(self.now), Event::Arrive(req));
    }

    fn advance(&mut self) -> Result<Option<Completion>, RuntimeError> {
        loop {
            if let Some(done) = self.ready.pop_front() {
                return Ok(Some(done));
            }
            if let Some(e) = self.failure.take() {
                return Err(e);
            }
            let Some((time, event)) = self.events.pop() else {
                if self.outstanding > 0 {
                    return Err(RuntimeError::Deadlock {
                        time: self.now,
                        pending: self.outstanding,
                    });
                }
                return Ok(None);
            };
            self.now = time;
            self.handle(event);
            self.settle();
        }
    }

    fn finish(mut self: Box<Self>) -> ReplicaOutcome {
        self.trace.sort();
        self.stats.makespan = self.completions.iter().map(|c| c.time).max().unwrap_or(0);
        self.stats.contention = self.service.contention_events();
        ReplicaOutcome {
            digest: self.service.digest(),
            trace: self.trace,
            completions: self.completions,
            stats: self.stats,
        }
    }
}
