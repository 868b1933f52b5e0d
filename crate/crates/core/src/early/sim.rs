use std::collections::VecDeque;
use std::sync::Arc;

use super::{Dispatcher, EarlyConfig};
use crate::class_model::Request;
use crate::optimizer::{Mode, ThreadSet};
use crate::runtime::{
    Completion, EventQueue, ReplicaOutcome, RuntimeError, RuntimeStats, SimCosts, SimReplica,
};
use crate::service::{Service, ServiceConfig};
use crate::verify::{ExecutionTrace, TraceRecord};

enum Event {
    Arrive(Arc<Request>),
    Dispatched,
    Start {
        worker: usize,
        req: Arc<Request>,
        participants: ThreadSet,
    },
    End {
        worker: usize,
        req: Arc<Request>,
        t_start: u64,
        response: bool,
        participants: ThreadSet,
    },
    Release {
        class: usize,
    },
}

enum Scheduler {
    Idle,
    Dispatching {
        req: Arc<Request>,
        targets: ThreadSet,
    },
    Enqueuing {
        req: Arc<Request>,
        remaining: ThreadSet,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Worker {
    Idle,
    Running,
    InBarrier,
}

struct Round {
    global_seq: u64,
    arrived: ThreadSet,
}

/// Virtual-time replica running the early scheduler and its workers.
///
/// The scheduler spends `dispatch` ticks per request and blocks while a
/// target queue is full. A concurrent request runs for its cost on the
/// worker that dequeued it. For a sequential request, once the last party
/// reaches the class barrier at tick `T`, the lowest-numbered party runs it
/// over `[T + b, T + b + cost]` and every party leaves at
/// `T + 2b + cost`, where `b` is the barrier cost (0 for a single party).
pub struct EarlySim {
    service: Box<dyn Service>,
    num_shards: usize,
    costs: SimCosts,
    dispatcher: Dispatcher,
    capacity: usize,
    now: u64,
    events: EventQueue<Event>,
    inbox: VecDeque<Arc<Request>>,
    scheduler: Scheduler,
    queues: Vec<VecDeque<Arc<Request>>>,
    workers: Vec<Worker>,
    barrier_since: Vec<u64>,
    rounds: Vec<Option<Round>>,
    executed: Vec<u64>,
    outstanding: usize,
    ready: VecDeque<Completion>,
    failure: Option<RuntimeError>,
    trace: ExecutionTrace,
    completions: Vec<Completion>,
    stats: RuntimeStats,
}

impl EarlySim {
    pub fn new(
        replica: usize,
        config: &EarlyConfig,
        service: &ServiceConfig,
        costs: SimCosts,
    ) -> Result<Self, RuntimeError> {
        let nt = config.threads();
        let nc = config.instance.num_classes();
        Ok(Self {
            service: service.build(),
            num_shards: service.num_shards(),
            costs,
            dispatcher: Dispatcher::new(&config.assignment),
            capacity: config.queue_capacity.unwrap_or(usize::MAX),
            now: 0,
            events: EventQueue::new(),
            inbox: VecDeque::new(),
            scheduler: Scheduler::Idle,
            queues: vec![VecDeque::new(); nt],
            workers: vec![Worker::Idle; nt],
            barrier_since: vec![0; nt],
            rounds: (0..nc).map(|_| None).collect(),
            executed: vec![0; nt],
            outstanding: 0,
            ready: VecDeque::new(),
            failure: None,
            trace: ExecutionTrace::new(replica, nt),
            completions: Vec::new(),
            stats: RuntimeStats {
                busy: vec![0; nt],
                ..RuntimeStats::default()
            },
        })
    }

    fn barrier_cost(&self, parties: ThreadSet) -> u64 {
        if parties.len() > 1 {
            self.costs.barrier
        } else {
            0
        }
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::Arrive(req) => self.inbox.push_back(req),
            Event::Dispatched => {
                if let Scheduler::Dispatching { req, targets } =
                    std::mem::replace(&mut self.scheduler, Scheduler::Idle)
                {
                    self.scheduler = Scheduler::Enqueuing {
                        req,
                        remaining: targets,
                    };
                }
            }
            Event::Start {
                worker,
                req,
                participants,
            } => {
                let response = self.service.execute(&req.payload);
                let cost = self.costs.op_cost(&req.payload, self.num_shards);
                let t_start = self.now;
                self.events.push(
                    t_start + cost,
                    Event::End {
                        worker,
                        req: req.clone(),
                        t_start,
                        response,
                        participants,
                    },
                );
                if self.dispatcher.mode(req.class_id) == Mode::Seq {
                    let release = t_start + cost + self.barrier_cost(participants);
                    self.events.push(
                        release,
                        Event::Release {
                            class: req.class_id.0,
                        },
                    );
                } else {
                    self.stats.busy[worker] += cost;
                }
            }
            Event::End {
                worker,
                req,
                t_start,
                response,
                participants,
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
                    participants,
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
                if self.dispatcher.mode(req.class_id) == Mode::Cnc {
                    self.workers[worker] = Worker::Idle;
                }
            }
            Event::Release { class } => {
                let round = self.rounds[class]
                    .take()
                    .expect("release without an open round");
                for w in round.arrived.iter() {
                    self.stats.busy[w] += self.now - self.barrier_since[w];
                    self.workers[w] = Worker::Idle;
                }
            }
        }
    }

    fn start_next(&mut self, w: usize) {
        let req = self.queues[w]
            .pop_front()
            .expect("start_next on an empty queue");
        self.trace.dequeued[w].push(req.global_seq);
        let class = req.class_id;
        match self.dispatcher.mode(class) {
            Mode::Cnc => {
                self.workers[w] = Worker::Running;
                self.events.push(
                    self.now,
                    Event::Start {
                        worker: w,
                        req,
                        participants: ThreadSet::single(w),
                    },
                );
            }
            Mode::Seq => {
                let parties = self.dispatcher.uses(class);
                let round = self.rounds[class.0].get_or_insert(Round {
                    global_seq: req.global_seq,
                    arrived: ThreadSet::EMPTY,
                });
                assert_eq!(
                    round.global_seq, req.global_seq,
                    "two rounds open on one class barrier"
                );
                round.arrived.insert(w);
                let complete = round.arrived == parties;
                self.workers[w] = Worker::InBarrier;
                self.barrier_since[w] = self.now;
                if complete {
                    let executor = parties.min().expect("sequential class without threads");
                    if parties.len() > 1 {
                        self.stats.rendezvous += 1;
                    }
                    let at = self.now + self.barrier_cost(parties);
                    self.events.push(
                        at,
                        Event::Start {
                            worker: executor,
                            req,
                            participants: parties,
                        },
                    );
                }
            }
        }
    }

    /// Applies every state change that needs no further time to pass.
    fn settle(&mut self) {
        loop {
            let mut progress = false;
            if let Scheduler::Enqueuing { req, remaining } = &mut self.scheduler {
                while let Some(t) = ThreadSet::min(*remaining) {
                    if self.queues[t].len() >= self.capacity {
                        break;
                    }
                    self.queues[t].push_back(req.clone());
                    remaining.remove(t);
                    progress = true;
                }
                if remaining.is_empty() {
                    self.scheduler = Scheduler::Idle;
                }
            }
            for w in 0..self.workers.len() {
                if self.workers[w] == Worker::Idle && !self.queues[w].is_empty() {
                    self.start_next(w);
                    progress = true;
                }
            }
            if matches!(self.scheduler, Scheduler::Idle) {
                if let Some(req) = self.inbox.pop_front() {
                    self.trace.delivered.push(req.global_seq);
                    match self.dispatcher.dispatch(&req) {
                        Ok(targets) => {
                            self.scheduler = Scheduler::Dispatching { req, targets };
                            self.events
                                .push(self.now + self.costs.dispatch, Event::Dispatched);
                        }
                        Err(e) => {
                            self.failure.get_or_insert(e);
                            self.outstanding -= 1;
                        }
                    }
                    progress = true;
                }
            }
            if !progress {
                break;
            }
        }
    }
}

impl SimReplica for EarlySim {
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
