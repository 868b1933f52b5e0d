use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use crossbeam_channel::{Receiver, Sender};

use super::{DependencyGraph, LateConfig};
use crate::class_model::Request;
use crate::optimizer::ThreadSet;
use crate::runtime::{Completion, LogicalClock, ReplicaOutcome, RuntimeError, RuntimeStats};
use crate::service::{Service, ServiceConfig};
use crate::verify::{ExecutionTrace, TraceRecord};

struct State {
    graph: DependencyGraph,
    closed: bool,
}

struct Shared {
    state: Mutex<State>,
    space: Condvar,
    ready: Condvar,
    service: Box<dyn Service>,
    clock: LogicalClock,
    started: Instant,
    notify: Option<Sender<Completion>>,
}

#[derive(Default)]
struct WorkerReport {
    records: Vec<TraceRecord>,
    completions: Vec<Completion>,
    busy: u64,
}

fn take(shared: &Shared) -> Option<Arc<Request>> {
    let mut st = shared.state.lock().unwrap();
    loop {
        if let Some(req) = st.graph.take_ready() {
            return Some(req);
        }
        if st.closed && st.graph.is_empty() {
            return None;
        }
        st = shared.ready.wait(st).unwrap();
    }
}

fn worker_loop(id: usize, shared: &Shared) -> WorkerReport {
    let mut report = WorkerReport::default();
    while let Some(req) = take(shared) {
        let began = Instant::now();
        let t_start = shared.clock.stamp();
        let response = shared.service.execute(&req.payload);
        let t_end = shared.clock.stamp();
        report.busy += began.elapsed().as_nanos() as u64;
        report.records.push(TraceRecord {
            global_seq: req.global_seq,
            class: req.class_id,
            worker: id,
            exec_index: report.records.len() as u64,
            t_start,
            t_end,
            participants: ThreadSet::single(id),
        });
        let done = Completion {
            global_seq: req.global_seq,
            client_id: req.client_id,
            client_seq: req.client_seq,
            class_id: req.class_id,
            response,
            time: shared.started.elapsed().as_nanos() as u64,
        };
        report.completions.push(done);
        if let Some(tx) = &shared.notify {
            let _ = tx.send(done);
        }
        let mut st = shared.state.lock().unwrap();
        let released = st.graph.complete(req.global_seq);
        let drained = st.closed && st.graph.is_empty();
        drop(st);
        shared.space.notify_one();
        if drained {
            shared.ready.notify_all();
        } else {
            for _ in 0..released {
                shared.ready.notify_one();
            }
        }
    }
    report
}

/// Starts the scheduler thread and `config.workers` workers around one
/// mutex-protected graph.
pub(crate) fn spawn_threads(
    replica: usize,
    config: &LateConfig,
    service: &ServiceConfig,
    input: Receiver<Arc<Request>>,
    notify: Option<Sender<Completion>>,
) -> JoinHandle<Result<ReplicaOutcome, RuntimeError>> {
    let nt = config.workers;
    let shared = Arc::new(Shared {
        state: Mutex::new(State {
            graph: DependencyGraph::new(config.oracle(), config.capacity),
            closed: false,
        }),
        space: Condvar::new(),
        ready: Condvar::new(),
        service: service.build(),
        clock: LogicalClock::default(),
        started: Instant::now(),
        notify,
    });
    let nc = config.classes.len();
    thread::Builder::new()
        .name(format!("replica-{replica}-late-scheduler"))
        .spawn(move || {
            let workers: Vec<_> = (0..nt)
                .map(|id| {
                    let shared = Arc::clone(&shared);
                    thread::Builder::new()
                        .name(format!("replica-{replica}-late-worker-{id}"))
                        .spawn(move || worker_loop(id, &shared))
                        .expect("failed to spawn worker")
                })
                .collect();
            let mut stats = RuntimeStats {
                busy: vec![0; nt],
                ..RuntimeStats::default()
            };
            let mut delivered = Vec::new();
            let mut failure = None;
            for req in input.iter() {
                if req.class_id.0 >= nc {
                    failure = Some(RuntimeError::UnknownClass {
                        global_seq: req.global_seq,
                        class: req.class_id,
                    });
                    break;
                }
                delivered.push(req.global_seq);
                let mut st = shared.state.lock().unwrap();
                let mut pending = req;
                let mut blocked_since = None;
                loop {
                    match st.graph.try_insert(pending) {
                        Ok(_) => break,
                        Err(back) => {
                            pending = back;
                            if blocked_since.is_none() {
                                stats.graph_blocked += 1;
                                blocked_since = Some(Instant::now());
                            }
                            st = shared.space.wait(st).unwrap();
                        }
                    }
                }
                let ready = st.graph.ready_count();
                drop(st);
                if let Some(t) = blocked_since {
                    stats.graph_blocked_time += t.elapsed().as_nanos() as u64;
                }
                if ready > 0 {
                    shared.ready.notify_one();
                }
            }
            shared.state.lock().unwrap().closed = true;
            shared.ready.notify_all();
            let mut trace = ExecutionTrace::new(replica, 0);
            trace.delivered = delivered;
            let mut completions = Vec::new();
            let mut panicked = false;
            for (id, w) in workers.into_iter().enumerate() {
                match w.join() {
                    Ok(rep) => {
                        trace.records.extend(rep.records);
                        completions.extend(rep.completions);
                        stats.busy[id] = rep.busy;
                    }
                    Err(_) => panicked = true,
                }
            }
            if panicked {
                return Err(RuntimeError::WorkerPanicked);
            }
            if let Some(e) = failure {
                return Err(e);
            }
            trace.sort();
            completions.sort_by_key(|c| (c.time, c.global_seq));
            stats.makespan = completions.last().map_or(0, |c| c.time);
            stats.max_graph_nodes = shared.state.lock().unwrap().graph.max_len();
            stats.contention = shared.service.contention_events();
            Ok(ReplicaOutcome {
                digest: shared.service.digest(),
                trace,
                completions,
                stats,
            })
        })
        .expect("failed to spawn scheduler")
}
