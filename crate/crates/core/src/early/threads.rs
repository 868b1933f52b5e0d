use std::sync::{Arc, Barrier};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use crossbeam_channel::{Receiver, Sender};

use super::{Dispatcher, EarlyConfig};
use crate::class_model::Request;
use crate::optimizer::{Mode, ThreadSet};
use crate::runtime::{Completion, LogicalClock, ReplicaOutcome, RuntimeError, RuntimeStats};
use crate::service::{Service, ServiceConfig};
use crate::verify::{ExecutionTrace, TraceRecord};

enum Item {
    Run(Arc<Request>),
    Shutdown,
}

struct WorkerReport {
    records: Vec<TraceRecord>,
    dequeued: Vec<u64>,
    completions: Vec<Completion>,
    busy: u64,
    rendezvous: u64,
}

struct Shared {
    service: Box<dyn Service>,
    modes: Vec<Mode>,
    uses: Vec<ThreadSet>,
    barriers: Vec<Arc<Barrier>>,
    clock: LogicalClock,
    started: Instant,
    notify: Option<Sender<Completion>>,
}

fn worker_loop(id: usize, queue: Receiver<Item>, shared: &Shared) -> WorkerReport {
    let mut report = WorkerReport {
        records: Vec::new(),
        dequeued: Vec::new(),
        completions: Vec::new(),
        busy: 0,
        rendezvous: 0,
    };
    let execute = |req: &Request, participants: ThreadSet, report: &mut WorkerReport| {
        let t_start = shared.clock.stamp();
        let response = shared.service.execute(&req.payload);
        let t_end = shared.clock.stamp();
        report.records.push(TraceRecord {
            global_seq: req.global_seq,
            class: req.class_id,
            worker: id,
            exec_index: report.records.len() as u64,
            t_start,
            t_end,
            participants,
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
    };
    for item in queue.iter() {
        let req = match item {
            Item::Run(req) => req,
            Item::Shutdown => break,
        };
        report.dequeued.push(req.global_seq);
        let began = Instant::now();
        let c = req.class_id.0;
        match shared.modes[c] {
            Mode::Cnc => execute(&req, ThreadSet::single(id), &mut report),
            Mode::Seq => {
                let parties = shared.uses[c];
                shared.barriers[c].wait();
                if parties.min() == Some(id) {
                    execute(&req, parties, &mut report);
                    if parties.len() > 1 {
                        report.rendezvous += 1;
                    }
                }
                shared.barriers[c].wait();
            }
        }
        report.busy += began.elapsed().as_nanos() as u64;
    }
    report
}

/// Starts one scheduler thread and `nt` worker threads. The scheduler reads
/// `input` until it is closed, then enqueues a shutdown marker behind the
/// remaining work on every queue.
pub(crate) fn spawn_threads(
    replica: usize,
    config: &EarlyConfig,
    service: &ServiceConfig,
    input: Receiver<Arc<Request>>,
    notify: Option<Sender<Completion>>,
) -> Result<JoinHandle<Result<ReplicaOutcome, RuntimeError>>, RuntimeError> {
    let nt = config.threads();
    let assignment = config.assignment.clone();
    let shared = Arc::new(Shared {
        service: service.build(),
        modes: assignment.modes.clone(),
        uses: assignment.uses.clone(),
        barriers: assignment
            .uses
            .iter()
            .map(|s| Arc::new(Barrier::new(s.len().max(1))))
            .collect(),
        clock: LogicalClock::default(),
        started: Instant::now(),
        notify,
    });
    let capacity = config.queue_capacity;
    let handle = thread::Builder::new()
        .name(format!("replica-{replica}-scheduler"))
        .spawn(move || {
            let mut senders = Vec::with_capacity(nt);
            let mut workers = Vec::with_capacity(nt);
            for id in 0..nt {
                let (tx, rx) = match capacity {
                    Some(cap) => crossbeam_channel::bounded(cap),
                    None => crossbeam_channel::unbounded(),
                };
                senders.push(tx);
                let shared = Arc::clone(&shared);
                workers.push(
                    thread::Builder::new()
                        .name(format!("replica-{replica}-worker-{id}"))
                        .spawn(move || worker_loop(id, rx, &shared))
                        .expect("failed to spawn worker"),
                );
            }
            let mut dispatcher = Dispatcher::new(&assignment);
            let mut delivered = Vec::new();
            let mut failure = None;
            for req in input.iter() {
                match dispatcher.dispatch(&req) {
                    Ok(targets) => {
                        delivered.push(req.global_seq);
                        for t in targets.iter() {
                            let _ = senders[t].send(Item::Run(Arc::clone(&req)));
                        }
                    }
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
            for tx in &senders {
                let _ = tx.send(Item::Shutdown);
            }
            let mut trace = ExecutionTrace::new(replica, nt);
            trace.delivered = delivered;
            let mut stats = RuntimeStats {
                busy: vec![0; nt],
                ..RuntimeStats::default()
            };
            let mut completions = Vec::new();
            let mut panicked = false;
            for (id, w) in workers.into_iter().enumerate() {
                match w.join() {
                    Ok(rep) => {
                        trace.records.extend(rep.records);
                        trace.dequeued[id] = rep.dequeued;
                        completions.extend(rep.completions);
                        stats.busy[id] = rep.busy;
                        stats.rendezvous += rep.rendezvous;
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
            stats.contention = shared.service.contention_events();
            Ok(ReplicaOutcome {
                digest: shared.service.digest(),
                trace,
                completions,
                stats,
            })
        })
        .expect("failed to spawn scheduler");
    Ok(handle)
}

#[cfg(test)]
mod tests {
    use crate::class_model::{builtin_topology, Request, TopologyKind};
    use crate::early::EarlyConfig;
    use crate::optimizer::{solve, ProblemInstance, SolveOptions};
    use crate::runtime::{run_replica, RunMode, SchedulerConfig, SimCosts};
    use crate::service::{sequential_reference, Classifier, ServiceConfig, ServiceOp};

    #[test]
    fn threads_and_sim_agree_on_digest() {
        let classes = builtin_topology(TopologyKind::ShardedGlobal, 2).unwrap();
        let inst = ProblemInstance::new(classes.clone(), 4).unwrap();
        let a = solve(&inst, &SolveOptions::default()).assignment;
        let cfg = SchedulerConfig::Early(EarlyConfig::new(inst, a).unwrap());
        let cl = Classifier::new(&classes, 2).unwrap();
        let ops: Vec<ServiceOp> = (0..400u64)
            .map(|i| match i % 7 {
                0 => ServiceOp::Add {
                    shard: (i % 2) as u16,
                    key: i % 11,
                },
                1 => ServiceOp::AddAll { key: i % 13 },
                2 => ServiceOp::ContainsAll { key: i % 13 },
                _ => ServiceOp::Contains {
                    shard: (i % 2) as u16,
                    key: i % 11,
                },
            })
            .collect();
        let reqs: Vec<Request> = ops
            .iter()
            .enumerate()
            .map(|(i, op)| Request {
                global_seq: i as u64,
                client_id: 0,
                client_seq: i as u64,
                class_id: cl.class_of(op).unwrap(),
                payload: *op,
            })
            .collect();
        let svc = ServiceConfig::List {
            num_shards: 2,
            initial_size: 8,
        };
        let reference = sequential_reference(&svc, ops.iter()).1;
        let t = run_replica(&reqs, &cfg, &svc, RunMode::Threads, SimCosts::default()).unwrap();
        let s = run_replica(&reqs, &cfg, &svc, RunMode::Sim, SimCosts::default()).unwrap();
        assert_eq!(t.digest, reference);
        assert_eq!(s.digest, reference);
        t.trace.validate().unwrap();
        assert_eq!(t.completions.len(), 400);
        assert_eq!(t.stats.contention, 0);
    }
}
