use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use thiserror::Error;

use super::{generate_workload, BroadcastLog, ClientRequest, WorkloadError, WorkloadSpec};
use crate::class_model::{ClassId, Request};
use crate::metrics::{LatencySample, Metrics};
use crate::runtime::{
    sim_replica, Completion, ReplicaOutcome, RunMode, RuntimeError, SchedulerConfig, SimCosts,
    SimReplica, ThreadReplica,
};
use crate::service::{sequential_reference, Classifier, ServiceConfig, ServiceError};
use crate::verify::{
    check_conflict_order, check_convergence, check_fifo, sample_key_windows, ClientHistory,
    HistoryError, HistoryOp, SampleReport,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("workload has {workload} shard(s) but the service has {service}")]
    ShardMismatch { workload: usize, service: usize },
    #[error("an experiment needs at least one replica")]
    NoReplicas,
}

/// One run: closed-loop clients, a sequencer and `replicas` replicas.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scheduler: SchedulerConfig,
    pub service: ServiceConfig,
    pub workload: WorkloadSpec,
    pub replicas: usize,
    pub mode: RunMode,
    pub costs: SimCosts,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub log: BroadcastLog,
    /// Per replica, in replica order.
    pub outcomes: Vec<ReplicaOutcome>,
    pub history: ClientHistory,
    pub samples: Vec<LatencySample>,
    pub metrics: Metrics,
    /// Responses and digest of a sequential run over the log.
    pub reference_responses: Vec<bool>,
    pub reference_digest: u64,
}

/// Results of every check over one experiment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerificationReport {
    pub converged: bool,
    pub matches_reference: bool,
    /// Clients saw exactly the sequential responses.
    pub responses_match: bool,
    pub order_violations: usize,
    pub fifo_violations: usize,
    pub trace_errors: Vec<String>,
    pub linearizability: Option<SampleReport>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.converged
            && self.matches_reference
            && self.responses_match
            && self.order_violations == 0
            && self.fifo_violations == 0
            && self.trace_errors.is_empty()
            && self
                .linearizability
                .as_ref()
                .is_none_or(SampleReport::passed)
    }

    pub fn summary(&self) -> String {
        let lin = match &self.linearizability {
            Some(r) => format!(
                "{}/{} windows linearizable",
                r.checked - r.failures.len(),
                r.checked
            ),
            None => "linearizability not sampled".to_string(),
        };
        format!(
            "converged={} reference={} responses={} order_violations={} fifo_violations={} trace_errors={} {}",
            self.converged,
            self.matches_reference,
            self.responses_match,
            self.order_violations,
            self.fifo_violations,
            self.trace_errors.len(),
            lin
        )
    }
}

impl ExperimentResult {
    pub fn digests(&self) -> Vec<u64> {
        self.outcomes.iter().map(|o| o.digest).collect()
    }

    /// Runs the trace, convergence and history checks. `samples` bounds
    /// the number of linearizability windows; 0 skips them.
    pub fn verify(&self, service: &ServiceConfig, samples: usize, seed: u64) -> VerificationReport {
        let requests = self.log.requests();
        let shards = service.num_shards();
        let mut report = VerificationReport {
            converged: check_convergence(&self.digests()),
            matches_reference: self
                .outcomes
                .iter()
                .all(|o| o.digest == self.reference_digest),
            responses_match: self.history.len() == self.reference_responses.len(),
            ..VerificationReport::default()
        };
        for o in &self.outcomes {
            match check_conflict_order(&o.trace, &requests, |r| r.payload.access_sets_in(shards)) {
                Ok(v) => report.order_violations += v.len(),
                Err(e) => report
                    .trace_errors
                    .push(format!("replica {}: {e}", o.trace.replica)),
            }
            report.fifo_violations += check_fifo(&o.trace).len();
        }
        if let Some(first) = self.outcomes.first() {
            for c in &first.completions {
                if self.reference_responses.get(c.global_seq as usize) != Some(&c.response) {
                    report.responses_match = false;
                }
            }
            if first.completions.len() != requests.len() {
                report.responses_match = false;
            }
        }
        if samples > 0 {
            match sample_key_windows(&self.history, service, samples, seed) {
                Ok(r) => report.linearizability = Some(r),
                Err(HistoryError::UnsupportedService) => {}
                Err(e) => report.trace_errors.push(format!("history: {e}")),
            }
        }
        report
    }
}

fn per_client(ops: Vec<ClientRequest>, clients: usize) -> Vec<VecDeque<ClientRequest>> {
    let mut out = vec![VecDeque::new(); clients];
    for r in ops {
        out[r.client_id as usize].push_back(r);
    }
    out
}

fn history_op(req: &Request, invoke: u64, response_time: u64, response: bool) -> HistoryOp {
    HistoryOp {
        client: req.client_id,
        invoke,
        response_time,
        op: req.payload,
        response,
    }
}

impl Experiment {
    pub fn run(&self) -> Result<ExperimentResult, ExperimentError> {
        if self.replicas == 0 {
            return Err(ExperimentError::NoReplicas);
        }
        if self.workload.num_shards != self.service.num_shards() {
            return Err(ExperimentError::ShardMismatch {
                workload: self.workload.num_shards,
                service: self.service.num_shards(),
            });
        }
        let classifier = Classifier::new(self.scheduler.classes(), self.service.num_shards())?;
        let ops = generate_workload(&self.workload)?;
        for r in &ops {
            classifier.class_of(&r.op)?;
        }
        let clients = per_client(ops, self.workload.clients);
        let (log, outcomes, history, samples) = match self.mode {
            RunMode::Sim => self.run_sim(clients, &classifier)?,
            RunMode::Threads => self.run_threads(clients, &classifier)?,
        };
        let (reference_responses, reference_digest) =
            sequential_reference(&self.service, log.ops());
        let metrics = Metrics::collect(
            &samples,
            self.scheduler.classes().names(),
            &outcomes[0].stats,
            self.mode,
        );
        Ok(ExperimentResult {
            log,
            outcomes,
            history: ClientHistory::new(history),
            samples,
            metrics,
            reference_responses,
            reference_digest,
        })
    }

    #[allow(clippy::type_complexity)]
    fn run_sim(
        &self,
        mut clients: Vec<VecDeque<ClientRequest>>,
        classifier: &Classifier,
    ) -> Result<
        (
            BroadcastLog,
            Vec<ReplicaOutcome>,
            Vec<HistoryOp>,
            Vec<LatencySample>,
        ),
        ExperimentError,
    > {
        let mut log = BroadcastLog::new();
        let mut arrivals = Vec::new();
        let mut lead = sim_replica(0, &self.scheduler, &self.service, self.costs)?;
        let mut issue = |client: usize,
                         at: u64,
                         log: &mut BroadcastLog,
                         arrivals: &mut Vec<u64>,
                         lead: &mut dyn SimReplica| {
            if let Some(req) = clients[client].pop_front() {
                let entry = log.append(req, classifier)?;
                arrivals.push(at);
                lead.deliver(entry, at);
            }
            Ok::<_, ExperimentError>(())
        };
        for c in 0..self.workload.clients {
            issue(c, 0, &mut log, &mut arrivals, lead.as_mut())?;
        }
        let mut history = Vec::with_capacity(self.workload.requests);
        let mut samples = Vec::with_capacity(self.workload.requests);
        while let Some(done) = lead.advance()? {
            let req = log
                .get(done.global_seq)
                .expect("completion for an unknown request")
                .clone();
            let invoke = arrivals[done.global_seq as usize];
            history.push(history_op(&req, invoke, done.time, done.response));
            samples.push(LatencySample {
                class: req.class_id,
                invoke,
                response: done.time,
            });
            issue(
                done.client_id as usize,
                done.time,
                &mut log,
                &mut arrivals,
                lead.as_mut(),
            )?;
        }
        let mut outcomes = vec![lead.finish()];
        for i in 1..self.replicas {
            let mut sim = sim_replica(i, &self.scheduler, &self.service, self.costs)?;
            for entry in log.iter() {
                sim.deliver(Arc::clone(entry), arrivals[entry.global_seq as usize]);
            }
            while sim.advance()?.is_some() {}
            outcomes.push(sim.finish());
        }
        Ok((log, outcomes, history, samples))
    }

    #[allow(clippy::type_complexity)]
    fn run_threads(
        &self,
        clients: Vec<VecDeque<ClientRequest>>,
        classifier: &Classifier,
    ) -> Result<
        (
            BroadcastLog,
            Vec<ReplicaOutcome>,
            Vec<HistoryOp>,
            Vec<LatencySample>,
        ),
        ExperimentError,
    > {
        let started = Instant::now();
        let now = move || started.elapsed().as_nanos() as u64;
        let mut inputs = Vec::with_capacity(self.replicas);
        let mut replicas = Vec::with_capacity(self.replicas);
        let (notify_tx, notify_rx) = crossbeam_channel::unbounded::<Completion>();
        for i in 0..self.replicas {
            let (tx, rx) = crossbeam_channel::unbounded();
            let notify = (i == 0).then(|| notify_tx.clone());
            replicas.push(ThreadReplica::spawn(
                i,
                &self.scheduler,
                &self.service,
                rx,
                notify,
            )?);
            inputs.push(tx);
        }
        drop(notify_tx);

        let (submit_tx, submit_rx) = crossbeam_channel::unbounded::<ClientRequest>();
        let log = Arc::new(Mutex::new(BroadcastLog::new()));
        let sequencer = {
            let log = Arc::clone(&log);
            let classifier = classifier.clone();
            thread::spawn(move || {
                for req in submit_rx.iter() {
                    let entry = log
                        .lock()
                        .unwrap()
                        .append(req, &classifier)
                        .expect("pre-classified request");
                    for tx in &inputs {
                        let _ = tx.send(Arc::clone(&entry));
                    }
                }
            })
        };

        let mut reply_txs = Vec::with_capacity(clients.len());
        let mut client_handles = Vec::with_capacity(clients.len());
        for queue in clients {
            let (reply_tx, reply_rx) = crossbeam_channel::unbounded::<Completion>();
            reply_txs.push(reply_tx);
            let submit = submit_tx.clone();
            let classifier = classifier.clone();
            client_handles.push(thread::spawn(move || {
                let mut history = Vec::with_capacity(queue.len());
                let mut samples = Vec::with_capacity(queue.len());
                for req in queue {
                    let class: ClassId = classifier
                        .class_of(&req.op)
                        .expect("pre-classified request");
                    let invoke = now();
                    if submit.send(req).is_err() {
                        break;
                    }
                    let Ok(done) = reply_rx.recv() else { break };
                    let response_time = now();
                    history.push(HistoryOp {
                        client: req.client_id,
                        invoke,
                        response_time,
                        op: req.op,
                        response: done.response,
                    });
                    samples.push(LatencySample {
                        class,
                        invoke,
                        response: response_time,
                    });
                }
                (history, samples)
            }));
        }
        drop(submit_tx);
        let router = thread::spawn(move || {
            for done in notify_rx.iter() {
                let _ = reply_txs[done.client_id as usize].send(done);
            }
        });

        let mut history = Vec::new();
        let mut samples = Vec::new();
        for h in client_handles {
            let (hist, samp) = h.join().map_err(|_| RuntimeError::WorkerPanicked)?;
            history.extend(hist);
            samples.extend(samp);
        }
        sequencer.join().map_err(|_| RuntimeError::WorkerPanicked)?;
        let mut outcomes = Vec::with_capacity(replicas.len());
        for r in replicas {
            outcomes.push(r.join()?);
        }
        router.join().map_err(|_| RuntimeError::WorkerPanicked)?;
        let log = Arc::try_unwrap(log)
            .map(|m| m.into_inner().unwrap())
            .unwrap_or_else(|a| a.lock().unwrap().clone());
        Ok((log, outcomes, history, samples))
    }
}
