//! Scenario descriptions shared by the command-line front end and the
//! examples, and the CSV formats they emit.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class_model::{
    builtin_topology, parse_topology, ClassModelError, RequestClasses, TopologyKind,
};
use crate::early::EarlyConfig;
use crate::late::{ConflictGranularity, LateConfig, DEFAULT_CAPACITY, WRITE_ONLY_CAPACITY};
use crate::optimizer::{
    solve, Assignment, OptimizerError, ProblemInstance, SolveOptions, SolveReport,
};
use crate::replication::{
    Experiment, ExperimentError, ExperimentResult, WorkloadError, WorkloadSpec,
};
use crate::runtime::{RunMode, RuntimeError, SchedulerConfig, SchedulerKind, SimCosts};
use crate::service::{CostClass, ServiceConfig, ServiceError};

pub const CSV_HEADER: &str = "scenario,scheduler,workers,shards,throughput,lat_p50,lat_p99,seed";
pub const COMPARE_HEADER: &str = "scenario,workers,shards,early_makespan,late_makespan,ratio,seed";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Classes(#[from] ClassModelError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

pub fn read_file(path: &Path) -> Result<String, BenchError> {
    std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A built-in preset name or an inline workload table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorkloadChoice {
    Preset(String),
    Spec(WorkloadSpec),
}

impl Default for WorkloadChoice {
    fn default() -> Self {
        WorkloadChoice::Preset("mixed85".to_string())
    }
}

/// Everything needed to run one experiment. Deserializes from TOML with
/// every key optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub scheduler: SchedulerKind,
    pub workers: usize,
    pub shards: usize,
    /// A built-in kind (`rw`, `snapshot`, `global`) or a topology file.
    pub topology: String,
    pub workload: WorkloadChoice,
    pub replicas: usize,
    pub mode: RunMode,
    pub seed: u64,
    pub requests: usize,
    pub clients: usize,
    pub cost: CostClass,
    pub key_range: Option<u64>,
    /// Defaults to 50 for write-only workloads and 150 otherwise.
    pub graph_cap: Option<usize>,
    pub granularity: ConflictGranularity,
    /// Weight classes by the workload mix before optimizing.
    pub weighted: bool,
    /// Mapping file to use instead of running the optimizer.
    pub assignment: Option<String>,
    /// Worker queue bound for the early scheduler; 0 for unbounded.
    pub queue_capacity: usize,
    /// Simulator charges; `op` is replaced by the cost class unless set.
    pub costs: Option<SimCosts>,
    /// Busy-loop iterations per operation for the synthetic service in
    /// threads mode; `None` runs the list service.
    pub synthetic_spin: Option<u64>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            scheduler: SchedulerKind::Early,
            workers: 4,
            shards: 1,
            topology: "rw".to_string(),
            workload: WorkloadChoice::default(),
            replicas: 1,
            mode: RunMode::Sim,
            seed: 0,
            requests: 10_000,
            clients: 64,
            cost: CostClass::Light,
            key_range: None,
            graph_cap: None,
            granularity: ConflictGranularity::Key,
            weighted: true,
            assignment: None,
            queue_capacity: crate::early::DEFAULT_QUEUE_CAPACITY,
            costs: None,
            synthetic_spin: None,
        }
    }
}

/// A scenario resolved into runnable parts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub experiment: Experiment,
    /// Present when the optimizer produced the early mapping.
    pub solve: Option<SolveReport>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn label(&self) -> String {
        format!(
            "{}/{}",
            self.workload_spec()
                .map(|w| w.to_string())
                .unwrap_or_default(),
            self.topology
        )
    }

    pub fn classes(&self) -> Result<RequestClasses, BenchError> {
        match self.topology.parse::<TopologyKind>() {
            Ok(kind) => Ok(builtin_topology(kind, self.shards)?),
            Err(_) => Ok(parse_topology(&read_file(Path::new(&self.topology))?)?),
        }
    }

    pub fn workload_spec(&self) -> Result<WorkloadSpec, BenchError> {
        let base = match &self.workload {
            WorkloadChoice::Preset(name) => {
                let spec = WorkloadSpec::preset(name, self.shards)?;
                spec.with_clients(self.clients)
                    .with_requests(self.requests)
                    .with_key_range(self.key_range)
            }
            WorkloadChoice::Spec(spec) => spec.clone(),
        };
        Ok(base.with_seed(self.seed).with_cost(self.cost))
    }

    pub fn service(&self) -> ServiceConfig {
        match (self.mode, self.synthetic_spin) {
            (RunMode::Threads, Some(spin)) => ServiceConfig::Synthetic {
                num_shards: self.shards,
                spin,
            },
            _ => ServiceConfig::List {
                num_shards: self.shards,
                initial_size: self.cost.list_size(),
            },
        }
    }

    pub fn sim_costs(&self) -> SimCosts {
        self.costs
            .unwrap_or_else(|| SimCosts::with_op(self.cost.ticks()))
    }

    pub fn graph_capacity(&self, workload: &WorkloadSpec) -> usize {
        self.graph_cap.unwrap_or(if workload.read_fraction == 0.0 {
            WRITE_ONLY_CAPACITY
        } else {
            DEFAULT_CAPACITY
        })
    }

    /// The optimizer instance for the early scheduler.
    pub fn instance(&self) -> Result<ProblemInstance, BenchError> {
        let mut classes = self.classes()?;
        if self.weighted {
            let w = self.workload_spec()?.class_weights(&classes)?;
            classes = classes.with_weights(w)?;
        }
        Ok(ProblemInstance::new(classes, self.workers)?)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            seed: self.seed,
            ..SolveOptions::default()
        }
    }

    pub fn scheduler_config(&self) -> Result<(SchedulerConfig, Option<SolveReport>), BenchError> {
        let workload = self.workload_spec()?;
        match self.scheduler {
            SchedulerKind::Early => {
                let inst = self.instance()?;
                let (assignment, report): (Assignment, Option<SolveReport>) = match &self.assignment
                {
                    Some(path) => (
                        crate::optimizer::parse_assignment(&inst, &read_file(Path::new(path))?)?,
                        None,
                    ),
                    None => {
                        let r = solve(&inst, &self.solve_options());
                        (r.assignment.clone(), Some(r))
                    }
                };
                let cap = (self.queue_capacity > 0).then_some(self.queue_capacity);
                let cfg = EarlyConfig::new(inst, assignment)?.with_queue_capacity(cap);
                Ok((SchedulerConfig::Early(cfg), report))
            }
            SchedulerKind::Late => {
                let cfg = LateConfig::new(self.classes()?, self.workers, self.shards)
                    .with_capacity(self.graph_capacity(&workload))
                    .with_granularity(self.granularity);
                Ok((SchedulerConfig::Late(cfg), None))
            }
        }
    }

    pub fn prepare(&self) -> Result<Prepared, BenchError> {
        let (scheduler, solve) = self.scheduler_config()?;
        Ok(Prepared {
            experiment: Experiment {
                scheduler,
                service: self.service(),
                workload: self.workload_spec()?,
                replicas: self.replicas.max(1),
                mode: self.mode,
                costs: self.sim_costs(),
            },
            solve,
        })
    }

    pub fn run(&self) -> Result<ExperimentResult, BenchError> {
        Ok(self.prepare()?.experiment.run()?)
    }

    pub fn csv_row(&self, result: &ExperimentResult) -> String {
        let m = &result.metrics;
        format!(
            "{},{},{},{},{:.3},{:.3},{:.3},{}",
            self.label(),
            self.scheduler,
            self.workers,
            self.shards,
            m.throughput,
            m.report_latency(m.latency.p50),
            m.report_latency(m.latency.p99),
            self.seed
        )
    }
}

/// Makespans of the two schedulers on the same workload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub early_makespan: u64,
    pub late_makespan: u64,
    pub early_throughput: f64,
    pub late_throughput: f64,
}

impl Comparison {
    /// Late makespan over early makespan; above 1 means early finished first.
    pub fn ratio(&self) -> f64 {
        if self.early_makespan == 0 {
            return 0.0;
        }
        self.late_makespan as f64 / self.early_makespan as f64
    }
}

pub fn compare(
    base: &Scenario,
) -> Result<(Comparison, ExperimentResult, ExperimentResult), BenchError> {
    let early = Scenario {
        scheduler: SchedulerKind::Early,
        ..base.clone()
    }
    .run()?;
    let late = Scenario {
        scheduler: SchedulerKind::Late,
        ..base.clone()
    }
    .run()?;
    let cmp = Comparison {
        early_makespan: early.metrics.makespan,
        late_makespan: late.metrics.makespan,
        early_throughput: early.metrics.throughput,
        late_throughput: late.metrics.throughput,
    };
    Ok((cmp, early, late))
}

pub fn compare_row(base: &Scenario, cmp: &Comparison) -> String {
    format!(
        "{},{},{},{},{},{:.3},{}",
        base.label(),
        base.workers,
        base.shards,
        cmp.early_makespan,
        cmp.late_makespan,
        cmp.ratio(),
        base.seed
    )
}

/// Worker counts 1, 2, 4, .. up to `max`, with `max` itself included.
pub fn sweep_points(max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut w = 1;
    while w < max {
        out.push(w);
        w *= 2;
    }
    out.push(max.max(1));
    out
}

/// Runs `base` once per sweep point and returns the CSV text.
pub fn sweep(base: &Scenario, max_workers: usize) -> Result<String, BenchError> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for w in sweep_points(max_workers) {
        let s = Scenario {
            workers: w,
            ..base.clone()
        };
        let r = s.run()?;
        writeln!(out, "{}", s.csv_row(&r)).unwrap();
    }
    Ok(out)
}
