//! Throughput and latency summaries of an experiment.

use crate::class_model::ClassId;
use crate::runtime::{RunMode, RuntimeStats};

/// Ticks per throughput window in sim mode.
pub const SIM_WINDOW: u64 = 1_000;
/// Nanoseconds per throughput window in threads mode.
pub const THREADS_WINDOW: u64 = 1_000_000_000;

/// One operation as timed by its client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencySample {
    pub class: ClassId,
    pub invoke: u64,
    pub response: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LatencySummary {
    pub count: usize,
    pub mean: f64,
    pub p50: u64,
    pub p95: u64,
    pub p99: u64,
    pub max: u64,
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencySummary {
    pub fn from_values(mut values: Vec<u64>) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        values.sort_unstable();
        Self {
            count: values.len(),
            mean: values.iter().sum::<u64>() as f64 / values.len() as f64,
            p50: percentile(&values, 50.0),
            p95: percentile(&values, 95.0),
            p99: percentile(&values, 99.0),
            max: *values.last().unwrap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassLatency {
    pub class: String,
    pub latency: LatencySummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub mode: RunMode,
    pub completed: usize,
    /// Time of the last response, in ticks or nanoseconds.
    pub makespan: u64,
    pub window: u64,
    /// Responses per window, by response time.
    pub windows: Vec<u64>,
    /// Responses per window averaged over the run: per 1000 ticks in
    /// sim mode, per second in threads mode.
    pub throughput: f64,
    pub latency: LatencySummary,
    pub per_class: Vec<ClassLatency>,
    /// Share of the makespan each worker spent busy on replica 0.
    pub busy_fraction: Vec<f64>,
    pub rendezvous: u64,
    pub graph_blocked: u64,
    pub graph_blocked_time: u64,
    pub max_graph_nodes: usize,
}

impl Metrics {
    pub fn collect(
        samples: &[LatencySample],
        class_names: &[String],
        stats: &RuntimeStats,
        mode: RunMode,
    ) -> Self {
        let window = match mode {
            RunMode::Sim => SIM_WINDOW,
            RunMode::Threads => THREADS_WINDOW,
        };
        let makespan = samples.iter().map(|s| s.response).max().unwrap_or(0);
        let mut windows = Vec::new();
        if !samples.is_empty() {
            windows = vec![0; (makespan / window) as usize + 1];
            for s in samples {
                windows[(s.response / window) as usize] += 1;
            }
        }
        let throughput = if makespan == 0 {
            0.0
        } else {
            samples.len() as f64 * window as f64 / makespan as f64
        };
        let lat = |s: &LatencySample| s.response - s.invoke;
        let per_class = class_names
            .iter()
            .enumerate()
            .map(|(c, name)| ClassLatency {
                class: name.clone(),
                latency: LatencySummary::from_values(
                    samples.iter().filter(|s| s.class.0 == c).map(lat).collect(),
                ),
            })
            .collect();
        let busy_fraction = stats
            .busy
            .iter()
            .map(|&b| {
                if makespan == 0 {
                    0.0
                } else {
                    b as f64 / makespan as f64
                }
            })
            .collect();
        Self {
            mode,
            completed: samples.len(),
            makespan,
            window,
            windows,
            throughput,
            latency: LatencySummary::from_values(samples.iter().map(lat).collect()),
            per_class,
            busy_fraction,
            rendezvous: stats.rendezvous,
            graph_blocked: stats.graph_blocked,
            graph_blocked_time: stats.graph_blocked_time,
            max_graph_nodes: stats.max_graph_nodes,
        }
    }

    /// Latency in the CSV unit: ticks in sim mode, microseconds otherwise.
    pub fn report_latency(&self, value: u64) -> f64 {
        match self.mode {
            RunMode::Sim => value as f64,
            RunMode::Threads => value as f64 / 1_000.0,
        }
    }
}
