// Runs both schedulers on real threads with a few replicas and reports
// wall-clock throughput.

use std::error::Error;

use psmr::bench::{Scenario, WorkloadChoice};
use psmr::runtime::{RunMode, SchedulerKind};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for scheduler in [SchedulerKind::Early, SchedulerKind::Late] {
        let scenario = Scenario {
            scheduler,
            mode: RunMode::Threads,
            workload: WorkloadChoice::Preset("mixed85".into()),
            replicas: 2,
            requests: 3_000,
            clients: 16,
            key_range: Some(64),
            ..Scenario::default()
        };
        let result = scenario.run()?;
        let report = result.verify(&scenario.service(), 200, 0);
        println!(
            "{scheduler}: {:.0} ops/s, p99 {:.1} us, verified {}",
            result.metrics.throughput,
            result.metrics.report_latency(result.metrics.latency.p99),
            report.passed()
        );
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
