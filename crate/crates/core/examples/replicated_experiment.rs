// Three replicas execute one broadcast log; the run is checked for
// convergence, conflict order and linearizability.

use std::error::Error;

use psmr::bench::{Scenario, WorkloadChoice};
use psmr::runtime::SchedulerKind;
use psmr::service::CostClass;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for scheduler in [SchedulerKind::Early, SchedulerKind::Late] {
        let scenario = Scenario {
            scheduler,
            shards: 2,
            topology: "global".into(),
            workload: WorkloadChoice::Preset("w1".into()),
            replicas: 3,
            cost: CostClass::Moderate,
            key_range: Some(32),
            requests: 5_000,
            seed: 11,
            ..Scenario::default()
        };
        let result = scenario.run()?;
        let report = result.verify(&scenario.service(), 500, scenario.seed);
        println!("{scheduler}: digests {:x?}", result.digests());
        println!("{scheduler}: {}", report.summary());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
