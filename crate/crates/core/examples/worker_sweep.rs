// Sweeps the worker count for early scheduling on a write-heavy workload.

use std::error::Error;

use psmr::bench::{sweep, Scenario, WorkloadChoice};
use psmr::service::CostClass;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let base = Scenario {
        workload: WorkloadChoice::Preset("mixed50".into()),
        cost: CostClass::Moderate,
        requests: 2_000,
        ..Scenario::default()
    };
    print!("{}", sweep(&base, 8)?);
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
