// Compares early and late scheduling on the same read-heavy workload.

use std::error::Error;

use psmr::bench::{compare, compare_row, Scenario, WorkloadChoice, COMPARE_HEADER};
use psmr::service::CostClass;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    println!("{COMPARE_HEADER}");
    for cost in [CostClass::Light, CostClass::Moderate] {
        let base = Scenario {
            workload: WorkloadChoice::Preset("read".into()),
            cost,
            requests: 4_000,
            ..Scenario::default()
        };
        let (cmp, _, _) = compare(&base)?;
        println!("{}", compare_row(&base, &cmp));
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
