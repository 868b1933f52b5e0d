// Writes an execution trace as TSV, reads it back and re-checks it.

use std::error::Error;

use psmr::bench::{Scenario, WorkloadChoice};
use psmr::verify::{check_class_order, check_fifo, ExecutionTrace};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let scenario = Scenario {
        workload: WorkloadChoice::Preset("mixed85".into()),
        requests: 500,
        ..Scenario::default()
    };
    let classes = scenario.classes()?;
    let result = scenario.run()?;
    let tsv = result.outcomes[0].trace.to_tsv(&classes);
    println!("{}", tsv.lines().take(4).collect::<Vec<_>>().join("\n"));
    let parsed = ExecutionTrace::parse_tsv(&tsv, &classes)?;
    println!(
        "{} records, {} class-order violations, {} fifo violations",
        parsed.len(),
        check_class_order(&parsed, &classes)?.len(),
        check_fifo(&parsed).len()
    );
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
