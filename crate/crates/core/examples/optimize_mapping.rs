// Maps the classes of a two-shard service onto eight worker threads and
// prints the mapping with its cost terms.

use std::error::Error;

use psmr::class_model::{builtin_topology, TopologyKind};
use psmr::optimizer::{
    check_feasible, cost_breakdown, serialize_assignment, solve, ProblemInstance, SolveOptions,
};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let classes = builtin_topology(TopologyKind::ShardedGlobal, 2)?;
    let inst = ProblemInstance::new(classes, 8)?;
    let report = solve(&inst, &SolveOptions::default());
    print!("{}", serialize_assignment(&inst, &report.assignment));
    let terms = cost_breakdown(&inst, &report.assignment);
    println!(
        "cost {:.4} (optimal: {}, {} nodes)",
        report.cost, report.optimal, report.nodes_explored
    );
    println!("{terms:?}");
    assert!(check_feasible(&inst, &report.assignment)?.is_empty());
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
