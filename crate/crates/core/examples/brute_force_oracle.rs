// Cross-checks the branch-and-bound solver against exhaustive search on
// every three-class conflict pattern with three threads.

use std::error::Error;

use psmr::class_model::RequestClasses;
use psmr::optimizer::{brute_force, solve, ProblemInstance, SolveOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let names = ["a", "b", "c"];
    let pairs = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
    let mut checked = 0;
    for bits in 0u32..(1 << pairs.len()) {
        let edges: Vec<(&str, &str)> = pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| bits >> i & 1 == 1)
            .map(|(_, &(x, y))| (names[x], names[y]))
            .collect();
        let inst = ProblemInstance::new(RequestClasses::from_edges(&names, &edges)?, 3)?;
        let fast = solve(&inst, &SolveOptions::default());
        let slow = brute_force(&inst)?;
        assert!((fast.cost - slow.cost).abs() < 1e-9, "pattern {bits:06b}");
        checked += 1;
    }
    println!("{checked} conflict patterns agree with exhaustive search");
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
