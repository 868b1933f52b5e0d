// Generates the built-in workload presets and prints their operation mix.

use std::error::Error;

use psmr::replication::{generate_workload, WorkloadSpec};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for name in ["read", "write", "mixed85", "w1", "w2", "w3"] {
        let spec = WorkloadSpec::preset(name, 2)?
            .with_requests(20_000)
            .with_seed(3);
        let reqs = generate_workload(&spec)?;
        let writes = reqs.iter().filter(|r| r.op.is_write()).count();
        let global = reqs.iter().filter(|r| r.op.is_global()).count();
        let shard0 = reqs.iter().filter(|r| r.op.shard() == Some(0)).count();
        println!("{name:>8}: writes {writes:>5}  global {global:>5}  shard0 {shard0:>5}");
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
