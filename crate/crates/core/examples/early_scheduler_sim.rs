// Runs a pre-ordered stream through the early scheduler in virtual time and
// checks the result against a sequential execution.

use std::error::Error;

use psmr::class_model::{builtin_topology, Request, TopologyKind};
use psmr::early::EarlyConfig;
use psmr::optimizer::{solve, ProblemInstance, SolveOptions};
use psmr::runtime::{run_replica, RunMode, SchedulerConfig, SimCosts};
use psmr::service::{sequential_reference, Classifier, ServiceConfig, ServiceOp};
use psmr::verify::{check_class_order, check_fifo};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let classes = builtin_topology(TopologyKind::ShardedSnapshot, 2)?;
    let inst = ProblemInstance::new(classes.clone(), 4)?;
    let assignment = solve(&inst, &SolveOptions::default()).assignment;
    let sched = SchedulerConfig::Early(EarlyConfig::new(inst, assignment)?);

    let cl = Classifier::new(&classes, 2)?;
    let ops: Vec<ServiceOp> = (0..2_000u64)
        .map(|i| match i % 10 {
            0 => ServiceOp::Add {
                shard: (i % 2) as u16,
                key: i % 64,
            },
            1 => ServiceOp::ContainsAll { key: i % 64 },
            _ => ServiceOp::Contains {
                shard: (i % 2) as u16,
                key: i % 64,
            },
        })
        .collect();
    let reqs = ops
        .iter()
        .enumerate()
        .map(|(i, op)| {
            Ok(Request {
                global_seq: i as u64,
                client_id: 0,
                client_seq: i as u64,
                class_id: cl.class_of(op)?,
                payload: *op,
            })
        })
        .collect::<Result<Vec<_>, Box<dyn Error>>>()?;

    let service = ServiceConfig::List {
        num_shards: 2,
        initial_size: 32,
    };
    let out = run_replica(&reqs, &sched, &service, RunMode::Sim, SimCosts::with_op(10))?;
    let (_, digest) = sequential_reference(&service, &ops);
    println!(
        "makespan {} ticks, {} rendezvous",
        out.stats.makespan, out.stats.rendezvous
    );
    println!("digest matches sequential run: {}", out.digest == digest);
    println!(
        "class-order violations: {}",
        check_class_order(&out.trace, &classes)?.len()
    );
    println!("fifo violations: {}", check_fifo(&out.trace).len());
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
