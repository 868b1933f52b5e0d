// Drives the late scheduler's dependency graph by hand: inserts, ready
// picks and completions.

use std::error::Error;
use std::sync::Arc;

use psmr::class_model::{builtin_topology, Request, TopologyKind};
use psmr::late::{ConflictGranularity, DependencyGraph, LateConfig};
use psmr::service::{Classifier, ServiceOp};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let classes = builtin_topology(TopologyKind::ReadersWriters, 1)?;
    let cl = Classifier::new(&classes, 1)?;
    let ops = [
        ServiceOp::Add { shard: 0, key: 5 },
        ServiceOp::Contains { shard: 0, key: 5 },
        ServiceOp::Contains { shard: 0, key: 9 },
        ServiceOp::Add { shard: 0, key: 5 },
    ];

    for granularity in [ConflictGranularity::Key, ConflictGranularity::Class] {
        let config = LateConfig::new(classes.clone(), 2, 1)
            .with_capacity(3)
            .with_granularity(granularity);
        let mut graph = DependencyGraph::new(config.oracle(), config.capacity);
        println!("{granularity} granularity");
        for (i, op) in ops.iter().enumerate() {
            let req = Arc::new(Request {
                global_seq: i as u64,
                client_id: 0,
                client_seq: i as u64,
                class_id: cl.class_of(op)?,
                payload: *op,
            });
            match graph.try_insert(req) {
                Ok(edges) => println!(
                    "  insert #{i}: {edges} edge(s), {} ready",
                    graph.ready_count()
                ),
                Err(_) => {
                    println!("  insert #{i}: graph full");
                    let first = graph.take_ready().ok_or("nothing ready")?;
                    let released = graph.complete(first.global_seq);
                    println!("  completed #{} released {released}", first.global_seq);
                }
            }
        }
        while let Some(req) = graph.take_ready() {
            let released = graph.complete(req.global_seq);
            println!("  run #{} released {released}", req.global_seq);
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
