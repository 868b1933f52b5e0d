// Builds the built-in class layouts, reads one from text, and checks that
// class conflicts cover every conflict between concrete operations.

use std::error::Error;

use psmr::class_model::{
    builtin_topology, conflicts_requests, parse_topology, validate_classes, Request, TopologyKind,
};
use psmr::service::{Classifier, ServiceOp};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for kind in [
        TopologyKind::ReadersWriters,
        TopologyKind::ShardedSnapshot,
        TopologyKind::ShardedGlobal,
    ] {
        let shards = if kind == TopologyKind::ReadersWriters {
            1
        } else {
            2
        };
        let classes = builtin_topology(kind, shards)?;
        println!(
            "{kind}: {} classes, {} conflict edges",
            classes.len(),
            classes.edges().len()
        );
    }

    let text = "class reads 3\nclass writes 1\nconflict writes writes\nconflict writes reads\n";
    let custom = parse_topology(text)?;
    println!(
        "custom: {:?} weights {:?}",
        custom.names(),
        custom.weights()
    );

    let classes = builtin_topology(TopologyKind::ShardedGlobal, 2)?;
    let cl = Classifier::new(&classes, 2)?;
    let ops: Vec<ServiceOp> = (0..4u64)
        .flat_map(|k| {
            [
                ServiceOp::Contains { shard: 0, key: k },
                ServiceOp::Add { shard: 1, key: k },
                ServiceOp::ContainsAll { key: k },
                ServiceOp::AddAll { key: k },
            ]
        })
        .collect();
    let sample: Vec<Request> = ops
        .iter()
        .enumerate()
        .map(|(i, op)| Request {
            global_seq: i as u64,
            client_id: 0,
            client_seq: i as u64,
            class_id: cl.class_of(op).unwrap(),
            payload: *op,
        })
        .collect();
    let missing = validate_classes(
        &classes,
        |a, b| conflicts_requests(&a.payload.access_sets_in(2), &b.payload.access_sets_in(2)),
        &sample,
    )?;
    println!(
        "{} sampled operations, {} uncovered conflicts",
        ops.len(),
        missing.len()
    );
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
