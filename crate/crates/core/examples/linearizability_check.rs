// Checks hand-written client histories for linearizability.

use std::error::Error;

use psmr::service::ServiceOp;
use psmr::verify::{check_linearizable_small, HistoryOp, KeyMembership};

fn op(client: u32, invoke: u64, response_time: u64, op: ServiceOp, response: bool) -> HistoryOp {
    HistoryOp {
        client,
        invoke,
        response_time,
        op,
        response,
    }
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let spec = KeyMembership { num_shards: 1 };
    let add = ServiceOp::Add { shard: 0, key: 3 };
    let contains = ServiceOp::Contains { shard: 0, key: 3 };

    let overlapping = [op(0, 0, 10, add, true), op(1, 2, 4, contains, true)];
    let witness = check_linearizable_small(&overlapping, &spec, 0)?;
    println!("overlapping add/contains: witness {witness:?}");

    let stale = [op(0, 0, 1, add, true), op(1, 5, 6, contains, false)];
    let witness = check_linearizable_small(&stale, &spec, 0)?;
    println!("stale read after add returned: witness {witness:?}");
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
