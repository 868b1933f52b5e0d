// Loads a scenario from TOML, including an inline workload table, and
// prints one CSV row.

use std::error::Error;

use psmr::bench::{Scenario, CSV_HEADER};

const CONFIG: &str = r#"
scheduler = "late"
workers = 4
shards = 2
topology = "global"
requests = 3000
seed = 5

[workload]
name = "skewed"
num_shards = 2
read_fraction = 0.9
local_fraction = 0.98
read_skew = [0.75, 0.25]
write_skew = [0.5, 0.5]
"#;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let scenario = Scenario::from_toml(CONFIG)?;
    let result = scenario.run()?;
    println!("{CSV_HEADER}");
    println!("{}", scenario.csv_row(&result));
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
