use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use psmr::bench::{
    self, read_file, BenchError, Scenario, WorkloadChoice, COMPARE_HEADER, CSV_HEADER,
};
use psmr::late::ConflictGranularity;
use psmr::optimizer::{parse_instance, serialize_assignment, solve, SolveOptions};
use psmr::replication::ExperimentResult;
use psmr::runtime::{RunMode, SchedulerKind};
use psmr::service::CostClass;
use psmr::verify::{check_class_order, check_fifo, ExecutionTrace};

#[derive(Parser)]
#[command(
    name = "psmr",
    version,
    about = "Early and late scheduling experiments for parallel state machine replication"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map classes to threads.
    Optimize(OptimizeArgs),
    /// Run one experiment and write a metrics row.
    Run(RunArgs),
    /// Check a dumped execution trace.
    Verify(VerifyArgs),
    /// Run early and late on the same workload.
    Compare(CompareArgs),
    /// Run one experiment per worker count 1, 2, 4, ...
    Sweep(SweepArgs),
}

#[derive(Args, Clone, Default)]
struct ScenarioArgs {
    /// TOML scenario; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheduler: Option<SchedulerKind>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    shards: Option<usize>,
    /// `rw`, `snapshot`, `global` or a topology file.
    #[arg(long)]
    topology: Option<String>,
    /// Preset name or a TOML workload file.
    #[arg(long)]
    workload: Option<String>,
    #[arg(long, env = "PSMR_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<RunMode>,
    #[arg(long)]
    graph_cap: Option<usize>,
    #[arg(long)]
    granularity: Option<ConflictGranularity>,
    #[arg(long)]
    cost: Option<CostClass>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    requests: Option<usize>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    key_range: Option<u64>,
    /// Ignore the workload mix when weighting classes.
    #[arg(long)]
    unweighted: bool,
    /// Early mapping file to use instead of optimizing.
    #[arg(long)]
    assignment: Option<String>,
}

impl ScenarioArgs {
    fn scenario(&self) -> Result<Scenario, BenchError> {
        let mut s = match &self.config {
            Some(p) => Scenario::from_toml(&read_file(p)?)?,
            None => Scenario::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { s.$f = v; })* };
        }
        set!(
            scheduler,
            workers,
            shards,
            topology,
            seed,
            mode,
            granularity,
            cost,
            replicas,
            requests,
            clients
        );
        if self.graph_cap.is_some() {
            s.graph_cap = self.graph_cap;
        }
        if self.key_range.is_some() {
            s.key_range = self.key_range;
        }
        if self.assignment.is_some() {
            s.assignment = self.assignment.clone();
        }
        if self.unweighted {
            s.weighted = false;
        }
        if let Some(w) = &self.workload {
            s.workload = if Path::new(w).is_file() {
                let spec = toml::from_str(&read_file(Path::new(w))?)
                    .map_err(|e| BenchError::Config(format!("{w}: {e}")))?;
                WorkloadChoice::Spec(spec)
            } else {
                WorkloadChoice::Preset(w.clone())
            };
        }
        Ok(s)
    }
}

#[derive(Args)]
struct OptimizeArgs {
    /// Instance file: topology lines plus `threads <n>`.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long = "budget-nodes", alias = "node-budget", default_value_t = SolveOptions::default().node_budget)]
    node_budget: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write one trace per replica plus the topology into this directory.
    #[arg(long)]
    dump_traces: Option<PathBuf>,
    /// Linearizability windows to sample.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long)]
    no_verify: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Topology file or built-in kind the trace was recorded with.
    #[arg(long)]
    topology: String,
    #[arg(long, default_value_t = 1)]
    shards: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Largest worker count; defaults to `--workers`.
    #[arg(long)]
    max_workers: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), BenchError> {
    match output {
        Some(p) => fs::write(p, text).map_err(|source| BenchError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn dump_traces(
    dir: &Path,
    scenario: &Scenario,
    result: &ExperimentResult,
) -> Result<(), BenchError> {
    let io = |source| BenchError::Io {
        path: dir.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;
    let classes = scenario.classes()?;
    fs::write(dir.join("topology.txt"), classes.to_topology_text()).map_err(io)?;
    for o in &result.outcomes {
        fs::write(
            dir.join(format!("replica-{}.tsv", o.trace.replica)),
            o.trace.to_tsv(&classes),
        )
        .map_err(io)?;
    }
    Ok(())
}

fn optimize(args: &OptimizeArgs) -> Result<bool, BenchError> {
    let inst = match &args.instance {
        Some(p) => parse_instance(&read_file(p)?)?,
        None => args.scenario.scenario()?.instance()?,
    };
    let opts = SolveOptions {
        node_budget: args.node_budget,
        seed: args.scenario.seed.unwrap_or(0),
        ..SolveOptions::default()
    };
    let report = solve(&inst, &opts);
    eprintln!(
        "cost {:.9} optimal {} nodes {} in {:.3}s",
        report.cost,
        report.optimal,
        report.nodes_explored,
        report.wall_time.as_secs_f64()
    );
    emit(
        args.output.as_deref(),
        &serialize_assignment(&inst, &report.assignment),
    )?;
    Ok(true)
}

fn run(args: &RunArgs) -> Result<bool, BenchError> {
    let scenario = args.scenario.scenario()?;
    let mut csv = format!("{CSV_HEADER}\n");
    if scenario.requests == 0 {
        emit(args.output.as_deref(), &csv)?;
        return Ok(true);
    }
    let prepared = scenario.prepare()?;
    let result = prepared.experiment.run()?;
    csv.push_str(&scenario.csv_row(&result));
    csv.push('\n');
    emit(args.output.as_deref(), &csv)?;
    if let Some(dir) = &args.dump_traces {
        dump_traces(dir, &scenario, &result)?;
    }
    if args.no_verify {
        return Ok(true);
    }
    let report = result.verify(&prepared.experiment.service, args.samples, scenario.seed);
    eprintln!("{}", report.summary());
    Ok(report.passed())
}

fn verify(args: &VerifyArgs) -> Result<bool, BenchError> {
    let scenario = Scenario {
        topology: args.topology.clone(),
        shards: args.shards,
        ..Scenario::default()
    };
    let classes = scenario.classes()?;
    let trace = ExecutionTrace::parse_tsv(&read_file(&args.trace)?, &classes)
        .map_err(|e| BenchError::Config(format!("{}: {e}", args.trace.display())))?;
    let order =
        check_class_order(&trace, &classes).map_err(|e| BenchError::Config(e.to_string()))?;
    let fifo = check_fifo(&trace);
    for v in &order {
        println!("order: {v}");
    }
    for v in &fifo {
        println!("fifo: {v}");
    }
    println!(
        "{} records, {} order violation(s), {} fifo violation(s)",
        trace.len(),
        order.len(),
        fifo.len()
    );
    Ok(order.is_empty() && fifo.is_empty())
}

fn compare(args: &CompareArgs) -> Result<bool, BenchError> {
    let scenario = args.scenario.scenario()?;
    let (cmp, _, _) = bench::compare(&scenario)?;
    emit(
        args.output.as_deref(),
        &format!(
            "{COMPARE_HEADER}\n{}\n",
            bench::compare_row(&scenario, &cmp)
        ),
    )?;
    eprintln!("late/early makespan ratio {:.3}", cmp.ratio());
    Ok(true)
}

fn sweep(args: &SweepArgs) -> Result<bool, BenchError> {
    let scenario = args.scenario.scenario()?;
    let max = args.max_workers.unwrap_or(scenario.workers);
    emit(args.output.as_deref(), &bench::sweep(&scenario, max)?)?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Optimize(a) => optimize(a),
        Command::Run(a) => run(a),
        Command::Verify(a) => verify(a),
        Command::Compare(a) => compare(a),
        Command::Sweep(a) => sweep(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
