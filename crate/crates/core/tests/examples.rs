#[allow(dead_code)]
mod optimize_mapping {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/optimize_mapping.rs"
    ));
}

#[test]
fn optimize_mapping_runs() {
    optimize_mapping::run_example().expect("optimize_mapping example should run");
}

#[allow(dead_code)]
mod brute_force_oracle {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/brute_force_oracle.rs"
    ));
}

#[test]
fn brute_force_oracle_runs() {
    brute_force_oracle::run_example().expect("brute_force_oracle example should run");
}

#[allow(dead_code)]
mod class_topologies {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/class_topologies.rs"
    ));
}

#[test]
fn class_topologies_runs() {
    class_topologies::run_example().expect("class_topologies example should run");
}

#[allow(dead_code)]
mod early_scheduler_sim {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/early_scheduler_sim.rs"
    ));
}

#[test]
fn early_scheduler_sim_runs() {
    early_scheduler_sim::run_example().expect("early_scheduler_sim example should run");
}

#[allow(dead_code)]
mod late_dependency_graph {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/late_dependency_graph.rs"
    ));
}

#[test]
fn late_dependency_graph_runs() {
    late_dependency_graph::run_example().expect("late_dependency_graph example should run");
}

#[allow(dead_code)]
mod early_vs_late {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/early_vs_late.rs"
    ));
}

#[test]
fn early_vs_late_runs() {
    early_vs_late::run_example().expect("early_vs_late example should run");
}

#[allow(dead_code)]
mod replicated_experiment {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/replicated_experiment.rs"
    ));
}

#[test]
fn replicated_experiment_runs() {
    replicated_experiment::run_example().expect("replicated_experiment example should run");
}

#[allow(dead_code)]
mod linearizability_check {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/linearizability_check.rs"
    ));
}

#[test]
fn linearizability_check_runs() {
    linearizability_check::run_example().expect("linearizability_check example should run");
}

#[allow(dead_code)]
mod threads_mode {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/threads_mode.rs"
    ));
}

#[test]
fn threads_mode_runs() {
    threads_mode::run_example().expect("threads_mode example should run");
}

#[allow(dead_code)]
mod workload_mix {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/workload_mix.rs"
    ));
}

#[test]
fn workload_mix_runs() {
    workload_mix::run_example().expect("workload_mix example should run");
}

#[allow(dead_code)]
mod worker_sweep {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/worker_sweep.rs"
    ));
}

#[test]
fn worker_sweep_runs() {
    worker_sweep::run_example().expect("worker_sweep example should run");
}

#[allow(dead_code)]
mod scenario_config {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/scenario_config.rs"
    ));
}

#[test]
fn scenario_config_runs() {
    scenario_config::run_example().expect("scenario_config example should run");
}

#[allow(dead_code)]
mod trace_dump {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/trace_dump.rs"
    ));
}

#[test]
fn trace_dump_runs() {
    trace_dump::run_example().expect("trace_dump example should run");
}
