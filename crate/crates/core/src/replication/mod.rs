//! In-process atomic broadcast, synthetic workloads and the multi-replica
//! experiment harness.

mod experiment;
mod log;
mod workload;

pub use experiment::{Experiment, ExperimentError, ExperimentResult, VerificationReport};
pub use log::{sequence, BroadcastLog, ClientRequest};
pub use workload::{generate_workload, WorkloadError, WorkloadSpec};
