//! Early (class-based) and late (dependency-graph) request scheduling for
//! parallel state machine replication.

pub mod bench;
pub mod class_model;
pub mod early;
pub mod late;
pub mod metrics;
pub mod optimizer;
pub mod replication;
pub mod runtime;
pub mod service;
pub mod verify;
