//! Early scheduling: a scheduler thread routes each delivered request to
//! worker queues by its class, and workers of sequential classes meet on a
//! per-class barrier before the lowest-numbered one executes.

mod dispatch;
mod sim;
mod threads;

pub use dispatch::{Dispatcher, RoundRobinCursor};
pub use sim::EarlySim;
pub(crate) use threads::spawn_threads;

use crate::optimizer::{check_feasible, Assignment, ProblemInstance};
use crate::runtime::RuntimeError;

pub const DEFAULT_QUEUE_CAPACITY: usize = 16_384;

/// A class-to-thread mapping bound to its instance, checked feasible.
#[derive(Debug, Clone)]
pub struct EarlyConfig {
    pub instance: ProblemInstance,
    pub assignment: Assignment,
    /// `None` for unbounded worker queues.
    pub queue_capacity: Option<usize>,
}

impl EarlyConfig {
    pub fn new(instance: ProblemInstance, assignment: Assignment) -> Result<Self, RuntimeError> {
        let violations = check_feasible(&instance, &assignment)?;
        if !violations.is_empty() {
            return Err(RuntimeError::Infeasible(violations));
        }
        Ok(Self {
            instance,
            assignment,
            queue_capacity: Some(DEFAULT_QUEUE_CAPACITY),
        })
    }

    pub fn with_queue_capacity(mut self, capacity: Option<usize>) -> Self {
        self.queue_capacity = capacity.map(|c| c.max(1));
        self
    }

    pub fn threads(&self) -> usize {
        self.instance.threads()
    }
}
