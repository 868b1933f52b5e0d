use crate::class_model::{ClassId, Request};
use crate::optimizer::{Assignment, Mode, ThreadSet};
use crate::runtime::RuntimeError;

/// Position in a concurrent class's thread list. The cursor lives as long
/// as the replica, so round-robin continues across deliveries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundRobinCursor {
    next: usize,
}

impl RoundRobinCursor {
    pub fn advance(&mut self, threads: &[usize]) -> usize {
        let t = threads[self.next % threads.len()];
        self.next = (self.next + 1) % threads.len();
        t
    }
}

/// Decides which worker queues receive each request.
#[derive(Debug, Clone)]
pub struct Dispatcher {
    modes: Vec<Mode>,
    uses: Vec<ThreadSet>,
    threads: Vec<Vec<usize>>,
    cursors: Vec<RoundRobinCursor>,
}

impl Dispatcher {
    pub fn new(assignment: &Assignment) -> Self {
        Self {
            modes: assignment.modes.clone(),
            uses: assignment.uses.clone(),
            threads: assignment.uses.iter().map(|s| s.iter().collect()).collect(),
            cursors: vec![RoundRobinCursor::default(); assignment.modes.len()],
        }
    }

    pub fn mode(&self, class: ClassId) -> Mode {
        self.modes[class.0]
    }

    pub fn uses(&self, class: ClassId) -> ThreadSet {
        self.uses[class.0]
    }

    /// Sequential requests go to every thread of their class, concurrent
    /// ones to the next thread in round-robin order.
    pub fn dispatch(&mut self, req: &Request) -> Result<ThreadSet, RuntimeError> {
        let c = req.class_id.0;
        if c >= self.modes.len() {
            return Err(RuntimeError::UnknownClass {
                global_seq: req.global_seq,
                class: req.class_id,
            });
        }
        Ok(match self.modes[c] {
            Mode::Seq => self.uses[c],
            Mode::Cnc => ThreadSet::single(self.cursors[c].advance(&self.threads[c])),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::ServiceOp;

    fn req(seq: u64, class: usize) -> Request {
        Request {
            global_seq: seq,
            client_id: 0,
            client_seq: seq,
            class_id: ClassId(class),
            payload: ServiceOp::Contains { shard: 0, key: 0 },
        }
    }

    fn set(ts: &[usize]) -> ThreadSet {
        ts.iter().copied().collect()
    }

    fn dispatcher() -> Dispatcher {
        Dispatcher::new(&Assignment {
            modes: vec![Mode::Seq, Mode::Cnc, Mode::Cnc],
            uses: vec![set(&[1, 3]), set(&[0, 2]), set(&[4])],
        })
    }

    #[test]
    fn sequential_goes_to_every_thread() {
        let mut d = dispatcher();
        assert_eq!(d.dispatch(&req(0, 0)).unwrap(), set(&[1, 3]));
        assert_eq!(d.dispatch(&req(1, 0)).unwrap(), set(&[1, 3]));
    }

    #[test]
    fn concurrent_round_robin_persists() {
        let mut d = dispatcher();
        let targets: Vec<ThreadSet> = (0..3).map(|i| d.dispatch(&req(i, 1)).unwrap()).collect();
        assert_eq!(targets, vec![set(&[0]), set(&[2]), set(&[0])]);
        d.dispatch(&req(3, 0)).unwrap();
        assert_eq!(d.dispatch(&req(4, 1)).unwrap(), set(&[2]));
    }

    #[test]
    fn single_thread_class() {
        let mut d = dispatcher();
        for i in 0..4 {
            assert_eq!(d.dispatch(&req(i, 2)).unwrap(), set(&[4]));
        }
    }

    #[test]
    fn unknown_class_is_rejected() {
        let mut d = dispatcher();
        assert!(matches!(
            d.dispatch(&req(7, 9)),
            Err(RuntimeError::UnknownClass { global_seq: 7, .. })
        ));
    }
}
