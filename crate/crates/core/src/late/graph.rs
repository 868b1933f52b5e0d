use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{ConflictOracle, Footprint};
use crate::class_model::Request;

struct Node {
    req: Arc<Request>,
    footprint: Footprint,
    depends_on: Vec<u64>,
    unresolved: usize,
    dependents: Vec<u64>,
    executing: bool,
}

/// Delivered requests that have not finished executing. Each node points
/// at every earlier node it conflicts with, and becomes ready once all of
/// those have completed.
pub struct DependencyGraph {
    oracle: ConflictOracle,
    capacity: usize,
    nodes: BTreeMap<u64, Node>,
    ready: BTreeSet<u64>,
    max_len: usize,
}

impl DependencyGraph {
    pub fn new(oracle: ConflictOracle, capacity: usize) -> Self {
        Self {
            oracle,
            capacity: capacity.max(1),
            nodes: BTreeMap::new(),
            ready: BTreeSet::new(),
            max_len: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.nodes.len() >= self.capacity
    }

    /// Nodes that could be taken right now.
    pub fn ready_count(&self) -> usize {
        self.ready.len()
    }

    /// Largest node count seen so far.
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Adds `req`, which must carry a higher sequence number than any node
    /// inserted before. Hands the request back when the graph is full;
    /// otherwise returns the number of edges created.
    pub fn try_insert(&mut self, req: Arc<Request>) -> Result<usize, Arc<Request>> {
        if self.is_full() {
            return Err(req);
        }
        let seq = req.global_seq;
        debug_assert!(self
            .nodes
            .keys()
            .next_back()
            .is_none_or(|&last| last < seq));
        let footprint = self.oracle.footprint(&req);
        let mut depends_on = Vec::new();
        for (&other, node) in self.nodes.iter_mut() {
            if self.oracle.overlaps(&node.footprint, &footprint) {
                depends_on.push(other);
                node.dependents.push(seq);
            }
        }
        let edges = depends_on.len();
        if edges == 0 {
            self.ready.insert(seq);
        }
        self.nodes.insert(
            seq,
            Node {
                req,
                footprint,
                depends_on,
                unresolved: edges,
                dependents: Vec::new(),
                executing: false,
            },
        );
        self.max_len = self.max_len.max(self.nodes.len());
        Ok(edges)
    }

    /// Marks the lowest-numbered ready node as executing and returns it.
    pub fn take_ready(&mut self) -> Option<Arc<Request>> {
        let seq = self.ready.pop_first()?;
        let node = self.nodes.get_mut(&seq).expect("ready node missing");
        node.executing = true;
        Some(Arc::clone(&node.req))
    }

    /// Removes an executing node. Returns how many nodes became ready.
    pub fn complete(&mut self, seq: u64) -> usize {
        let node = self
            .nodes
            .remove(&seq)
            .expect("completing a request that is not in the graph");
        assert!(
            node.executing,
            "completing request {seq} before it was taken"
        );
        let mut released = 0;
        for d in node.dependents {
            let dep = self.nodes.get_mut(&d).expect("dependent node missing");
            dep.unresolved -= 1;
            if dep.unresolved == 0 {
                self.ready.insert(d);
                released += 1;
            }
        }
        released
    }

    pub fn contains(&self, seq: u64) -> bool {
        self.nodes.contains_key(&seq)
    }

    pub fn is_executing(&self, seq: u64) -> bool {
        self.nodes.get(&seq).is_some_and(|n| n.executing)
    }

    /// Earlier nodes `seq` still waits for.
    pub fn dependencies(&self, seq: u64) -> Vec<u64> {
        self.nodes
            .get(&seq)
            .map(|n| {
                n.depends_on
                    .iter()
                    .copied()
                    .filter(|d| self.nodes.contains_key(d))
                    .collect()
            })
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class_model::{builtin_topology, TopologyKind};
    use crate::late::{ConflictGranularity, LateConfig};
    use crate::service::{Classifier, ServiceOp};
    use proptest::prelude::*;

    fn graph(
        shards: usize,
        capacity: usize,
        granularity: ConflictGranularity,
    ) -> (DependencyGraph, Classifier) {
        let classes = builtin_topology(TopologyKind::ShardedGlobal, shards).unwrap();
        let cl = Classifier::new(&classes, shards).unwrap();
        let cfg = LateConfig::new(classes, 2, shards)
            .with_capacity(capacity)
            .with_granularity(granularity);
        (DependencyGraph::new(cfg.oracle(), cfg.capacity), cl)
    }

    fn req(cl: &Classifier, seq: u64, op: ServiceOp) -> Arc<Request> {
        Arc::new(Request {
            global_seq: seq,
            client_id: 0,
            client_seq: seq,
            class_id: cl.class_of(&op).unwrap(),
            payload: op,
        })
    }

    #[test]
    fn add_after_pending_add_of_same_key() {
        let (mut g, cl) = graph(1, 50, ConflictGranularity::Key);
        assert_eq!(
            g.try_insert(req(&cl, 0, ServiceOp::Add { shard: 0, key: 4 }))
                .unwrap(),
            0
        );
        assert_eq!(
            g.try_insert(req(&cl, 1, ServiceOp::Add { shard: 0, key: 4 }))
                .unwrap(),
            1
        );
        assert_eq!(g.dependencies(1), vec![0]);
    }

    #[test]
    fn reads_are_independent() {
        let (mut g, cl) = graph(1, 50, ConflictGranularity::Key);
        g.try_insert(req(&cl, 0, ServiceOp::Contains { shard: 0, key: 1 }))
            .unwrap();
        assert_eq!(
            g.try_insert(req(&cl, 1, ServiceOp::Contains { shard: 0, key: 2 }))
                .unwrap(),
            0
        );
        assert_eq!(g.ready_count(), 2);
        let a = g.take_ready().unwrap();
        let b = g.take_ready().unwrap();
        assert_eq!((a.global_seq, b.global_seq), (0, 1));
        assert!(g.is_executing(0) && g.is_executing(1));
    }

    #[test]
    fn full_graph_refuses_until_a_completion() {
        let (mut g, cl) = graph(1, 50, ConflictGranularity::Key);
        for i in 0..50 {
            g.try_insert(req(&cl, i, ServiceOp::Add { shard: 0, key: i }))
                .unwrap();
        }
        assert!(g.is_full());
        let extra = req(&cl, 50, ServiceOp::Add { shard: 0, key: 50 });
        let extra = g.try_insert(extra).unwrap_err();
        let first = g.take_ready().unwrap();
        assert!(g.try_insert(Arc::clone(&extra)).is_err());
        g.complete(first.global_seq);
        assert!(g.try_insert(extra).is_ok());
        assert_eq!(g.max_len(), 50);
    }

    #[test]
    fn successor_waits_for_predecessor() {
        let (mut g, cl) = graph(1, 50, ConflictGranularity::Key);
        g.try_insert(req(&cl, 0, ServiceOp::Add { shard: 0, key: 9 }))
            .unwrap();
        g.try_insert(req(&cl, 1, ServiceOp::Add { shard: 0, key: 9 }))
            .unwrap();
        let w1 = g.take_ready().unwrap();
        assert_eq!(w1.global_seq, 0);
        assert!(g.take_ready().is_none());
        assert_eq!(g.complete(0), 1);
        assert_eq!(g.take_ready().unwrap().global_seq, 1);
        assert_eq!(g.complete(1), 0);
        assert!(g.is_empty());
    }

    #[test]
    fn granularity_coarsens_conflicts() {
        let ops = [
            ServiceOp::Add { shard: 0, key: 1 },
            ServiceOp::Add { shard: 0, key: 2 },
        ];
        let edges = |gr| {
            let (mut g, cl) = graph(2, 50, gr);
            g.try_insert(req(&cl, 0, ops[0])).unwrap();
            g.try_insert(req(&cl, 1, ops[1])).unwrap()
        };
        assert_eq!(edges(ConflictGranularity::Key), 0);
        assert_eq!(edges(ConflictGranularity::Shard), 1);
        assert_eq!(edges(ConflictGranularity::Class), 1);
    }

    fn arb_op() -> impl Strategy<Value = ServiceOp> {
        prop_oneof![
            (0..2u16, 0..4u64).prop_map(|(shard, key)| ServiceOp::Contains { shard, key }),
            (0..2u16, 0..4u64).prop_map(|(shard, key)| ServiceOp::Add { shard, key }),
            (0..4u64).prop_map(|key| ServiceOp::ContainsAll { key }),
            (0..4u64).prop_map(|key| ServiceOp::AddAll { key }),
        ]
    }

    proptest! {
        /// Edges match the oracle exactly, and whatever has no unresolved
        /// dependency is ready or executing.
        #[test]
        fn edges_follow_oracle(ops in proptest::collection::vec(arb_op(), 1..40), takes in proptest::collection::vec(any::<bool>(), 40)) {
            let (mut g, cl) = graph(2, 1000, ConflictGranularity::Key);
            let reqs: Vec<_> = ops.iter().enumerate().map(|(i, op)| req(&cl, i as u64, *op)).collect();
            let oracle = LateConfig::new(builtin_topology(TopologyKind::ShardedGlobal, 2).unwrap(), 2, 2).oracle();
            let mut running = Vec::new();
            for (i, r) in reqs.iter().enumerate() {
                g.try_insert(Arc::clone(r)).unwrap();
                let expect: Vec<u64> = (0..i)
                    .filter(|&j| g.contains(j as u64) && oracle.conflicts(&reqs[j], r))
                    .map(|j| j as u64)
                    .collect();
                prop_assert_eq!(g.dependencies(i as u64), expect);
                if takes[i] {
                    if let Some(t) = g.take_ready() {
                        running.push(t.global_seq);
                    }
                } else if let Some(s) = running.pop() {
                    g.complete(s);
                }
                for &seq in g.nodes.keys() {
                    if g.dependencies(seq).is_empty() {
                        prop_assert!(g.is_executing(seq) || g.ready.contains(&seq));
                    }
                }
            }
        }
    }
}
