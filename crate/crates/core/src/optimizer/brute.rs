use std::time::Instant;

use super::{
    cost, is_feasible, Assignment, Mode, OptimizerError, ProblemInstance, SolveReport, ThreadSet,
    COST_TOLERANCE,
};

/// Largest search space, in bits (`nc*nt + nc`), that [`brute_force`] accepts.
pub const BRUTE_FORCE_MAX_BITS: usize = 24;

/// Exhaustive search over every mode vector and thread matrix.
///
/// Candidates are visited in increasing `(sequential bits, thread matrix)`
/// order and a candidate only replaces the incumbent when it is cheaper by
/// more than the tolerance, so among cost-equal optima the first one in
/// that order wins.
pub fn brute_force(inst: &ProblemInstance) -> Result<SolveReport, OptimizerError> {
    brute_force_with_limit(inst, BRUTE_FORCE_MAX_BITS)
}

/// [`brute_force`] with a caller-chosen size limit, for offline checks.
pub fn brute_force_with_limit(
    inst: &ProblemInstance,
    max_bits: usize,
) -> Result<SolveReport, OptimizerError> {
    let started = Instant::now();
    let n = inst.num_classes();
    let nt = inst.threads();
    let bits = n * nt + n;
    if bits > max_bits || bits >= 64 {
        return Err(OptimizerError::TooLarge {
            bits,
            limit: max_bits,
        });
    }
    let row_mask = ThreadSet::all(nt).0;
    let mut cand = Assignment {
        modes: vec![Mode::Cnc; n],
        uses: vec![ThreadSet::EMPTY; n],
    };
    let mut best: Option<(f64, Assignment)> = None;
    let mut visited = 0u64;
    for seq in 0u64..(1 << n) {
        for c in 0..n {
            cand.modes[c] = if seq >> c & 1 == 1 {
                Mode::Seq
            } else {
                Mode::Cnc
            };
        }
        for matrix in 0u64..(1 << (n * nt)) {
            visited += 1;
            for c in 0..n {
                cand.uses[c] = ThreadSet(matrix >> (c * nt) & row_mask);
            }
            if !is_feasible(inst, &cand) {
                continue;
            }
            let value = cost(inst, &cand);
            let better = match &best {
                None => true,
                Some((b, _)) => value < b - COST_TOLERANCE,
            };
            if better {
                best = Some((value, cand.clone()));
            }
        }
    }
    let (cost, assignment) = best.ok_or(OptimizerError::NoFeasible)?;
    Ok(SolveReport {
        assignment,
        cost,
        optimal: true,
        nodes_explored: visited,
        wall_time: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class_model::{builtin_topology, RequestClasses, TopologyKind};

    fn set(ts: &[usize]) -> ThreadSet {
        ts.iter().copied().collect()
    }

    #[test]
    fn readers_writers_two_threads() {
        let inst = ProblemInstance::new(
            builtin_topology(TopologyKind::ReadersWriters, 1).unwrap(),
            2,
        )
        .unwrap();
        let r = brute_force(&inst).unwrap();
        assert_eq!(r.cost, 0.0);
        assert!(r.optimal);
        assert_eq!(r.assignment.modes, vec![Mode::Cnc, Mode::Seq]);
        assert_eq!(r.assignment.uses, vec![set(&[0, 1]), set(&[0, 1])]);
    }

    #[test]
    fn single_internally_conflicting_class() {
        let classes = RequestClasses::from_edges(&["A"], &[("A", "A")]).unwrap();
        let r = brute_force(&ProblemInstance::new(classes, 1).unwrap()).unwrap();
        assert_eq!(r.assignment.modes, vec![Mode::Seq]);
        assert_eq!(r.assignment.uses, vec![set(&[0])]);
        assert_eq!(r.cost, 1.0);
    }

    #[test]
    fn mutually_conflicting_sequential_pair_shares_the_thread() {
        let classes =
            RequestClasses::from_edges(&["A", "B"], &[("A", "A"), ("B", "B"), ("A", "B")]).unwrap();
        let inst = ProblemInstance::new(classes, 1).unwrap();
        let r = brute_force(&inst).unwrap();
        assert_eq!(r.assignment.modes, vec![Mode::Seq, Mode::Seq]);
        assert_eq!(r.assignment.uses, vec![set(&[0]), set(&[0])]);
        assert_eq!(
            super::super::cost_breakdown(&inst, &r.assignment).shared_independent,
            0.0
        );
        assert_eq!(r.cost, 1.0);
    }

    #[test]
    fn oversized_instances_are_refused() {
        let inst =
            ProblemInstance::new(builtin_topology(TopologyKind::ShardedGlobal, 2).unwrap(), 4)
                .unwrap();
        assert_eq!(
            brute_force(&inst).unwrap_err(),
            OptimizerError::TooLarge {
                bits: 30,
                limit: 24
            }
        );
    }
}
