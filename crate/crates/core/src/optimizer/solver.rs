//! Exact branch-and-bound over thread "column types" with a local-search
//! fallback.
//!
//! Threads are interchangeable, so an assignment is determined (up to
//! relabeling) by how many threads carry each column type, i.e. each subset
//! of classes mapped to a thread. For a fixed mode vector the subset rule
//! becomes a filter on column types, the cost splits into a per-thread
//! linear part plus the balance term, and the remaining rules are coverage
//! requirements. The search enumerates multisets of column types in
//! nondecreasing type order, which removes the thread-permutation symmetry.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    cost, is_feasible, Assignment, Mode, ProblemInstance, SolveReport, ThreadSet, COST_TOLERANCE,
};

/// Classes beyond this count skip the exact search.
const EXACT_MAX_CLASSES: usize = 12;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Search nodes before the exact phase gives up.
    pub node_budget: u64,
    /// Optional wall-clock cap; results are only reproducible without it.
    pub time_budget: Option<Duration>,
    pub seed: u64,
    /// Cost evaluations allowed in the local-search fallback.
    pub local_search_evals: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            node_budget: 2_000_000,
            time_budget: None,
            seed: 0,
            local_search_evals: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
struct ColumnType {
    classes: u64,
    pairs: u128,
    cost: f64,
}

struct ModeProblem {
    seq: u64,
    types: Vec<ColumnType>,
    concurrent: Vec<usize>,
    share: Vec<f64>,
    all_pairs: u128,
    last_type_with_class: Vec<Option<usize>>,
    lower_bound: f64,
}

struct Search<'a> {
    inst: &'a ProblemInstance,
    n: usize,
    nt: usize,
    weights: Vec<f64>,
    nodes: u64,
    budget: u64,
    deadline: Option<Instant>,
    exhausted: bool,
    best_cost: f64,
    best: Assignment,
}

impl<'a> Search<'a> {
    fn new(inst: &'a ProblemInstance, opts: &SolveOptions, started: Instant) -> Self {
        let best = Assignment::all_sequential(inst);
        Self {
            inst,
            n: inst.num_classes(),
            nt: inst.threads(),
            weights: inst.effective_weights(),
            nodes: 0,
            budget: opts.node_budget,
            deadline: opts.time_budget.map(|d| started + d),
            exhausted: false,
            best_cost: cost(inst, &best),
            best,
        }
    }

    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
        } else if self.nodes.is_multiple_of(4096) {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    self.exhausted = true;
                }
            }
        }
        !self.exhausted
    }

    fn admissible_modes(&self) -> Vec<u64> {
        let n = self.n;
        let mut out = Vec::new();
        'outer: for seq in 0u64..(1 << n) {
            for c in 0..n {
                let is_seq = seq >> c & 1 == 1;
                if self.inst.conflict(c, c) && !is_seq {
                    continue 'outer;
                }
                if !is_seq {
                    for d in (c + 1)..n {
                        if seq >> d & 1 == 0 && self.inst.conflict(c, d) {
                            continue 'outer;
                        }
                    }
                }
            }
            out.push(seq);
        }
        out
    }

    fn mode_problem(&self, seq: u64) -> Option<ModeProblem> {
        let n = self.n;
        let is_seq = |c: usize| seq >> c & 1 == 1;
        let ws: f64 = (0..n).filter(|&c| is_seq(c)).map(|c| self.weights[c]).sum();
        let wc: f64 = (0..n)
            .filter(|&c| !is_seq(c))
            .map(|c| self.weights[c])
            .sum();

        let mut pair_index = vec![vec![None; n]; n];
        let mut independent = Vec::new();
        let mut npairs = 0;
        for c1 in 0..n {
            for c2 in (c1 + 1)..n {
                if is_seq(c1) && is_seq(c2) {
                    if self.inst.conflict(c1, c2) {
                        if npairs == 128 {
                            return None;
                        }
                        pair_index[c1][c2] = Some(npairs);
                        npairs += 1;
                    } else {
                        independent.push((c1, c2));
                    }
                }
            }
        }
        // superset requirement per concurrent class
        let mut needs = vec![0u64; n];
        for c2 in 0..n {
            if !is_seq(c2) {
                for c1 in 0..n {
                    if c1 != c2 && is_seq(c1) && self.inst.conflict(c1, c2) {
                        needs[c2] |= 1 << c1;
                    }
                }
            }
        }
        let penalty = (self.nt * n) as f64;
        let mut types = Vec::new();
        for mask in 0u64..(1 << n) {
            let mut ok = true;
            let mut linear = 0.0;
            for c in 0..n {
                if mask >> c & 1 == 0 {
                    continue;
                }
                if is_seq(c) {
                    linear += self.weights[c] / ws;
                } else {
                    if mask & needs[c] != needs[c] {
                        ok = false;
                        break;
                    }
                    linear -= self.weights[c] / wc;
                }
            }
            if !ok {
                continue;
            }
            for &(c1, c2) in &independent {
                if mask >> c1 & 1 == 1 && mask >> c2 & 1 == 1 {
                    linear += penalty;
                }
            }
            let mut pairs = 0u128;
            for c1 in 0..n {
                for c2 in (c1 + 1)..n {
                    if let Some(p) = pair_index[c1][c2] {
                        if mask >> c1 & 1 == 1 && mask >> c2 & 1 == 1 {
                            pairs |= 1 << p;
                        }
                    }
                }
            }
            types.push(ColumnType {
                classes: mask,
                pairs,
                cost: linear,
            });
        }
        types.sort_by(|a, b| {
            a.cost
                .partial_cmp(&b.cost)
                .unwrap_or(Ordering::Equal)
                .then(b.classes.cmp(&a.classes))
        });
        let mut last_type_with_class = vec![None; n];
        for (i, t) in types.iter().enumerate() {
            for (c, slot) in last_type_with_class.iter_mut().enumerate() {
                if t.classes >> c & 1 == 1 {
                    *slot = Some(i);
                }
            }
        }
        let concurrent: Vec<usize> = (0..n).filter(|&c| !is_seq(c)).collect();
        let share: Vec<f64> = (0..n)
            .map(|c| if is_seq(c) { 0.0 } else { self.weights[c] / wc })
            .collect();
        let all_pairs = if npairs == 128 {
            u128::MAX
        } else {
            (1u128 << npairs) - 1
        };
        let mut mp = ModeProblem {
            seq,
            types,
            concurrent,
            share,
            all_pairs,
            last_type_with_class,
            lower_bound: 0.0,
        };
        let zero = vec![0u32; n];
        mp.lower_bound =
            self.nt as f64 * mp.types[0].cost + self.balance_bound(&mp, &zero, self.nt, 0);
        Some(mp)
    }

    /// Smallest balance term reachable when `r` more threads may join
    /// classes still offered by types at index `pos` or later.
    fn balance_bound(&self, mp: &ModeProblem, counts: &[u32], r: usize, pos: usize) -> f64 {
        let nt = self.nt as f64;
        let mut total = 0.0;
        for &c in &mp.concurrent {
            let u = counts[c] as f64;
            let s = mp.share[c];
            let open = mp.last_type_with_class[c].is_some_and(|last| last >= pos);
            if !open || r == 0 {
                total += (s - u / nt).abs();
                continue;
            }
            let ideal = (s * nt - u).round().clamp(0.0, r as f64);
            let mut best = f64::INFINITY;
            for k in [ideal - 1.0, ideal, ideal + 1.0] {
                if k >= 0.0 && k <= r as f64 {
                    best = best.min((s - (u + k) / nt).abs());
                }
            }
            total += best;
        }
        total
    }

    fn leaf(&mut self, mp: &ModeProblem, linear: f64, counts: &[u32], chosen: &[usize]) {
        let value = linear + self.balance_bound(mp, counts, 0, usize::MAX);
        if value > self.best_cost + COST_TOLERANCE {
            return;
        }
        let cand = self.assemble(mp, chosen);
        let take = value < self.best_cost - COST_TOLERANCE
            || cand.encoding_cmp(&self.best) == Ordering::Less;
        if take {
            debug_assert!(is_feasible(self.inst, &cand));
            debug_assert!((cost(self.inst, &cand) - value).abs() < 1e-6);
            self.best_cost = value.min(self.best_cost);
            self.best = cand;
        }
    }

    /// Lays out the chosen column types on threads in decreasing mask
    /// order, which yields the smallest encoding among relabelings.
    fn assemble(&self, mp: &ModeProblem, chosen: &[usize]) -> Assignment {
        let mut columns: Vec<u64> = chosen.iter().map(|&i| mp.types[i].classes).collect();
        columns.sort_unstable_by(|a, b| b.cmp(a));
        let mut uses = vec![ThreadSet::EMPTY; self.n];
        for (t, col) in columns.iter().enumerate() {
            for (c, set) in uses.iter_mut().enumerate() {
                if col >> c & 1 == 1 {
                    set.insert(t);
                }
            }
        }
        let modes = (0..self.n)
            .map(|c| {
                if mp.seq >> c & 1 == 1 {
                    Mode::Seq
                } else {
                    Mode::Cnc
                }
            })
            .collect();
        Assignment { modes, uses }
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &mut self,
        mp: &ModeProblem,
        pos: usize,
        r: usize,
        linear: f64,
        counts: &mut Vec<u32>,
        uncovered: u64,
        unpaired: u128,
        chosen: &mut Vec<usize>,
    ) {
        if !self.tick() {
            return;
        }
        if r == 0 {
            if uncovered == 0 && unpaired == 0 {
                self.leaf(mp, linear, counts, chosen);
            }
            return;
        }
        let floor = mp.types[pos].cost;
        let balance_floor = self.balance_bound(mp, counts, r, pos);
        let slack = self.best_cost + COST_TOLERANCE - linear - balance_floor;
        if r as f64 * floor > slack {
            return;
        }
        // types usable anywhere below this node
        let cap = slack - (r - 1) as f64 * floor;
        let end = pos + mp.types[pos..].partition_point(|t| t.cost <= cap);
        if uncovered != 0 || unpaired != 0 {
            let mut reach_classes = 0u64;
            let mut reach_pairs = 0u128;
            let mut class_reach = (0u32, f64::INFINITY);
            let mut pair_reach = (0u32, f64::INFINITY);
            for t in &mp.types[pos..end] {
                reach_classes |= t.classes;
                reach_pairs |= t.pairs;
                let hit = (t.classes & uncovered).count_ones();
                if hit > 0 {
                    class_reach = (class_reach.0.max(hit), class_reach.1.min(t.cost));
                }
                let hit = (t.pairs & unpaired).count_ones();
                if hit > 0 {
                    pair_reach = (pair_reach.0.max(hit), pair_reach.1.min(t.cost));
                }
            }
            if uncovered & !reach_classes != 0 || unpaired & !reach_pairs != 0 {
                return;
            }
            for (need, (widest, cheapest)) in [
                (uncovered.count_ones(), class_reach),
                (unpaired.count_ones(), pair_reach),
            ] {
                if need == 0 {
                    continue;
                }
                let k = need.div_ceil(widest) as usize;
                if k > r || (r - k) as f64 * floor + k as f64 * cheapest > slack {
                    return;
                }
            }
        }
        for j in pos..end {
            let t = &mp.types[j];
            if r as f64 * t.cost > slack {
                break;
            }
            let (classes, pairs, tc) = (t.classes, t.pairs, t.cost);
            for (c, count) in counts.iter_mut().enumerate() {
                *count += (classes >> c & 1) as u32;
            }
            chosen.push(j);
            self.dfs(
                mp,
                j,
                r - 1,
                linear + tc,
                counts,
                uncovered & !classes,
                unpaired & !pairs,
                chosen,
            );
            chosen.pop();
            for (c, count) in counts.iter_mut().enumerate() {
                *count -= (classes >> c & 1) as u32;
            }
            if self.exhausted {
                return;
            }
        }
    }

    fn run_exact(&mut self) {
        let mut problems: Vec<ModeProblem> = self
            .admissible_modes()
            .into_iter()
            .filter_map(|s| self.mode_problem(s))
            .collect();
        problems.sort_by(|a, b| {
            a.lower_bound
                .partial_cmp(&b.lower_bound)
                .unwrap_or(Ordering::Equal)
                .then(a.seq.cmp(&b.seq))
        });
        let all_classes = if self.n == 64 {
            u64::MAX
        } else {
            (1u64 << self.n) - 1
        };
        for mp in &problems {
            if mp.lower_bound > self.best_cost + COST_TOLERANCE {
                continue;
            }
            let mut counts = vec![0u32; self.n];
            let mut chosen = Vec::with_capacity(self.nt);
            self.dfs(
                mp,
                0,
                self.nt,
                0.0,
                &mut counts,
                all_classes,
                mp.all_pairs,
                &mut chosen,
            );
            if self.exhausted {
                return;
            }
        }
    }
}

/// First-improvement local search over mode flips, thread toggles and
/// thread moves, restricted to feasible neighbours.
fn local_search(
    inst: &ProblemInstance,
    start: Assignment,
    seed: u64,
    max_evals: u64,
) -> Assignment {
    #[derive(Clone, Copy)]
    enum Move {
        Flip(usize),
        Toggle(usize, usize),
        Shift(usize, usize, usize),
    }
    let n = inst.num_classes();
    let nt = inst.threads();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut moves = Vec::new();
    for c in 0..n {
        moves.push(Move::Flip(c));
        for t in 0..nt {
            moves.push(Move::Toggle(c, t));
            for u in 0..nt {
                if u != t {
                    moves.push(Move::Shift(c, t, u));
                }
            }
        }
    }
    let mut current = start;
    let mut current_cost = cost(inst, &current);
    let mut evals = 0u64;
    'improve: while evals < max_evals {
        moves.shuffle(&mut rng);
        for &m in &moves {
            let mut cand = current.clone();
            match m {
                Move::Flip(c) => {
                    cand.modes[c] = match cand.modes[c] {
                        Mode::Seq => Mode::Cnc,
                        Mode::Cnc => Mode::Seq,
                    }
                }
                Move::Toggle(c, t) => {
                    if cand.uses[c].contains(t) {
                        cand.uses[c].remove(t)
                    } else {
                        cand.uses[c].insert(t)
                    }
                }
                Move::Shift(c, t, u) => {
                    if !cand.uses[c].contains(t) || cand.uses[c].contains(u) {
                        continue;
                    }
                    cand.uses[c].remove(t);
                    cand.uses[c].insert(u);
                }
            }
            evals += 1;
            if is_feasible(inst, &cand) {
                let v = cost(inst, &cand);
                if v < current_cost - COST_TOLERANCE {
                    current = cand;
                    current_cost = v;
                    continue 'improve;
                }
            }
            if evals >= max_evals {
                break 'improve;
            }
        }
        break;
    }
    current
}

/// Finds a feasible minimum-cost assignment.
///
/// Returns `optimal = true` when the exact search finished inside the node
/// (and optional time) budget. Otherwise the best assignment found is
/// polished by seeded local search and returned with `optimal = false`.
/// The all-sequential mapping is the starting incumbent, so the result is
/// always feasible.
pub fn solve(inst: &ProblemInstance, opts: &SolveOptions) -> SolveReport {
    let started = Instant::now();
    let mut search = Search::new(inst, opts, started);
    let exact = inst.num_classes() <= EXACT_MAX_CLASSES;
    if exact {
        let warm = local_search(
            inst,
            search.best.clone(),
            opts.seed,
            opts.local_search_evals,
        );
        search.best_cost = cost(inst, &warm);
        search.best = warm;
        search.run_exact();
    }
    let optimal = exact && !search.exhausted;
    let nodes = search.nodes.min(opts.node_budget);
    let mut assignment = search.best;
    if !optimal {
        assignment = local_search(inst, assignment, opts.seed, opts.local_search_evals);
    }
    SolveReport {
        cost: cost(inst, &assignment),
        assignment,
        optimal,
        nodes_explored: nodes,
        wall_time: started.elapsed(),
    }
}
