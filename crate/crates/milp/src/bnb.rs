use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::lp::{LpOptions, LpStatus, Simplex, Snapshot};
use crate::model::{Model, VarKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MipOptions {
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    /// Relative gap `(bound - incumbent) / max(1, |incumbent|)` at which search stops.
    pub rel_gap: f64,
    pub integrality_tol: f64,
    pub feasibility_tol: f64,
}

impl Default for MipOptions {
    fn default() -> Self {
        Self {
            node_limit: 200_000,
            time_limit: None,
            rel_gap: 1e-6,
            integrality_tol: 1e-6,
            feasibility_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    /// A limit stopped the search with an incumbent in hand.
    FeasibleWithGap,
    Infeasible,
    /// A limit stopped the search before any incumbent was found.
    LimitReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipResult {
    pub status: MipStatus,
    /// Incumbent objective, `-inf` when there is none.
    pub objective: f64,
    pub values: Option<Vec<f64>>,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
}

impl MipResult {
    pub fn has_solution(&self) -> bool {
        self.values.is_some()
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fixings: Vec<(usize, f64)>,
    snapshot: Snapshot,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

pub fn branch_and_bound(model: &Model, opts: &MipOptions) -> Result<MipResult> {
    branch_and_bound_with_start(model, opts, None)
}

/// Best-first branch-and-bound. A feasible `start` point seeds the incumbent.
///
/// After each branching the child on the rounding side is solved right away
/// on the warm factorization; the other child waits in the best-bound queue.
pub fn branch_and_bound_with_start(model: &Model, opts: &MipOptions, start: Option<&[f64]>) -> Result<MipResult> {
    model.validate()?;
    let started = Instant::now();
    let binaries: Vec<usize> = model
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == VarKind::Binary)
        .map(|(j, _)| j)
        .collect();
    let lp_opts = LpOptions {
        feasibility_tol: opts.feasibility_tol,
        max_iterations: None,
    };
    let mut search = Search {
        model,
        opts,
        binaries: &binaries,
        incumbent: None,
        nodes: 0,
        seq: 0,
    };
    if let Some(x) = start {
        search.offer(x);
    }

    let mut sx = Simplex::new(model, lp_opts);
    sx.deadline = opts.time_limit.map(|t| started + t);
    let root_bounds: Vec<(f64, f64)> = binaries.iter().map(|&j| sx.bounds(j)).collect();
    let mut status = sx.solve();
    search.nodes = 1;
    match status {
        LpStatus::Infeasible => {
            return Ok(search.finish(MipStatus::Infeasible, f64::NEG_INFINITY, sx.iterations));
        }
        LpStatus::Stalled | LpStatus::Unbounded => {
            return Ok(search.finish(MipStatus::LimitReached, f64::INFINITY, sx.iterations));
        }
        LpStatus::Optimal => {}
    }
    let root_bound = sx.objective(model);

    // Rounding the root relaxation.
    if !binaries.is_empty() {
        let mut rounded = sx.clone();
        let x = sx.structural_values().to_vec();
        for &j in &binaries {
            let v = x[j].round().clamp(0.0, 1.0);
            rounded.set_bounds(j, v, v);
        }
        rounded.bounds_changed();
        if rounded.solve() == LpStatus::Optimal {
            let cand = rounded.structural_values().to_vec();
            search.offer(&cand);
        }
    }

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut fixings: Vec<(usize, f64)> = Vec::new();
    let mut depth = 0usize;
    let mut limit_hit = false;
    let mut open_bound = f64::NEG_INFINITY;
    let mut current_bound = root_bound;
    // Bound inherited from the parent of the node just solved.
    let mut parent_bound = root_bound;

    loop {
        let mut plunge_next: Option<(usize, f64)> = None;
        if status == LpStatus::Stalled {
            // Unresolved node: its subtree stays open.
            if !search.pruned(parent_bound) {
                open_bound = open_bound.max(parent_bound);
                limit_hit = true;
            }
        }
        if status == LpStatus::Optimal {
            let bound = sx.objective(model);
            current_bound = bound;
            if !search.pruned(bound) {
                let x = sx.structural_values();
                match search.branch_column(x) {
                    None => search.offer(&x.to_vec()),
                    Some((j, frac)) => {
                        let near = if frac >= 0.5 { 1.0 } else { 0.0 };
                        let far = 1.0 - near;
                        let mut far_fix = fixings.clone();
                        far_fix.push((j, far));
                        search.seq += 1;
                        heap.push(Node {
                            bound,
                            depth: depth + 1,
                            seq: search.seq,
                            fixings: far_fix,
                            snapshot: sx.snapshot(),
                        });
                        plunge_next = Some((j, near));
                    }
                }
            }
        }

        if search.nodes >= opts.node_limit || opts.time_limit.is_some_and(|t| started.elapsed() >= t) {
            limit_hit = true;
            if plunge_next.is_some() {
                open_bound = open_bound.max(current_bound);
            }
            break;
        }

        if let Some((j, v)) = plunge_next {
            fixings.push((j, v));
            depth += 1;
            parent_bound = current_bound;
            sx.set_bounds(j, v, v);
            sx.bounds_changed();
            status = sx.solve();
            search.nodes += 1;
            continue;
        }

        let next = loop {
            match heap.pop() {
                None => break None,
                Some(node) if search.pruned(node.bound) => continue,
                Some(node) => break Some(node),
            }
        };
        let Some(node) = next else { break };
        for (&j, &(lo, hi)) in binaries.iter().zip(&root_bounds) {
            sx.set_bounds(j, lo, hi);
        }
        for &(j, v) in &node.fixings {
            sx.set_bounds(j, v, v);
        }
        sx.restore(&node.snapshot);
        fixings = node.fixings;
        depth = node.depth;
        parent_bound = node.bound;
        status = sx.solve();
        search.nodes += 1;
    }

    let iterations = sx.iterations;
    for node in heap.iter() {
        if !search.pruned(node.bound) {
            open_bound = open_bound.max(node.bound);
        }
    }
    // A limit that fires with nothing left open did not cut the search short.
    if limit_hit && open_bound > f64::NEG_INFINITY {
        let bound = match &search.incumbent {
            Some((obj, _)) => open_bound.max(*obj),
            None => open_bound,
        };
        let status = if search.incumbent.is_some() {
            MipStatus::FeasibleWithGap
        } else {
            MipStatus::LimitReached
        };
        return Ok(search.finish(status, bound, iterations));
    }
    match &search.incumbent {
        Some((obj, _)) => {
            let obj = *obj;
            Ok(search.finish(MipStatus::Optimal, obj, iterations))
        }
        None => Ok(search.finish(MipStatus::Infeasible, f64::NEG_INFINITY, iterations)),
    }
}

struct Search<'a> {
    model: &'a Model,
    opts: &'a MipOptions,
    binaries: &'a [usize],
    incumbent: Option<(f64, Vec<f64>)>,
    nodes: usize,
    seq: usize,
}

impl Search<'_> {
    fn tolerance(&self, obj: f64) -> f64 {
        (self.opts.rel_gap * obj.abs().max(1.0)).max(1e-9)
    }

    fn pruned(&self, bound: f64) -> bool {
        match &self.incumbent {
            Some((obj, _)) => bound <= obj + self.tolerance(*obj),
            None => false,
        }
    }

    /// Most fractional binary, lowest index on ties.
    fn branch_column(&self, x: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = self.opts.integrality_tol;
        for &j in self.binaries {
            let v = x[j];
            let f = v - v.floor();
            let score = f.min(1.0 - f);
            if score > best_score {
                best_score = score;
                best = Some((j, f));
            }
        }
        best
    }

    /// Accepts `x` as incumbent if it is feasible and improves the objective.
    fn offer(&mut self, x: &[f64]) {
        if x.len() != self.model.num_cols() {
            return;
        }
        let mut snapped = x.to_vec();
        for &j in self.binaries {
            if (snapped[j] - snapped[j].round()).abs() > self.opts.integrality_tol {
                return;
            }
            snapped[j] = snapped[j].round();
        }
        if self.model.max_violation(&snapped) > self.opts.feasibility_tol * 100.0 {
            return;
        }
        let obj = self.model.objective_value(&snapped);
        if self.incumbent.as_ref().is_none_or(|(best, _)| obj > *best) {
            self.incumbent = Some((obj, snapped));
        }
    }

    fn finish(&mut self, status: MipStatus, bound: f64, lp_iterations: usize) -> MipResult {
        let (objective, values) = match self.incumbent.take() {
            Some((o, v)) => (o, Some(v)),
            None => (f64::NEG_INFINITY, None),
        };
        let gap = if values.is_some() {
            ((bound - objective) / objective.abs().max(1.0)).max(0.0)
        } else {
            f64::INFINITY
        };
        MipResult {
            status,
            objective,
            values,
            best_bound: bound,
            gap,
            nodes: self.nodes,
            lp_iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Comparator;

    #[test]
    fn fractional_equality_over_binaries_is_infeasible() {
        let mut m = Model::new();
        let a = m.add_binary("a", 1.0);
        let b = m.add_binary("b", 1.0);
        m.add_row("c", [(a, 1.0), (b, 1.0)], Comparator::Eq, 1.5);
        let r = branch_and_bound(&m, &MipOptions::default()).unwrap();
        assert_eq!(r.status, MipStatus::Infeasible);
        assert!(r.values.is_none());
    }

    #[test]
    fn integral_root_needs_one_node() {
        let mut m = Model::new();
        let a = m.add_binary("a", 2.0);
        let b = m.add_binary("b", -1.0);
        m.add_row("c", [(a, 1.0), (b, 1.0)], Comparator::Le, 1.0);
        let r = branch_and_bound(&m, &MipOptions::default()).unwrap();
        assert_eq!(r.status, MipStatus::Optimal);
        assert_eq!(r.nodes, 1);
        assert_eq!(r.values.unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn small_knapsack() {
        // Capacity 7 is filled exactly by the first two items, worth 23.
        let mut m = Model::new();
        let v = [10.0, 13.0, 7.0, 8.0];
        let w = [3.0, 4.0, 2.0, 3.0];
        let cols: Vec<_> = v.iter().enumerate().map(|(i, &o)| m.add_binary(format!("z{i}"), o)).collect();
        m.add_row("cap", cols.iter().zip(w).map(|(&c, a)| (c, a)), Comparator::Le, 7.0);
        let r = branch_and_bound(&m, &MipOptions::default()).unwrap();
        assert_eq!(r.status, MipStatus::Optimal);
        assert!((r.objective - 23.0).abs() < 1e-9);
        assert_eq!(r.gap, 0.0);
    }

    #[test]
    fn node_limit_reports_gap() {
        let mut m = Model::new();
        let cols: Vec<_> = (0..12).map(|i| m.add_binary(format!("z{i}"), 1.0 + (i % 5) as f64 * 0.37)).collect();
        m.add_row(
            "cap",
            cols.iter().enumerate().map(|(i, &c)| (c, 2.0 + (i % 3) as f64 * 1.1)),
            Comparator::Le,
            9.7,
        );
        let opts = MipOptions {
            node_limit: 2,
            ..MipOptions::default()
        };
        let r = branch_and_bound(&m, &opts).unwrap();
        assert!(matches!(r.status, MipStatus::FeasibleWithGap | MipStatus::LimitReached | MipStatus::Optimal));
        assert!(r.best_bound >= r.objective - 1e-9);
    }

    #[test]
    fn start_point_seeds_incumbent() {
        let mut m = Model::new();
        let a = m.add_binary("a", 1.0);
        let x = m.add_continuous("x", 0.0, 2.0, 0.5);
        m.add_row("c", [(a, 1.0), (x, 1.0)], Comparator::Le, 2.0);
        let opts = MipOptions {
            node_limit: 1,
            ..MipOptions::default()
        };
        let r = branch_and_bound_with_start(&m, &opts, Some(&[1.0, 1.0])).unwrap();
        assert!(r.has_solution());
        assert!(r.objective >= 1.5 - 1e-12);
    }
}
