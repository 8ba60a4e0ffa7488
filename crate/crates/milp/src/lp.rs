//! Bounded-variable simplex on the explicit basis inverse.
//!
//! Rows are turned into equalities with one logical column each,
//! `sum_j a_ij x_j - s_i = 0`, where the bounds of `s_i` carry the row
//! comparator. With every structural column finitely bounded, placing each
//! nonbasic column at the bound favoured by its cost makes the all-logical
//! basis dual feasible, so the dual simplex needs no phase one. A primal
//! pass cleans up whatever dual infeasibility numerical drift leaves behind.

use std::time::Instant;

use crate::error::Result;
use crate::model::{Comparator, Model, VarKind};

const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-14;
const REFACTOR_EVERY: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    /// Maximum primal infeasibility accepted on returned solutions.
    pub feasibility_tol: f64,
    /// Iteration cap per solve; `None` picks one from the problem size.
    pub max_iterations: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The iteration cap was hit even after a perturbed retry.
    Stalled,
}

/// Result of a continuous relaxation. Duals follow the maximization sign
/// convention: `row_duals[i] >= 0` on active `<=` rows, `<= 0` on active `>=`
/// rows, and `reduced_costs[j] = obj_j - row_duals . a_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub row_duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

/// Solves the continuous relaxation of `model` (binaries relaxed to [0, 1]).
pub fn lp_solve(model: &Model) -> Result<LpSolution> {
    lp_solve_with(model, &LpOptions::default())
}

pub fn lp_solve_with(model: &Model, opts: &LpOptions) -> Result<LpSolution> {
    model.validate()?;
    let mut sx = Simplex::new(model, *opts);
    let status = sx.solve();
    Ok(sx.solution(model, status))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Place {
    Basic,
    Lower,
    Upper,
}

/// Basis header that can be reinstated with [`Simplex::restore`].
#[derive(Debug, Clone)]
pub(crate) struct Snapshot {
    basis: Vec<usize>,
    place: Vec<Place>,
}

#[derive(Debug, Clone)]
pub(crate) struct Simplex {
    m: usize,
    n: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    /// Minimization costs, length n + m.
    cost: Vec<f64>,
    base_cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    d: Vec<f64>,
    basis: Vec<usize>,
    place: Vec<Place>,
    /// Row-major basis inverse; row p belongs to basis position p.
    binv: Vec<f64>,
    since_refactor: usize,
    opts: LpOptions,
    pub(crate) iterations: usize,
    /// Wall-clock cutoff; a solve that reaches it reports `Stalled`.
    pub(crate) deadline: Option<Instant>,
}

impl Simplex {
    pub(crate) fn new(model: &Model, opts: LpOptions) -> Self {
        let m = model.num_rows();
        let n = model.num_cols();
        let mut counts = vec![0usize; n + 1];
        for r in &model.rows {
            for &(c, _) in &r.terms {
                counts[c.0 + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let mut fill = counts;
        let nnz = col_start[n];
        let mut col_row = vec![0; nnz];
        let mut col_val = vec![0.0; nnz];
        for (i, r) in model.rows.iter().enumerate() {
            for &(c, a) in &r.terms {
                let k = fill[c.0];
                col_row[k] = i;
                col_val[k] = a;
                fill[c.0] += 1;
            }
        }

        let mut cost = vec![0.0; n + m];
        let mut lower = vec![0.0; n + m];
        let mut upper = vec![0.0; n + m];
        for (j, c) in model.columns.iter().enumerate() {
            cost[j] = -c.obj;
            lower[j] = c.lower;
            upper[j] = c.upper;
            if c.kind == VarKind::Binary {
                lower[j] = lower[j].max(0.0);
                upper[j] = upper[j].min(1.0);
            }
        }
        for (i, r) in model.rows.iter().enumerate() {
            let (lo, hi) = match r.cmp {
                Comparator::Le => (f64::NEG_INFINITY, r.rhs),
                Comparator::Ge => (r.rhs, f64::INFINITY),
                Comparator::Eq => (r.rhs, r.rhs),
            };
            lower[n + i] = lo;
            upper[n + i] = hi;
        }

        let mut sx = Simplex {
            m,
            n,
            col_start,
            col_row,
            col_val,
            base_cost: cost.clone(),
            cost,
            lower,
            upper,
            x: vec![0.0; n + m],
            d: vec![0.0; n + m],
            basis: (n..n + m).collect(),
            place: vec![Place::Lower; n + m],
            binv: vec![0.0; m * m],
            since_refactor: 0,
            opts,
            iterations: 0,
            deadline: None,
        };
        for i in 0..m {
            sx.place[n + i] = Place::Basic;
            sx.binv[i * m + i] = -1.0;
        }
        for j in 0..n {
            sx.place[j] = if sx.cost[j] >= 0.0 { Place::Lower } else { Place::Upper };
        }
        sx.recompute_duals();
        sx.recompute_primal();
        sx
    }

    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for k in self.col_start[j]..self.col_start[j + 1] {
                f(self.col_row[k], self.col_val[k]);
            }
        } else {
            f(j - self.n, -1.0);
        }
    }

    fn dot_col(&self, v: &[f64], j: usize) -> f64 {
        let mut s = 0.0;
        self.for_col(j, |i, a| s += v[i] * a);
        s
    }

    /// `B^{-1} a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut w = vec![0.0; m];
        if j < self.n {
            for k in self.col_start[j]..self.col_start[j + 1] {
                let (i, a) = (self.col_row[k], self.col_val[k]);
                for (p, wp) in w.iter_mut().enumerate() {
                    *wp += self.binv[p * m + i] * a;
                }
            }
        } else {
            let i = j - self.n;
            for (p, wp) in w.iter_mut().enumerate() {
                *wp = -self.binv[p * m + i];
            }
        }
        w
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.place[j] {
            Place::Lower => self.lower[j],
            Place::Upper => self.upper[j],
            Place::Basic => self.x[j],
        }
    }

    pub(crate) fn recompute_primal(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.n + m {
            if self.place[j] != Place::Basic {
                let v = self.nonbasic_value(j);
                self.x[j] = v;
                if v != 0.0 {
                    self.for_col(j, |i, a| rhs[i] -= a * v);
                }
            }
        }
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            self.x[self.basis[p]] = row.iter().zip(&rhs).map(|(b, r)| b * r).sum();
        }
    }

    fn recompute_duals(&mut self) {
        let m = self.m;
        let mut y = vec![0.0; m];
        for p in 0..m {
            let cb = self.cost[self.basis[p]];
            if cb != 0.0 {
                let row = &self.binv[p * m..(p + 1) * m];
                for (yi, b) in y.iter_mut().zip(row) {
                    *yi += cb * b;
                }
            }
        }
        for j in 0..self.n + m {
            self.d[j] = if self.place[j] == Place::Basic {
                0.0
            } else {
                self.cost[j] - self.dot_col(&y, j)
            };
        }
    }

    /// Rebuilds the basis inverse from scratch. Dependent structural columns
    /// are swapped for logicals of uncovered rows.
    ///
    /// With rows ordered (free, covered) and positions ordered (structural,
    /// logical) the basis is `[[B_FT, 0], [B_ST, -I]]`, whose inverse is
    /// `[[X, 0], [B_ST X, -I]]` with `X = B_FT^{-1}`; only `X` needs elimination.
    fn refactor(&mut self) {
        let m = self.m;
        let n = self.n;
        let mut covered = vec![false; m];
        let mut structural_pos = Vec::new();
        for (p, &j) in self.basis.iter().enumerate() {
            if j >= n {
                covered[j - n] = true;
            } else {
                structural_pos.push(p);
            }
        }
        let free_rows: Vec<usize> = (0..m).filter(|&i| !covered[i]).collect();
        let k = structural_pos.len();
        debug_assert_eq!(k, free_rows.len());
        let mut slot = vec![usize::MAX; m];
        for (s, &i) in free_rows.iter().enumerate() {
            slot[i] = s;
        }

        // aug = [B_FT | I], rows are free-row slots, left columns structural positions.
        let width = 2 * k;
        let mut aug = vec![0.0; k * width];
        for (a, &p) in structural_pos.iter().enumerate() {
            let j = self.basis[p];
            for t in self.col_start[j]..self.col_start[j + 1] {
                let s = slot[self.col_row[t]];
                if s != usize::MAX {
                    aug[s * width + a] = self.col_val[t];
                }
            }
        }
        for s in 0..k {
            aug[s * width + k + s] = 1.0;
        }
        let mut row_of_col = vec![usize::MAX; k];
        let mut row_used = vec![false; k];
        let mut dependent = Vec::new();
        let mut pivot_row = vec![0.0; width];
        for a in 0..k {
            let mut best = (1e-11, usize::MAX);
            for s in 0..k {
                if !row_used[s] {
                    let v = aug[s * width + a].abs();
                    if v > best.0 {
                        best = (v, s);
                    }
                }
            }
            if best.1 == usize::MAX {
                dependent.push(a);
                continue;
            }
            let s = best.1;
            row_used[s] = true;
            row_of_col[a] = s;
            let piv = aug[s * width + a];
            for v in &mut aug[s * width..(s + 1) * width] {
                *v /= piv;
            }
            pivot_row.copy_from_slice(&aug[s * width..(s + 1) * width]);
            for r in 0..k {
                if r == s {
                    continue;
                }
                let f = aug[r * width + a];
                if f != 0.0 {
                    let row = &mut aug[r * width..(r + 1) * width];
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        if *pv != 0.0 {
                            *v -= f * pv;
                        }
                    }
                }
            }
        }

        if !dependent.is_empty() {
            let mut spare: Vec<usize> = (0..k).filter(|&s| !row_used[s]).map(|s| free_rows[s]).collect();
            for &a in &dependent {
                let p = structural_pos[a];
                let j = self.basis[p];
                let i = spare.pop().expect("rank deficiency leaves a spare row");
                self.place[j] = if self.d[j] >= 0.0 { Place::Lower } else { Place::Upper };
                self.basis[p] = n + i;
                self.place[n + i] = Place::Basic;
            }
            self.refactor();
            return;
        }

        // Row `row_of_col[a]` of the right half is row a of X.
        self.binv.iter_mut().for_each(|v| *v = 0.0);
        for (a, &p) in structural_pos.iter().enumerate() {
            let s = row_of_col[a];
            let src = &aug[s * width + k..(s + 1) * width];
            for (b, &v) in src.iter().enumerate() {
                self.binv[p * m + free_rows[b]] = v;
            }
        }
        // Logical positions: row i of B_ST times X, then the -1 on the diagonal.
        let mut pos_of_logical_row = vec![usize::MAX; m];
        for (p, &j) in self.basis.iter().enumerate() {
            if j >= n {
                pos_of_logical_row[j - n] = p;
                self.binv[p * m + (j - n)] = -1.0;
            }
        }
        for (a, &pa) in structural_pos.iter().enumerate() {
            let j = self.basis[pa];
            let s = row_of_col[a];
            for t in self.col_start[j]..self.col_start[j + 1] {
                let i = self.col_row[t];
                let p = pos_of_logical_row[i];
                if p == usize::MAX {
                    continue;
                }
                let coef = self.col_val[t];
                let src = &aug[s * width + k..(s + 1) * width];
                for (b, &v) in src.iter().enumerate() {
                    if v != 0.0 {
                        self.binv[p * m + free_rows[b]] += coef * v;
                    }
                }
            }
        }
        self.since_refactor = 0;
    }

    fn pivot(&mut self, r: usize, q: usize, w: &[f64]) {
        let m = self.m;
        let wr = w[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (row_r, after) = rest.split_at_mut(m);
        for v in row_r.iter_mut() {
            *v /= wr;
        }
        for (p, chunk) in before.chunks_exact_mut(m).enumerate() {
            let f = w[p];
            if f.abs() > DROP_TOL {
                for (v, rv) in chunk.iter_mut().zip(row_r.iter()) {
                    *v -= f * rv;
                }
            }
        }
        for (off, chunk) in after.chunks_exact_mut(m).enumerate() {
            let f = w[r + 1 + off];
            if f.abs() > DROP_TOL {
                for (v, rv) in chunk.iter_mut().zip(row_r.iter()) {
                    *v -= f * rv;
                }
            }
        }
        self.basis[r] = q;
        self.place[q] = Place::Basic;
        self.since_refactor += 1;
        self.iterations += 1;
    }

    fn max_iterations(&self) -> usize {
        self.opts
            .max_iterations
            .unwrap_or(50 * (self.m + self.n) + 5_000)
    }

    /// Unperturbed attempts give up early; degenerate problems usually
    /// finish quickly once costs are perturbed.
    fn first_pass_iterations(&self) -> usize {
        self.max_iterations().min(5 * (self.m + self.n) + 500)
    }

    fn out_of_budget(&self, cap: usize) -> bool {
        self.iterations >= cap
            || (self.iterations % 32 == 0 && self.deadline.is_some_and(|d| Instant::now() >= d))
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lower[j] {
            self.lower[j] - v
        } else if v > self.upper[j] {
            v - self.upper[j]
        } else {
            0.0
        }
    }

    fn primal_tol(&self) -> f64 {
        self.opts.feasibility_tol * 0.1
    }

    /// Runs dual simplex followed by primal cleanup; retries once with
    /// perturbed costs on stall.
    pub(crate) fn solve(&mut self) -> LpStatus {
        let status = self.solve_once(self.first_pass_iterations());
        if status != LpStatus::Stalled || self.deadline.is_some_and(|d| Instant::now() >= d) {
            return status;
        }
        // Perturbed retry: break ties with tiny deterministic cost shifts.
        for j in 0..self.n {
            let h = ((j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40) as f64 / (1u64 << 24) as f64;
            self.cost[j] = self.base_cost[j] + (1e-7 + 1e-7 * h) * (1.0 + self.base_cost[j].abs()) * self.cost_sign(j);
        }
        self.refresh();
        let first = self.solve_once(self.max_iterations());
        self.cost.clone_from(&self.base_cost);
        self.recompute_duals();
        if first != LpStatus::Optimal {
            return first;
        }
        self.solve_once(self.max_iterations())
    }

    fn cost_sign(&self, j: usize) -> f64 {
        match self.place[j] {
            Place::Upper => -1.0,
            _ => 1.0,
        }
    }

    /// Moves nonbasic columns to the bound matching their reduced-cost sign.
    fn fix_dual_signs(&mut self) {
        for j in 0..self.n + self.m {
            match self.place[j] {
                Place::Lower if self.d[j] < 0.0 && self.upper[j].is_finite() => self.place[j] = Place::Upper,
                Place::Upper if self.d[j] > 0.0 && self.lower[j].is_finite() => self.place[j] = Place::Lower,
                _ => {}
            }
        }
    }

    fn solve_once(&mut self, budget: usize) -> LpStatus {
        let cap = self.iterations + budget;
        loop {
            match self.dual_phase(cap) {
                LpStatus::Optimal => {}
                other => return other,
            }
            match self.primal_phase(cap) {
                Some(LpStatus::Optimal) => return LpStatus::Optimal,
                Some(other) => return other,
                // Primal pass left the point infeasible; go around again.
                None => continue,
            }
        }
    }

    fn refresh(&mut self) {
        self.refactor();
        self.recompute_duals();
        self.fix_dual_signs();
        self.recompute_primal();
    }

    fn dual_phase(&mut self, cap: usize) -> LpStatus {
        let m = self.m;
        let mut degenerate_run = 0usize;
        let mut fresh = false;
        let mut row_alpha: Vec<(usize, f64)> = Vec::new();
        loop {
            if self.out_of_budget(cap) {
                return LpStatus::Stalled;
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refresh();
            }
            let bland = degenerate_run > 2 * (m + 10);
            let tol = self.primal_tol();
            let mut r = usize::MAX;
            let mut worst = tol;
            for p in 0..m {
                let inf = self.infeasibility(self.basis[p]);
                if bland {
                    // Smallest variable index among the infeasible rows.
                    if inf > tol && (r == usize::MAX || self.basis[p] < self.basis[r]) {
                        r = p;
                    }
                } else if inf > worst {
                    worst = inf;
                    r = p;
                }
            }
            if r == usize::MAX {
                return LpStatus::Optimal;
            }
            let leaving = self.basis[r];
            let increase = self.x[leaving] < self.lower[leaving];
            let target = if increase { self.lower[leaving] } else { self.upper[leaving] };

            // Row r of B^{-1}[A | -I] over nonbasic columns.
            row_alpha.clear();
            {
                let rho = &self.binv[r * m..(r + 1) * m];
                for j in 0..self.n + m {
                    if self.place[j] == Place::Basic {
                        continue;
                    }
                    let a = self.dot_col(rho, j);
                    if a != 0.0 {
                        row_alpha.push((j, a));
                    }
                }
            }

            // Harris two-pass ratio test.
            let mut theta_max = f64::INFINITY;
            let eligible = |sx: &Simplex, j: usize, a: f64| -> bool {
                if a.abs() <= PIVOT_TOL || sx.lower[j] == sx.upper[j] {
                    return false;
                }
                match (increase, sx.place[j]) {
                    (true, Place::Lower) => a < 0.0,
                    (true, Place::Upper) => a > 0.0,
                    (false, Place::Lower) => a > 0.0,
                    (false, Place::Upper) => a < 0.0,
                    _ => false,
                }
            };
            let mut any = false;
            for &(j, a) in &row_alpha {
                if eligible(self, j, a) {
                    any = true;
                    let bound = (self.d[j].abs() + DUAL_TOL) / a.abs();
                    if bound < theta_max {
                        theta_max = bound;
                    }
                }
            }
            if !any {
                if !fresh {
                    self.refresh();
                    fresh = true;
                    continue;
                }
                return LpStatus::Infeasible;
            }
            let mut q = usize::MAX;
            let mut alpha_q = 0.0;
            let mut best_ratio = f64::INFINITY;
            for &(j, a) in &row_alpha {
                if !eligible(self, j, a) {
                    continue;
                }
                let ratio = self.d[j].abs() / a.abs();
                if bland {
                    if ratio < best_ratio {
                        best_ratio = ratio;
                        q = j;
                        alpha_q = a;
                    }
                } else if ratio <= theta_max && a.abs() > alpha_q.abs() {
                    q = j;
                    alpha_q = a;
                }
            }
            let w = self.ftran(q);
            if (w[r] - alpha_q).abs() > 1e-6 * (1.0 + alpha_q.abs()) && !fresh {
                self.refresh();
                fresh = true;
                continue;
            }
            fresh = false;
            // Sign-consistent dual step: reduced costs never cross zero.
            let mut theta_d = self.d[q] / alpha_q;
            if (increase && theta_d > 0.0) || (!increase && theta_d < 0.0) {
                theta_d = 0.0;
            }
            if theta_d.abs() < 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            if theta_d != 0.0 {
                for &(j, a) in &row_alpha {
                    self.d[j] -= theta_d * a;
                }
            }
            self.d[q] = 0.0;
            self.d[leaving] = -theta_d;

            let step = (self.x[leaving] - target) / w[r];
            self.x[q] += step;
            for p in 0..m {
                if w[p] != 0.0 {
                    let b = self.basis[p];
                    self.x[b] -= w[p] * step;
                }
            }
            self.x[leaving] = target;
            self.place[leaving] = if increase { Place::Lower } else { Place::Upper };
            self.pivot(r, q, &w);
        }
    }

    /// Primal simplex on a primal feasible basis until no dual infeasibility
    /// remains. Returns `None` if the point became primal infeasible.
    fn primal_phase(&mut self, cap: usize) -> Option<LpStatus> {
        let m = self.m;
        let mut degenerate_run = 0usize;
        loop {
            if self.out_of_budget(cap) {
                return Some(LpStatus::Stalled);
            }
            let bland = degenerate_run > 2 * (m + 10);
            let mut q = usize::MAX;
            let mut best = DUAL_TOL * 10.0;
            for j in 0..self.n + m {
                let viol = match self.place[j] {
                    Place::Basic => 0.0,
                    _ if self.lower[j] == self.upper[j] => 0.0,
                    Place::Lower => -self.d[j],
                    Place::Upper => self.d[j],
                };
                if viol > best {
                    best = viol;
                    q = j;
                    if bland {
                        break;
                    }
                }
            }
            if q == usize::MAX {
                let tol = self.primal_tol();
                if (0..m).any(|p| self.infeasibility(self.basis[p]) > tol) {
                    return None;
                }
                return Some(LpStatus::Optimal);
            }
            let dir = if self.place[q] == Place::Lower { 1.0 } else { -1.0 };
            let w = self.ftran(q);
            let mut t_best = self.upper[q] - self.lower[q];
            let mut r = usize::MAX;
            let mut r_to_lower = false;
            let mut best_piv = 0.0;
            for p in 0..m {
                let rate = -w[p] * dir;
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[p];
                let (lim, to_lower) = if rate < 0.0 {
                    ((self.x[b] - self.lower[b]).max(0.0) / -rate, true)
                } else {
                    ((self.upper[b] - self.x[b]).max(0.0) / rate, false)
                };
                if lim < t_best - 1e-12 || (lim <= t_best + 1e-12 && w[p].abs() > best_piv) {
                    t_best = lim;
                    r = p;
                    r_to_lower = to_lower;
                    best_piv = w[p].abs();
                }
            }
            if !t_best.is_finite() {
                return Some(LpStatus::Unbounded);
            }
            if t_best < 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            let step = t_best * dir;
            self.x[q] += step;
            for p in 0..m {
                if w[p] != 0.0 {
                    let b = self.basis[p];
                    self.x[b] -= w[p] * step;
                }
            }
            if r == usize::MAX {
                // Bound flip.
                self.place[q] = if dir > 0.0 { Place::Upper } else { Place::Lower };
                self.x[q] = self.nonbasic_value(q);
                self.iterations += 1;
                continue;
            }
            let leaving = self.basis[r];
            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let theta_d = self.d[q] / w[r];
            for j in 0..self.n + m {
                if self.place[j] == Place::Basic {
                    continue;
                }
                let a = self.dot_col(&rho, j);
                if a != 0.0 {
                    self.d[j] -= theta_d * a;
                }
            }
            self.d[q] = 0.0;
            self.d[leaving] = -theta_d;
            self.x[leaving] = if r_to_lower { self.lower[leaving] } else { self.upper[leaving] };
            self.place[leaving] = if r_to_lower { Place::Lower } else { Place::Upper };
            self.pivot(r, q, &w);
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor();
                self.recompute_duals();
                self.recompute_primal();
            }
        }
    }

    pub(crate) fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
        match self.place[j] {
            Place::Basic => {}
            _ => {
                self.place[j] = if self.d[j] >= 0.0 { Place::Lower } else { Place::Upper };
            }
        }
    }

    pub(crate) fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    /// Re-derives primal values after a batch of [`Simplex::set_bounds`] calls.
    pub(crate) fn bounds_changed(&mut self) {
        self.recompute_primal();
    }

    pub(crate) fn snapshot(&self) -> Snapshot {
        Snapshot {
            basis: self.basis.clone(),
            place: self.place.clone(),
        }
    }

    pub(crate) fn restore(&mut self, snap: &Snapshot) {
        self.basis.clone_from(&snap.basis);
        self.place.clone_from(&snap.place);
        self.refactor();
        self.recompute_duals();
        self.fix_dual_signs();
        self.recompute_primal();
    }

    pub(crate) fn structural_values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub(crate) fn objective(&self, model: &Model) -> f64 {
        model.objective_value(&self.x[..self.n])
    }

    pub(crate) fn solution(&self, model: &Model, status: LpStatus) -> LpSolution {
        let m = self.m;
        let mut y = vec![0.0; m];
        for p in 0..m {
            let cb = self.base_cost[self.basis[p]];
            if cb != 0.0 {
                for (yi, b) in y.iter_mut().zip(&self.binv[p * m..(p + 1) * m]) {
                    *yi += cb * b;
                }
            }
        }
        let row_duals: Vec<f64> = y.iter().map(|v| -v).collect();
        let reduced_costs: Vec<f64> = (0..self.n)
            .map(|j| -(self.base_cost[j] - self.dot_col(&y, j)))
            .collect();
        let values = self.x[..self.n].to_vec();
        let objective = match status {
            LpStatus::Optimal => model.objective_value(&values),
            LpStatus::Infeasible => f64::NEG_INFINITY,
            LpStatus::Unbounded => f64::INFINITY,
            LpStatus::Stalled => f64::NAN,
        };
        LpSolution {
            status,
            objective,
            values,
            row_duals,
            reduced_costs,
            iterations: self.iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Col;

    fn solve(m: &Model) -> LpSolution {
        lp_solve(m).unwrap()
    }

    #[test]
    fn single_upper_row() {
        let mut m = Model::new();
        let x = m.add_continuous("x", 0.0, 10.0, 1.0);
        m.add_row("c", [(x, 1.0)], Comparator::Le, 3.0);
        let s = solve(&m);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-12);
        assert!((s.row_duals[0] - 1.0).abs() < 1e-12);
        assert!(s.reduced_costs[0].abs() < 1e-12);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut m = Model::new();
        let x = m.add_continuous("x", 0.0, 10.0, 1.0);
        m.add_row("lo", [(x, 1.0)], Comparator::Ge, 2.0);
        m.add_row("hi", [(x, 1.0)], Comparator::Le, 1.0);
        assert_eq!(solve(&m).status, LpStatus::Infeasible);
    }

    #[test]
    fn two_variable_textbook() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut m = Model::new();
        let x = m.add_continuous("x", 0.0, 100.0, 3.0);
        let y = m.add_continuous("y", 0.0, 100.0, 5.0);
        m.add_row("a", [(x, 1.0)], Comparator::Le, 4.0);
        m.add_row("b", [(y, 2.0)], Comparator::Le, 12.0);
        m.add_row("c", [(x, 3.0), (y, 2.0)], Comparator::Le, 18.0);
        let s = solve(&m);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 36.0).abs() < 1e-9);
        assert!((s.values[0] - 2.0).abs() < 1e-9);
        assert!((s.values[1] - 6.0).abs() < 1e-9);
        // Shadow prices 0, 1.5, 1.
        assert!(s.row_duals[0].abs() < 1e-9);
        assert!((s.row_duals[1] - 1.5).abs() < 1e-9);
        assert!((s.row_duals[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows_with_negative_bounds() {
        // max -x - y, x + y = 1, x - y >= -3, x in [-5, 5], y in [-5, 5]
        let mut m = Model::new();
        let x = m.add_continuous("x", -5.0, 5.0, -1.0);
        let y = m.add_continuous("y", -5.0, 5.0, -2.0);
        m.add_row("eq", [(x, 1.0), (y, 1.0)], Comparator::Eq, 1.0);
        m.add_row("ge", [(x, 1.0), (y, -1.0)], Comparator::Ge, -3.0);
        let s = solve(&m);
        assert_eq!(s.status, LpStatus::Optimal);
        // y as small as possible: x = 5, y = -4.
        assert!((s.values[0] - 5.0).abs() < 1e-9);
        assert!((s.values[1] + 4.0).abs() < 1e-9);
        assert!((s.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn binaries_are_relaxed() {
        let mut m = Model::new();
        let a = m.add_binary("a", 1.0);
        let b = m.add_binary("b", 1.0);
        m.add_row("c", [(a, 1.0), (b, 1.0)], Comparator::Eq, 1.5);
        let s = solve(&m);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.5).abs() < 1e-12);
    }

    #[test]
    fn duplicate_rows_survive_refactor() {
        // Degenerate: the same row three times, forced through refactors.
        let mut m = Model::new();
        let cols: Vec<Col> = (0..6).map(|j| m.add_continuous(format!("x{j}"), 0.0, 1.0, 1.0 + j as f64)).collect();
        for k in 0..3 {
            m.add_row(format!("sum{k}"), cols.iter().map(|&c| (c, 1.0)), Comparator::Le, 2.5);
        }
        let mut sx = Simplex::new(&m, LpOptions::default());
        assert_eq!(sx.solve(), LpStatus::Optimal);
        sx.refresh();
        assert_eq!(sx.solve(), LpStatus::Optimal);
        assert!((sx.objective(&m) - (6.0 + 5.0 + 0.5 * 4.0)).abs() < 1e-9);
    }

    #[test]
    fn snapshot_restore_resolves_after_bound_change() {
        let mut m = Model::new();
        let x = m.add_continuous("x", 0.0, 4.0, 2.0);
        let y = m.add_continuous("y", 0.0, 4.0, 1.0);
        m.add_row("c", [(x, 1.0), (y, 1.0)], Comparator::Le, 5.0);
        let mut sx = Simplex::new(&m, LpOptions::default());
        assert_eq!(sx.solve(), LpStatus::Optimal);
        let snap = sx.snapshot();
        sx.set_bounds(0, 0.0, 1.0);
        sx.bounds_changed();
        assert_eq!(sx.solve(), LpStatus::Optimal);
        assert!((sx.objective(&m) - 6.0).abs() < 1e-12);
        sx.set_bounds(0, 0.0, 4.0);
        sx.restore(&snap);
        assert_eq!(sx.solve(), LpStatus::Optimal);
        assert!((sx.objective(&m) - 9.0).abs() < 1e-12);
    }
}
