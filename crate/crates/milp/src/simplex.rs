//! Bounded-variable primal revised simplex.
//!
//! Every row `i` gets a logical variable `s_i = a_i x` carrying the row's
//! bounds, so the working form is `[A  -I] (x, s) = 0` with `lo <= (x, s) <= hi`.
//! Rows are scaled to unit max-norm and the objective to unit max-norm before
//! solving; reported primal values, duals and reduced costs are unscaled.
//! A warm start first runs the dual simplex, since a basis that was optimal
//! before a bound change or an appended row is still dual feasible. The
//! primal simplex then confirms optimality, and takes over from scratch when
//! the dual cannot start. Its phase 1 minimizes the sum of basic bound
//! violations from whatever basis it is handed.

use std::time::Instant;

use log::trace;

use crate::factor::Factor;
use crate::problem::{LinearProgram, Sense};
use crate::report::{SolveReport, Status};
use crate::tolerances::Tolerances;
use crate::Result;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Free,
}

/// Simplex basis over structurals followed by row logicals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    n: usize,
    status: Vec<VarStatus>,
}

impl Basis {
    /// All-logical starting basis.
    pub fn slack(n: usize, m: usize) -> Self {
        let mut status = vec![VarStatus::AtLower; n];
        status.extend(std::iter::repeat_n(VarStatus::Basic, m));
        Self { n, status }
    }

    pub fn num_structural(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.status.len() - self.n
    }

    pub fn status(&self) -> &[VarStatus] {
        &self.status
    }

    /// Adapt to a problem with the same columns and possibly appended rows.
    fn fitted(&self, n: usize, m: usize) -> Option<Basis> {
        if self.n != n || self.num_rows() > m {
            return None;
        }
        let mut status = self.status.clone();
        status.extend(std::iter::repeat_n(VarStatus::Basic, m - self.num_rows()));
        if status.iter().filter(|s| **s == VarStatus::Basic).count() != m {
            return None;
        }
        Some(Basis { n, status })
    }
}

#[derive(Debug, Clone)]
pub struct LpOptions {
    pub tolerances: Tolerances,
    pub max_iterations: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Eta count that triggers a fresh factorization.
    pub refactor_every: usize,
    pub deadline: Option<Instant>,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            max_iterations: 1_000_000,
            bland_after: 10_000,
            refactor_every: 100,
            deadline: None,
        }
    }
}

/// Row-scaled working copy of a [`LinearProgram`].
#[derive(Debug, Clone)]
pub(crate) struct Model {
    pub n: usize,
    pub m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    row_lo: Vec<f64>,
    row_hi: Vec<f64>,
    row_scale: Vec<f64>,
    obj_scale: f64,
    raw_cost: Vec<f64>,
    offset: f64,
}

impl Model {
    pub fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut cols = vec![Vec::new(); n];
        let mut rows = Vec::with_capacity(m);
        let mut row_lo = Vec::with_capacity(m);
        let mut row_hi = Vec::with_capacity(m);
        let mut row_scale = Vec::with_capacity(m);
        for (i, c) in lp.constraints.iter().enumerate() {
            let big = c.coeffs.iter().map(|&(_, a)| a.abs()).fold(0.0, f64::max);
            let s = if big > 0.0 { 1.0 / big } else { 1.0 };
            let mut row = Vec::with_capacity(c.coeffs.len());
            for &(j, a) in &c.coeffs {
                if a != 0.0 {
                    cols[j].push((i, a * s));
                    row.push((j, a * s));
                }
            }
            rows.push(row);
            let (lo, hi) = match c.sense {
                Sense::Le => (f64::NEG_INFINITY, c.rhs * s),
                Sense::Ge => (c.rhs * s, f64::INFINITY),
                Sense::Eq => (c.rhs * s, c.rhs * s),
            };
            row_lo.push(lo);
            row_hi.push(hi);
            row_scale.push(s);
        }
        let raw_cost: Vec<f64> = lp.variables.iter().map(|v| v.objective).collect();
        let big = raw_cost.iter().map(|c| c.abs()).fold(0.0, f64::max);
        let obj_scale = if big > 0.0 { 1.0 / big } else { 1.0 };
        Self {
            n,
            m,
            cols,
            rows,
            cost: raw_cost.iter().map(|c| c * obj_scale).collect(),
            row_lo,
            row_hi,
            row_scale,
            obj_scale,
            raw_cost,
            offset: lp.objective_offset,
        }
    }
}

pub(crate) struct LpOutcome {
    pub report: SolveReport,
    pub basis: Basis,
}

/// Solve an LP from the all-logical basis; binaries are relaxed to `[0, 1]`.
pub fn solve_lp(lp: &LinearProgram, opts: &LpOptions) -> Result<SolveReport> {
    solve_lp_warm(lp, None, opts).map(|(r, _)| r)
}

/// Solve an LP, optionally starting from a previous basis. The basis may come
/// from a problem with fewer rows (appended cuts start with basic logicals).
pub fn solve_lp_warm(
    lp: &LinearProgram,
    warm: Option<&Basis>,
    opts: &LpOptions,
) -> Result<(SolveReport, Basis)> {
    lp.validate()?;
    let model = Model::new(lp);
    let lower: Vec<f64> = lp.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = lp.variables.iter().map(|v| v.upper).collect();
    let out = solve_model(&model, &lower, &upper, warm, opts);
    Ok((out.report, out.basis))
}

pub(crate) fn solve_model(
    model: &Model,
    lower: &[f64],
    upper: &[f64],
    warm: Option<&Basis>,
    opts: &LpOptions,
) -> LpOutcome {
    let mut s = Solver::new(model, lower, upper, warm, opts);
    if let DualEnd::Done(status) = s.run_dual() {
        return s.finish(status);
    }
    let status = s.run();
    s.finish(status)
}

struct Solver<'a> {
    model: &'a Model,
    opts: &'a LpOptions,
    tol: Tolerances,
    n: usize,
    m: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    status: Vec<VarStatus>,
    heading: Vec<usize>,
    pos: Vec<usize>,
    factor: Factor,
    iterations: usize,
    degenerate_run: usize,
    /// Phase-2 reduced costs, maintained across pivots while `d_valid`.
    d: Vec<f64>,
    d_valid: bool,
    /// Pivot row `e_p' B^-1 [A -I]`, nonzero only on `touched`.
    alpha: Vec<f64>,
    touched: Vec<usize>,
    mark: Vec<bool>,
    /// Devex reference weights for phase-2 pricing.
    devex: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(
        model: &'a Model,
        lower: &[f64],
        upper: &[f64],
        warm: Option<&Basis>,
        opts: &'a LpOptions,
    ) -> Self {
        let (n, m) = (model.n, model.m);
        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        lo.extend_from_slice(&model.row_lo);
        hi.extend_from_slice(&model.row_hi);
        let status = warm
            .and_then(|b| b.fitted(n, m))
            .unwrap_or_else(|| Basis::slack(n, m))
            .status;
        let mut s = Self {
            model,
            opts,
            tol: opts.tolerances,
            n,
            m,
            lo,
            hi,
            x: vec![0.0; n + m],
            status,
            heading: Vec::new(),
            pos: vec![NONE; n + m],
            factor: Factor::identity(m),
            iterations: 0,
            degenerate_run: 0,
            d: vec![0.0; n + m],
            d_valid: false,
            alpha: vec![0.0; n + m],
            touched: Vec::new(),
            mark: vec![false; n + m],
            devex: vec![1.0; n + m],
        };
        for j in 0..n + m {
            if s.status[j] != VarStatus::Basic {
                s.place_nonbasic(j, s.status[j]);
            }
        }
        s.heading = (0..n + m).filter(|&j| s.status[j] == VarStatus::Basic).collect();
        s.reinvert();
        s
    }

    /// Put nonbasic `j` on a bound consistent with `preferred` and its bounds.
    fn place_nonbasic(&mut self, j: usize, preferred: VarStatus) {
        let (lo, hi) = (self.lo[j], self.hi[j]);
        let st = match preferred {
            VarStatus::AtUpper if hi.is_finite() => VarStatus::AtUpper,
            _ if lo.is_finite() => VarStatus::AtLower,
            _ if hi.is_finite() => VarStatus::AtUpper,
            _ => VarStatus::Free,
        };
        self.status[j] = st;
        self.x[j] = match st {
            VarStatus::AtLower => lo,
            VarStatus::AtUpper => hi,
            _ => 0.0,
        };
    }

    fn cost(&self, j: usize) -> f64 {
        if j < self.n {
            self.model.cost[j]
        } else {
            0.0
        }
    }

    fn load_column(&self, j: usize, w: &mut [f64]) {
        w.iter_mut().for_each(|v| *v = 0.0);
        if j < self.n {
            for &(i, a) in &self.model.cols[j] {
                w[i] = a;
            }
        } else {
            w[j - self.n] = -1.0;
        }
    }

    fn reinvert(&mut self) {
        let model = self.model;
        let (factor, heading, dropped) = Factor::reinvert(
            self.m,
            self.n,
            &self.heading,
            |j| model.cols[j].as_slice(),
            self.tol.pivot,
        );
        for d in dropped {
            let prefer = if self.hi[d.var].is_finite()
                && (self.x[d.var] - self.hi[d.var]).abs() < (self.x[d.var] - self.lo[d.var]).abs()
            {
                VarStatus::AtUpper
            } else {
                VarStatus::AtLower
            };
            self.place_nonbasic(d.var, prefer);
        }
        self.pos.iter_mut().for_each(|p| *p = NONE);
        for (p, &j) in heading.iter().enumerate() {
            self.status[j] = VarStatus::Basic;
            self.pos[j] = p;
        }
        self.heading = heading;
        self.factor = factor;
        self.d_valid = false;
        self.compute_primal();
    }

    /// Recompute all phase-2 reduced costs from fresh duals.
    fn refresh_d(&mut self) {
        let mut y = vec![0.0; self.m];
        self.duals(&mut y);
        for j in 0..self.n + self.m {
            self.d[j] = if self.status[j] == VarStatus::Basic { 0.0 } else { self.reduced_cost(j, &y) };
        }
        self.d_valid = true;
    }

    /// Fill `alpha` with row `p` of `B^-1 [A -I]`, accumulated row-wise so
    /// that only rows where `e_p' B^-1` is nonzero are visited.
    fn pivot_row(&mut self, p: usize, rho: &mut [f64]) {
        for &j in &self.touched {
            self.alpha[j] = 0.0;
            self.mark[j] = false;
        }
        self.touched.clear();
        rho.iter_mut().for_each(|v| *v = 0.0);
        rho[p] = 1.0;
        self.factor.btran(rho);
        let n = self.n;
        for (i, &r) in rho.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            for &(j, a) in self.model.rows[i].iter().chain(std::iter::once(&(n + i, -1.0))) {
                if !self.mark[j] {
                    self.mark[j] = true;
                    self.touched.push(j);
                }
                self.alpha[j] += a * r;
            }
        }
    }

    fn update_devex(&mut self, q: usize, leaving: usize) {
        let aq = self.alpha[q];
        let wq = self.devex[q];
        for &j in &self.touched {
            if j != q && self.status[j] != VarStatus::Basic {
                let r = self.alpha[j] / aq;
                self.devex[j] = self.devex[j].max(r * r * wq);
            }
        }
        self.devex[leaving] = (wq / (aq * aq)).max(1.0);
    }

    /// Reduced-cost update after `q` enters at the position whose pivot row
    /// is in `alpha` and `leaving` exits.
    fn update_d(&mut self, q: usize, leaving: usize) {
        let theta = self.d[q] / self.alpha[q];
        for &j in &self.touched {
            self.d[j] -= theta * self.alpha[j];
        }
        self.d[q] = 0.0;
        self.d[leaving] = -theta;
    }

    fn compute_primal(&mut self) {
        let mut r = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if self.status[j] == VarStatus::Basic || self.x[j] == 0.0 {
                continue;
            }
            if j < self.n {
                for &(i, a) in &self.model.cols[j] {
                    r[i] -= a * self.x[j];
                }
            } else {
                r[j - self.n] += self.x[j];
            }
        }
        self.factor.ftran(&mut r);
        for (p, &j) in self.heading.iter().enumerate() {
            self.x[j] = r[p];
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let t = self.tol.feasibility;
        if self.x[j] < self.lo[j] - t {
            self.lo[j] - self.x[j]
        } else if self.x[j] > self.hi[j] + t {
            self.x[j] - self.hi[j]
        } else {
            0.0
        }
    }

    fn run(&mut self) -> Status {
        let mut w = vec![0.0; self.m];
        let mut y = vec![0.0; self.m];
        let mut rho = vec![0.0; self.m];
        let mut fresh = true;
        let mut stalls = 0usize;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Status::IterationLimit;
            }
            if self.iterations.is_multiple_of(64) {
                if let Some(deadline) = self.opts.deadline {
                    if Instant::now() >= deadline {
                        return Status::TimeLimit;
                    }
                }
            }
            if self.factor.len() >= self.opts.refactor_every {
                self.reinvert();
                fresh = true;
            }

            let phase1 = self.heading.iter().any(|&b| self.infeasibility(b) > 0.0);
            if phase1 {
                let t = self.tol.feasibility;
                for (p, &b) in self.heading.iter().enumerate() {
                    y[p] = if self.x[b] < self.lo[b] - t {
                        -1.0
                    } else if self.x[b] > self.hi[b] + t {
                        1.0
                    } else {
                        0.0
                    };
                }
                self.factor.btran(&mut y);
                self.d_valid = false;
            } else if !self.d_valid {
                self.refresh_d();
            }

            let bland = self.degenerate_run >= self.opts.bland_after;
            let Some((q, dir)) = self.price(phase1.then_some(y.as_slice()), bland) else {
                if !fresh {
                    self.reinvert();
                    fresh = true;
                    continue;
                }
                return if phase1 {
                    Status::Infeasible
                } else {
                    Status::Optimal
                };
            };

            self.load_column(q, &mut w);
            self.factor.ftran(&mut w);
            match self.ratio_test(q, dir, &w, phase1, bland) {
                Step::Unbounded => {
                    if phase1 || !fresh {
                        // Numerical trouble: refactor and retry a few times.
                        stalls += 1;
                        if stalls > 5 {
                            return if phase1 {
                                Status::Infeasible
                            } else {
                                Status::Unbounded
                            };
                        }
                        self.reinvert();
                        fresh = true;
                        continue;
                    }
                    return Status::Unbounded;
                }
                Step::Flip(theta) => {
                    self.shift(q, dir, theta, &w);
                    self.status[q] = if dir > 0.0 {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                    self.degenerate_run = 0;
                }
                Step::Pivot { pos, theta, to_upper } => {
                    let leaving = self.heading[pos];
                    if !phase1 {
                        self.pivot_row(pos, &mut rho);
                        if (self.alpha[q] - w[pos]).abs() > 1e-6 * (1.0 + w[pos].abs()) {
                            self.d_valid = false;
                        } else {
                            self.update_devex(q, leaving);
                            self.update_d(q, leaving);
                        }
                    }
                    self.shift(q, dir, theta, &w);
                    let (st, val) = if to_upper {
                        (VarStatus::AtUpper, self.hi[leaving])
                    } else {
                        (VarStatus::AtLower, self.lo[leaving])
                    };
                    self.x[leaving] = val;
                    self.status[leaving] = st;
                    self.pos[leaving] = NONE;
                    self.factor.push(pos, &w);
                    self.heading[pos] = q;
                    self.pos[q] = pos;
                    self.status[q] = VarStatus::Basic;
                    fresh = false;
                    if theta < 1e-12 {
                        self.degenerate_run += 1;
                    } else {
                        self.degenerate_run = 0;
                    }
                }
            }
            self.iterations += 1;
            if self.iterations.is_multiple_of(1000) {
                trace!(
                    "simplex iter {} phase {} etas {} nnz {}",
                    self.iterations,
                    if phase1 { 1 } else { 2 },
                    self.factor.len(),
                    self.factor.nnz()
                );
            }
        }
    }

    /// Reduced cost of nonbasic `j` for duals `y` (indexed by row).
    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.model.cost[j] - self.model.cols[j].iter().map(|&(i, a)| a * y[i]).sum::<f64>()
        } else {
            y[j - self.n]
        }
    }

    fn duals(&self, y: &mut [f64]) {
        for (p, &b) in self.heading.iter().enumerate() {
            y[p] = self.cost(b);
        }
        self.factor.btran(y);
    }

    /// Bounded dual simplex without bound flipping. Boxed nonbasics are put
    /// on the bound matching their reduced cost; any other dual infeasibility
    /// hands control back to the primal method.
    fn run_dual(&mut self) -> DualEnd {
        let tol_d = self.tol.optimality;
        let feas = self.tol.feasibility;
        let mut y = vec![0.0; self.m];
        self.duals(&mut y);
        for j in 0..self.n + self.m {
            let st = self.status[j];
            if st == VarStatus::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced_cost(j, &y);
            if self.lo[j].is_finite() && self.hi[j].is_finite() {
                let want = if d < 0.0 { VarStatus::AtUpper } else { VarStatus::AtLower };
                self.place_nonbasic(j, want);
                continue;
            }
            let ok = match st {
                VarStatus::AtLower => d >= -tol_d,
                VarStatus::AtUpper => d <= tol_d,
                _ => d.abs() <= tol_d,
            };
            if !ok {
                return DualEnd::Fallback;
            }
        }
        self.compute_primal();
        self.refresh_d();

        let mut rho = vec![0.0; self.m];
        let mut w = vec![0.0; self.m];
        loop {
            if self.iterations >= self.opts.max_iterations {
                return DualEnd::Done(Status::IterationLimit);
            }
            if self.iterations.is_multiple_of(64) {
                if let Some(deadline) = self.opts.deadline {
                    if Instant::now() >= deadline {
                        return DualEnd::Done(Status::TimeLimit);
                    }
                }
            }
            if self.factor.len() >= self.opts.refactor_every {
                let mut before = vec![false; self.n + self.m];
                self.heading.iter().for_each(|&j| before[j] = true);
                self.reinvert();
                if self.heading.iter().any(|&j| !before[j]) {
                    return DualEnd::Fallback;
                }
                self.refresh_d();
            }

            // Leaving row: largest bound violation.
            let mut leave: Option<(usize, f64, f64)> = None;
            for (p, &b) in self.heading.iter().enumerate() {
                let (xb, lo, hi) = (self.x[b], self.lo[b], self.hi[b]);
                let (viol, bound) = if xb < lo - feas {
                    (lo - xb, lo)
                } else if xb > hi + feas {
                    (xb - hi, hi)
                } else {
                    continue;
                };
                if leave.is_none_or(|(_, v, _)| viol > v) {
                    leave = Some((p, viol, bound));
                }
            }
            let Some((p, _, bound)) = leave else {
                return DualEnd::Feasible;
            };
            let b = self.heading[p];
            let delta = self.x[b] - bound;

            self.pivot_row(p, &mut rho);

            // Dual ratio test.
            let mut best: Option<(usize, f64, f64)> = None;
            for &j in &self.touched {
                let st = self.status[j];
                if st == VarStatus::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let alpha = self.alpha[j];
                if alpha.abs() < self.tol.pivot {
                    continue;
                }
                // x_b moves by -t * alpha when x_j moves by t; it must move toward `bound`.
                let dir = match st {
                    VarStatus::AtLower => 1.0,
                    VarStatus::AtUpper => -1.0,
                    _ => (delta * alpha).signum(),
                };
                if dir * alpha * delta <= 0.0 {
                    continue;
                }
                let ratio = (dir * self.d[j]).max(0.0) / alpha.abs();
                let take = match best {
                    None => true,
                    Some((_, r, a)) => ratio < r - 1e-12 || (ratio <= r + 1e-12 && alpha.abs() > a),
                };
                if take {
                    best = Some((j, ratio, alpha.abs()));
                }
            }
            let Some((q, _, _)) = best else {
                return if delta.abs() > 10.0 * feas {
                    DualEnd::Done(Status::Infeasible)
                } else {
                    DualEnd::Fallback
                };
            };

            self.load_column(q, &mut w);
            self.factor.ftran(&mut w);
            if w[p].abs() < self.tol.pivot {
                return DualEnd::Fallback;
            }
            self.update_d(q, b);
            let t = delta / w[p];
            self.shift(q, 1.0, t, &w);
            self.x[b] = bound;
            self.status[b] = if bound == self.hi[b] { VarStatus::AtUpper } else { VarStatus::AtLower };
            self.pos[b] = NONE;
            self.factor.push(p, &w);
            self.heading[p] = q;
            self.pos[q] = p;
            self.status[q] = VarStatus::Basic;
            self.iterations += 1;
        }
    }

    fn shift(&mut self, q: usize, dir: f64, theta: f64, w: &[f64]) {
        if theta == 0.0 {
            return;
        }
        self.x[q] += dir * theta;
        for (p, &b) in self.heading.iter().enumerate() {
            if w[p] != 0.0 {
                self.x[b] -= dir * theta * w[p];
            }
        }
    }

    /// Choose an entering variable and its direction (+1 increase, -1 decrease).
    /// Phase 1 passes the duals of the infeasibility objective; phase 2 uses
    /// the maintained reduced costs.
    fn price(&self, phase1_duals: Option<&[f64]>, bland: bool) -> Option<(usize, f64)> {
        let tol = self.tol.optimality;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.n + self.m {
            let st = self.status[j];
            if st == VarStatus::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = match phase1_duals {
                Some(y) if j < self.n => -self.model.cols[j].iter().map(|&(i, a)| a * y[i]).sum::<f64>(),
                Some(y) => y[j - self.n],
                None => self.d[j],
            };
            let dir = match st {
                VarStatus::AtLower if d < -tol => 1.0,
                VarStatus::AtUpper if d > tol => -1.0,
                VarStatus::Free if d.abs() > tol => -d.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            let score = if phase1_duals.is_some() { d.abs() } else { d * d / self.devex[j] };
            if best.is_none_or(|(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn ratio_test(&self, q: usize, dir: f64, w: &[f64], phase1: bool, bland: bool) -> Step {
        let feas = self.tol.feasibility;
        let mut theta = f64::INFINITY;
        let mut choice: Option<(usize, bool, f64)> = None;
        for (p, &b) in self.heading.iter().enumerate() {
            let wp = w[p];
            if wp.abs() < self.tol.pivot {
                continue;
            }
            let rate = -dir * wp;
            let (xb, lo, hi) = (self.x[b], self.lo[b], self.hi[b]);
            let (limit, to_upper) = if phase1 && xb < lo - feas {
                if rate > 0.0 {
                    ((lo - xb) / rate, false)
                } else {
                    continue;
                }
            } else if phase1 && xb > hi + feas {
                if rate < 0.0 {
                    ((xb - hi) / -rate, true)
                } else {
                    continue;
                }
            } else if rate < 0.0 {
                if lo.is_finite() {
                    ((xb - lo) / -rate, false)
                } else {
                    continue;
                }
            } else if hi.is_finite() {
                ((hi - xb) / rate, true)
            } else {
                continue;
            };
            let limit = limit.max(0.0);
            let take = match choice {
                None => true,
                Some((cp, _, cw)) => {
                    if limit < theta - 1e-12 {
                        true
                    } else if limit <= theta + 1e-12 {
                        if bland {
                            b < self.heading[cp]
                        } else {
                            wp.abs() > cw
                        }
                    } else {
                        false
                    }
                }
            };
            if take {
                theta = theta.min(limit);
                choice = Some((p, to_upper, wp.abs()));
            }
        }
        let flip = self.hi[q] - self.lo[q];
        if flip.is_finite() && flip <= theta {
            return Step::Flip(flip);
        }
        match choice {
            None => Step::Unbounded,
            Some((pos, to_upper, _)) => Step::Pivot {
                pos,
                theta,
                to_upper,
            },
        }
    }

    fn finish(self, status: Status) -> LpOutcome {
        let model = self.model;
        let basis = Basis {
            n: self.n,
            status: self.status.clone(),
        };
        let mut report = SolveReport::empty(status);
        report.iterations = self.iterations;
        if status == Status::Optimal {
            let mut y = vec![0.0; self.m];
            for (p, &b) in self.heading.iter().enumerate() {
                y[p] = self.cost(b);
            }
            self.factor.btran(&mut y);
            let x: Vec<f64> = self.x[..self.n].to_vec();
            let reduced: Vec<f64> = (0..self.n)
                .map(|j| {
                    let d = model.cost[j]
                        - model.cols[j].iter().map(|&(i, a)| a * y[i]).sum::<f64>();
                    d / model.obj_scale
                })
                .collect();
            let duals: Vec<f64> = y
                .iter()
                .zip(&model.row_scale)
                .map(|(yi, s)| yi * s / model.obj_scale)
                .collect();
            let objective = model.offset
                + model
                    .raw_cost
                    .iter()
                    .zip(&x)
                    .map(|(c, v)| c * v)
                    .sum::<f64>();
            report.x = x;
            report.objective = objective;
            report.best_bound = objective;
            report.gap = 0.0;
            report.duals = Some(duals);
            report.reduced_costs = Some(reduced);
        }
        LpOutcome { report, basis }
    }
}

enum DualEnd {
    /// Final status (infeasible or a limit).
    Done(Status),
    /// Primal feasible; the primal simplex finishes the job.
    Feasible,
    /// Dual simplex not applicable or numerically stuck.
    Fallback,
}

enum Step {
    Unbounded,
    Flip(f64),
    Pivot { pos: usize, theta: f64, to_upper: bool },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::VarKind;

    fn lp_min_neg_x() -> LinearProgram {
        let mut lp = LinearProgram::new("toy");
        let x = lp.add_variable("x", VarKind::Continuous, 0.0, f64::INFINITY, -1.0);
        lp.add_constraint("cap", "", vec![(x, 1.0)], Sense::Le, 3.0);
        lp
    }

    #[test]
    fn toy_max_via_min() {
        let r = solve_lp(&lp_min_neg_x(), &LpOptions::default()).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.x[0] - 3.0).abs() < 1e-12);
        assert!((r.objective + 3.0).abs() < 1e-12);
        // Binding <= row in a min problem has a nonpositive dual.
        assert!((r.duals.unwrap()[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new("inf");
        let x = lp.add_variable("x", VarKind::Continuous, 0.0, 1.0, 1.0);
        lp.add_constraint("c", "", vec![(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&lp, &LpOptions::default()).unwrap().status, Status::Infeasible);

        let mut lp = LinearProgram::new("unb");
        let x = lp.add_variable("x", VarKind::Continuous, 0.0, f64::INFINITY, -1.0);
        let y = lp.add_variable("y", VarKind::Continuous, 0.0, f64::INFINITY, 0.0);
        lp.add_constraint("c", "", vec![(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        assert_eq!(solve_lp(&lp, &LpOptions::default()).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min x + y  s.t. x - y = 1, x + y >= 3, x, y free
        let mut lp = LinearProgram::new("free");
        let x = lp.add_variable("x", VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let y = lp.add_variable("y", VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY, 1.0);
        lp.add_constraint("e", "", vec![(x, 1.0), (y, -1.0)], Sense::Eq, 1.0);
        lp.add_constraint("g", "", vec![(x, 1.0), (y, 1.0)], Sense::Ge, 3.0);
        let r = solve_lp(&lp, &LpOptions::default()).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.x[0] - 2.0).abs() < 1e-9 && (r.x[1] - 1.0).abs() < 1e-9);
        assert!((r.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn warm_start_with_appended_row() {
        let mut lp = lp_min_neg_x();
        let (r, basis) = solve_lp_warm(&lp, None, &LpOptions::default()).unwrap();
        assert!((r.objective + 3.0).abs() < 1e-12);
        lp.add_constraint("cut", "", vec![(0, 2.0)], Sense::Le, 4.0);
        let (r2, _) = solve_lp_warm(&lp, Some(&basis), &LpOptions::default()).unwrap();
        assert_eq!(r2.status, Status::Optimal);
        assert!((r2.x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bound_flip_only_problem() {
        // min -x - y with box bounds only: pure bound flips.
        let mut lp = LinearProgram::new("box");
        lp.add_variable("x", VarKind::Continuous, 0.0, 2.0, -1.0);
        lp.add_variable("y", VarKind::Continuous, -1.0, 5.0, -1.0);
        let r = solve_lp(&lp, &LpOptions::default()).unwrap();
        assert_eq!(r.x, vec![2.0, 5.0]);
    }
}
