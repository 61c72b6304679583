//! Best-first branch-and-bound over binary variables.
//!
//! Open nodes are ordered by `(parent LP bound, creation index)`; the node
//! LP is warm-started from its parent's final basis. Branching picks the
//! most fractional binary, lowest index on ties. A diving heuristic runs at
//! the root and then every few nodes to supply incumbents early. The search
//! is sequential, so incumbent, bound and trace are reproducible for
//! identical input.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::rc::Rc;
use std::time::{Duration, Instant};

use log::debug;

use crate::problem::LinearProgram;
use crate::report::{SolveReport, Status};
use crate::simplex::{solve_model, Basis, LpOptions, Model};
use crate::{MilpError, Result};

#[derive(Debug, Clone)]
pub struct MilpOptions {
    pub gap_tol: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: usize,
    /// Record one [`NodeTrace`] per processed node in the report.
    pub trace: bool,
    pub lp: LpOptions,
    /// Known feasible point used as the first incumbent.
    pub initial_incumbent: Option<Vec<f64>>,
}

impl Default for MilpOptions {
    fn default() -> Self {
        let lp = LpOptions::default();
        Self {
            gap_tol: lp.tolerances.gap,
            time_limit: None,
            node_limit: 5_000_000,
            trace: false,
            lp,
            initial_incumbent: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeAction {
    Branched { var: usize },
    Integral { objective: f64 },
    Infeasible,
    Pruned,
    LpLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeTrace {
    pub id: usize,
    pub depth: usize,
    pub bound: f64,
    pub action: NodeAction,
}

impl fmt::Display for NodeTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {} depth {} bound {:.10e} ", self.id, self.depth, self.bound)?;
        match self.action {
            NodeAction::Branched { var } => write!(f, "branch x{var}"),
            NodeAction::Integral { objective } => write!(f, "integral {objective:.10e}"),
            NodeAction::Infeasible => write!(f, "infeasible"),
            NodeAction::Pruned => write!(f, "pruned"),
            NodeAction::LpLimit => write!(f, "lp-limit"),
        }
    }
}

struct OpenNode {
    bound: f64,
    id: usize,
    depth: usize,
    fixings: Vec<(usize, f64)>,
    basis: Option<Rc<Basis>>,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenNode {}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenNode {
    // Max-heap: the "greatest" node is the one with the smallest bound, then id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Bases are only kept for warm starts while the open list is moderate.
const WARM_START_QUEUE_CAP: usize = 20_000;
/// Nodes between diving runs (the root always dives).
const DIVE_EVERY: usize = 100;

/// Index of the most fractional binary (lowest index on ties), if any.
fn most_fractional(x: &[f64], binaries: &[usize], int_tol: f64) -> Option<usize> {
    let mut branch_var = None;
    let mut best_frac = int_tol;
    for &j in binaries {
        let f = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
        if f > best_frac {
            best_frac = f;
            branch_var = Some(j);
        }
    }
    branch_var
}

struct DiveResult {
    found: Option<(f64, Vec<f64>)>,
    iterations: usize,
}

/// Repeatedly fix the least fractional binary to its nearest value and
/// re-solve, trying the other value once if that is infeasible. Stops at an
/// integral point, an infeasible pair or a bound no better than `cutoff`.
/// With `fix_ones`, binaries already at one are held there first; zeros stay
/// free so the dive can move resources onto them.
#[allow(clippy::too_many_arguments)]
fn dive(
    model: &Model,
    lp: &LinearProgram,
    lo: &mut [f64],
    hi: &mut [f64],
    start_x: &[f64],
    start_basis: &Basis,
    binaries: &[usize],
    int_tol: f64,
    cutoff: f64,
    lp_opts: &LpOptions,
    fix_ones: bool,
) -> DiveResult {
    let mut x = start_x.to_vec();
    let mut basis = start_basis.clone();
    let mut iterations = 0;
    if fix_ones {
        for &j in binaries {
            if x[j] >= 1.0 - int_tol {
                lo[j] = 1.0;
            }
        }
    }
    loop {
        let mut pick: Option<(usize, f64)> = None;
        for &j in binaries {
            let f = (x[j] - x[j].round()).abs();
            if f > int_tol && pick.is_none_or(|(_, g)| f < g) {
                pick = Some((j, f));
            }
        }
        let Some((j, _)) = pick else {
            let mut x = x;
            binaries.iter().for_each(|&j| x[j] = x[j].round());
            let value = lp.objective_value(&x);
            return DiveResult { found: (value < cutoff).then_some((value, x)), iterations };
        };
        let first = x[j].round();
        let mut solved = None;
        for value in [first, 1.0 - first] {
            lo[j] = value;
            hi[j] = value;
            let out = solve_model(model, lo, hi, Some(&basis), lp_opts);
            iterations += out.report.iterations;
            if out.report.status == Status::Optimal {
                solved = Some(out);
                break;
            }
            if out.report.status != Status::Infeasible {
                return DiveResult { found: None, iterations };
            }
        }
        let Some(out) = solved else {
            return DiveResult { found: None, iterations };
        };
        if out.report.objective >= cutoff {
            return DiveResult { found: None, iterations };
        }
        x = out.report.x;
        basis = out.basis;
    }
}

fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if incumbent == f64::INFINITY {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

pub fn solve_milp(lp: &LinearProgram, opts: &MilpOptions) -> Result<SolveReport> {
    lp.validate()?;
    let started = Instant::now();
    let deadline = opts.time_limit.map(|d| started + d);
    let mut lp_opts = opts.lp.clone();
    lp_opts.deadline = deadline;
    let int_tol = opts.lp.tolerances.integrality;

    let model = Model::new(lp);
    let base_lo: Vec<f64> = lp.variables.iter().map(|v| v.lower).collect();
    let base_hi: Vec<f64> = lp.variables.iter().map(|v| v.upper).collect();
    let binaries = lp.binaries();

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    if let Some(x0) = &opts.initial_incumbent {
        if x0.len() != lp.num_vars() {
            return Err(MilpError::BadStart(format!(
                "expected {} values, got {}",
                lp.num_vars(),
                x0.len()
            )));
        }
        let viol = lp.max_scaled_violation(x0);
        if viol > 1e-6 || binaries.iter().any(|&j| (x0[j] - x0[j].round()).abs() > int_tol) {
            return Err(MilpError::BadStart(format!("violation {viol:.3e}")));
        }
        let mut x = x0.clone();
        binaries.iter().for_each(|&j| x[j] = x[j].round());
        incumbent = Some((lp.objective_value(&x), x));
    }

    let mut heap = BinaryHeap::new();
    heap.push(OpenNode {
        bound: f64::NEG_INFINITY,
        id: 0,
        depth: 0,
        fixings: Vec::new(),
        basis: None,
    });
    let mut next_id = 1usize;
    let mut nodes = 0usize;
    let mut iterations = 0usize;
    let mut trace = Vec::new();
    let mut root_duals = None;
    let mut limit_status: Option<Status> = None;
    let mut lo = base_lo.clone();
    let mut hi = base_hi.clone();

    let record = |t: NodeTrace, trace: &mut Vec<NodeTrace>| {
        debug!("{t}");
        if opts.trace {
            trace.push(t);
        }
    };

    while let Some(node) = heap.pop() {
        let inc_obj = incumbent.as_ref().map_or(f64::INFINITY, |(o, _)| *o);
        if relative_gap(inc_obj, node.bound) <= opts.gap_tol {
            // Best-first: every remaining node is at least as bad.
            record(
                NodeTrace { id: node.id, depth: node.depth, bound: node.bound, action: NodeAction::Pruned },
                &mut trace,
            );
            heap.clear();
            break;
        }
        if nodes >= opts.node_limit {
            limit_status = Some(Status::IterationLimit);
            heap.push(node);
            break;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            limit_status = Some(Status::TimeLimit);
            heap.push(node);
            break;
        }
        nodes += 1;

        lo.copy_from_slice(&base_lo);
        hi.copy_from_slice(&base_hi);
        for &(j, v) in &node.fixings {
            lo[j] = v;
            hi[j] = v;
        }
        let out = solve_model(&model, &lo, &hi, node.basis.as_deref(), &lp_opts);
        iterations += out.report.iterations;
        let r = out.report;
        match r.status {
            Status::Optimal => {}
            Status::Infeasible => {
                record(
                    NodeTrace { id: node.id, depth: node.depth, bound: node.bound, action: NodeAction::Infeasible },
                    &mut trace,
                );
                continue;
            }
            Status::Unbounded => {
                let mut rep = SolveReport::empty(Status::Unbounded);
                rep.nodes = nodes;
                rep.iterations = iterations;
                rep.trace = trace;
                return Ok(rep);
            }
            s @ (Status::IterationLimit | Status::TimeLimit) => {
                record(
                    NodeTrace { id: node.id, depth: node.depth, bound: node.bound, action: NodeAction::LpLimit },
                    &mut trace,
                );
                limit_status = Some(s);
                heap.push(node);
                break;
            }
        }
        if node.id == 0 {
            root_duals = r.duals.clone();
        }
        let obj = r.objective;
        if relative_gap(inc_obj, obj) <= opts.gap_tol {
            record(
                NodeTrace { id: node.id, depth: node.depth, bound: obj, action: NodeAction::Pruned },
                &mut trace,
            );
            continue;
        }

        let branch_var = most_fractional(&r.x, &binaries, int_tol);
        if branch_var.is_some() && (nodes - 1).is_multiple_of(DIVE_EVERY) {
            for fix_ones in [true, false] {
                let saved = (lo.clone(), hi.clone());
                let cutoff = incumbent.as_ref().map_or(f64::INFINITY, |(o, _)| *o);
                let dived = dive(
                    &model, lp, &mut lo, &mut hi, &r.x, &out.basis, &binaries, int_tol, cutoff, &lp_opts, fix_ones,
                );
                lo.copy_from_slice(&saved.0);
                hi.copy_from_slice(&saved.1);
                iterations += dived.iterations;
                if let Some((value, x)) = dived.found {
                    debug!("dive from node {} found {value:.10e}", node.id);
                    incumbent = Some((value, x));
                }
            }
        }
        let inc_obj = incumbent.as_ref().map_or(f64::INFINITY, |(o, _)| *o);
        if branch_var.is_some() && relative_gap(inc_obj, obj) <= opts.gap_tol {
            record(
                NodeTrace { id: node.id, depth: node.depth, bound: obj, action: NodeAction::Pruned },
                &mut trace,
            );
            continue;
        }

        match branch_var {
            None => {
                let mut x = r.x;
                binaries.iter().for_each(|&j| x[j] = x[j].round());
                let value = lp.objective_value(&x);
                record(
                    NodeTrace { id: node.id, depth: node.depth, bound: obj, action: NodeAction::Integral { objective: value } },
                    &mut trace,
                );
                if value < inc_obj {
                    incumbent = Some((value, x));
                }
            }
            Some(var) => {
                record(
                    NodeTrace { id: node.id, depth: node.depth, bound: obj, action: NodeAction::Branched { var } },
                    &mut trace,
                );
                let basis = (heap.len() < WARM_START_QUEUE_CAP).then(|| Rc::new(out.basis));
                for value in [0.0, 1.0] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((var, value));
                    heap.push(OpenNode {
                        bound: obj,
                        id: next_id,
                        depth: node.depth + 1,
                        fixings,
                        basis: basis.clone(),
                    });
                    next_id += 1;
                }
            }
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let mut rep = SolveReport::empty(Status::Optimal);
    rep.nodes = nodes;
    rep.iterations = iterations;
    rep.trace = trace;
    match incumbent {
        Some((obj, x)) => {
            rep.best_bound = open_bound.min(obj);
            rep.gap = relative_gap(obj, rep.best_bound);
            rep.objective = obj;
            rep.x = x;
            rep.status = limit_status.unwrap_or(Status::Optimal);
            if binaries.is_empty() {
                rep.duals = root_duals;
            }
        }
        None => {
            rep.status = limit_status.unwrap_or(Status::Infeasible);
            rep.best_bound = open_bound;
        }
    }
    Ok(rep)
}
