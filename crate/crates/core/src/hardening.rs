//! The adaptive two-stage hardening MILP and its two-stage restriction.
//!
//! Decision variables per line `l` and tree node `n`: `alpha[l][n]` (line is
//! undergrounded at node `n`), `beta[l][n]` (managed vegetation fraction)
//! and per stage `t`: `r[l][t]` (the undergrounding plan is revised at
//! stage `t`). Node weights are `w_n = p_n * gamma^(t_n - 1)`.
//!
//! Revision structure. For two nodes at stage `t'` whose deepest common
//! ancestor sits at stage `s`, the pairwise rules allow different `alpha`
//! exactly when the revision stage `t*` satisfies `s < t* <= t'`. Stage
//! lists are ordered so that every subtree is a contiguous block, hence the
//! equivalence classes are contiguous too and it suffices to link each node
//! to its right neighbour: `|alpha_a - alpha_b| <= sum_{s < t <= t'} r_t`.
//! This keeps the row count linear in the tree size with the same integer
//! feasible set as the all-pairs form.

use gridharden_milp::{
    solve_milp, LinearProgram, MilpError, MilpOptions, Sense, SolveReport, Status, VarKind,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost_model::{CostTables, HazardData};
use crate::network::Network;
use crate::scenario_tree::{Hazard, ScenarioTree};

/// Absolute slack used when checking decoded plans.
const CHECK_TOL: f64 = 1e-6;
/// Absolute snapping distance for decoded vegetation fractions.
const BETA_SNAP: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HardeningError {
    #[error("instance shape: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("variable {name} = {value} is not integral")]
    NonIntegral { name: String, value: f64 },
    #[error("constraint {tag} violated at line {line}, node {node}: {detail}")]
    Violation {
        tag: &'static str,
        line: usize,
        node: usize,
        detail: String,
    },
    #[error("solver ended with status {status}")]
    Status { status: Status, report: Box<SolveReport> },
    #[error(transparent)]
    Solver(#[from] MilpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Adaptive two-stage: one revision at a chosen stage.
    Ats,
    /// Classic two-stage: revision pinned to stage 1.
    Ts,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ats => "ats",
            Mode::Ts => "ts",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningParams {
    pub budget_ug: f64,
    pub budget_vm: f64,
    /// Maximum lines undergrounded per node; `None` leaves the limit inactive.
    pub max_ug_per_node: Option<usize>,
    pub mode: Mode,
    /// Disable vegetation management (`beta = 0`).
    pub ug_only: bool,
}

impl Default for PlanningParams {
    fn default() -> Self {
        Self {
            budget_ug: 35e6,
            budget_vm: 430_000.0,
            max_ug_per_node: None,
            mode: Mode::Ats,
            ug_only: false,
        }
    }
}

/// Tree, per-line data and cost tables of one planning problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub tree: ScenarioTree,
    pub line_ids: Vec<usize>,
    pub length_mi: Vec<f64>,
    /// `[line][node]` unit costs and observed vegetation fraction.
    pub ic_ug: Vec<Vec<f64>>,
    pub ic_vm: Vec<Vec<f64>>,
    pub veg: Vec<Vec<f64>>,
    pub costs: CostTables,
}

impl Instance {
    pub fn new(
        tree: ScenarioTree,
        net: &Network,
        hazard: &HazardData,
        costs: CostTables,
    ) -> Result<Self, HardeningError> {
        let nl = net.num_lines();
        let nn = tree.len();
        let table = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
            (0..nl).map(|l| (0..nn).map(|n| f(l, n)).collect()).collect()
        };
        let inst = Self {
            line_ids: net.lines.iter().map(|l| l.id).collect(),
            length_mi: net.lines.iter().map(|l| l.length_mi).collect(),
            ic_ug: table(&|l, n| hazard.at(l, n).ic_ug_per_mi),
            ic_vm: table(&|l, n| hazard.at(l, n).ic_vm_per_mi),
            veg: table(&|l, n| hazard.at(l, n).veg_fraction),
            tree,
            costs,
        };
        inst.check()?;
        Ok(inst)
    }

    pub fn num_lines(&self) -> usize {
        self.line_ids.len()
    }

    pub fn check(&self) -> Result<(), HardeningError> {
        let nl = self.num_lines();
        let nn = self.tree.len();
        let ok_table = |t: &Vec<Vec<f64>>| t.len() == nl && t.iter().all(|r| r.len() == nn);
        let c = &self.costs;
        let tables = [&self.ic_ug, &self.ic_vm, &self.veg, &c.delta_vm, &c.c[0], &c.c[1], &c.c[2], &c.tc[0], &c.tc[1], &c.tc[2]];
        if self.length_mi.len() != nl || !tables.iter().all(|t| ok_table(t)) {
            return Err(HardeningError::Shape(format!(
                "every table must be {nl} lines x {nn} nodes"
            )));
        }
        for l in 0..nl {
            for n in 0..nn {
                let cap = c.delta_vm[l][n] * self.veg[l][n];
                if !(cap >= 0.0) {
                    return Err(HardeningError::Param(format!(
                        "vegetation cap {cap} < 0 at line {}, node {n}",
                        self.line_ids[l]
                    )));
                }
            }
        }
        Ok(())
    }

    /// `w_n = p_n * gamma^(t_n - 1)`.
    pub fn weights(&self) -> Vec<f64> {
        self.tree
            .nodes()
            .iter()
            .map(|n| n.prob * self.costs.gamma.powi(n.stage as i32 - 1))
            .collect()
    }

    /// Same tree and line data with one hazard's costs removed.
    pub fn with_costs(&self, costs: CostTables) -> Self {
        Self { costs, ..self.clone() }
    }
}

/// The assembled MILP together with its variable map.
#[derive(Debug, Clone)]
pub struct HardeningModel {
    pub lp: LinearProgram,
    pub alpha: Vec<Vec<usize>>,
    pub beta: Vec<Vec<usize>>,
    /// `r[l][t - 1]`.
    pub r: Vec<Vec<usize>>,
    pub params: PlanningParams,
}

/// Stage of the deepest common ancestor of two nodes on the same stage.
fn common_stage(tree: &ScenarioTree, mut a: usize, mut b: usize) -> usize {
    let nodes = tree.nodes();
    while a != b {
        a = nodes[a].parent.expect("same-stage nodes share the root");
        b = nodes[b].parent.expect("same-stage nodes share the root");
    }
    nodes[a].stage
}

pub fn build_milp(inst: &Instance, params: &PlanningParams) -> Result<HardeningModel, HardeningError> {
    inst.check()?;
    if !(params.budget_ug >= 0.0 && params.budget_vm >= 0.0) {
        return Err(HardeningError::Param("budgets must be >= 0".into()));
    }
    let tree = &inst.tree;
    let nl = inst.num_lines();
    let nn = tree.len();
    let horizon = tree.horizon();
    let w = inst.weights();
    let c = &inst.costs;
    let (iw, ieq, ivm) = (Hazard::Wind.index(), Hazard::Earthquake.index(), Hazard::Vegetation.index());

    let mut lp = LinearProgram::new(format!("hardening-{}", params.mode.as_str()));
    let mut alpha = vec![Vec::with_capacity(nn); nl];
    let mut beta = vec![Vec::with_capacity(nn); nl];
    let mut r = vec![Vec::with_capacity(horizon); nl];
    let mut offset = 0.0;

    for l in 0..nl {
        let id = inst.line_ids[l];
        let mu = inst.length_mi[l];
        // Exposure removed by undergrounding at m: sum over T(m) of w_n (C^W + C^VM).
        let mut exposure: Vec<f64> = (0..nn).map(|n| w[n] * (c.c[iw][l][n] + c.c[ivm][l][n])).collect();
        offset += exposure.iter().sum::<f64>();
        for t in (1..horizon).rev() {
            for &n in tree.stage_nodes(t).expect("stage in range") {
                let below: f64 = tree.nodes()[n].children.iter().map(|&k| exposure[k]).sum();
                exposure[n] += below;
            }
        }
        for n in 0..nn {
            let direct = mu * inst.ic_ug[l][n] + c.tc[ieq][l][n] - c.tc[iw][l][n] - c.tc[ivm][l][n];
            let coef = w[n] * direct - exposure[n];
            alpha[l].push(lp.add_variable(format!("a_l{id}_n{n}"), VarKind::Binary, 0.0, 1.0, coef));
        }
        for n in 0..nn {
            let cap = if params.ug_only { 0.0 } else { c.delta_vm[l][n] * inst.veg[l][n] };
            let coef = w[n] * (mu * inst.ic_vm[l][n] - c.c[ivm][l][n]);
            beta[l].push(lp.add_variable(format!("b_l{id}_n{n}"), VarKind::Continuous, 0.0, cap, coef));
        }
        for t in 1..=horizon {
            let fixed = match params.mode {
                Mode::Ats => None,
                Mode::Ts => Some(if t == 1 { 1.0 } else { 0.0 }),
            };
            let (lo, hi) = fixed.map_or((0.0, 1.0), |v| (v, v));
            r[l].push(lp.add_variable(format!("r_l{id}_t{t}"), VarKind::Binary, lo, hi, 0.0));
        }
    }
    lp.objective_offset = offset;

    if let Some(cap) = params.max_ug_per_node {
        if cap < nl {
            for n in 0..nn {
                lp.add_constraint(
                    format!("ugcount_n{n}"),
                    "ug-count-limit",
                    (0..nl).map(|l| (alpha[l][n], 1.0)).collect(),
                    Sense::Le,
                    cap as f64,
                );
            }
        }
    }
    let ug_terms: Vec<(usize, f64)> = (0..nl)
        .flat_map(|l| (0..nn).map(move |n| (l, n)))
        .map(|(l, n)| (alpha[l][n], w[n] * inst.length_mi[l] * inst.ic_ug[l][n]))
        .filter(|&(_, a)| a != 0.0)
        .collect();
    lp.add_constraint("ug_budget", "ug-budget", ug_terms, Sense::Le, params.budget_ug);

    let paths: Vec<Vec<usize>> = (0..nn).map(|n| tree.ancestors(n).expect("node exists")).collect();
    for l in 0..nl {
        let id = inst.line_ids[l];
        for &leaf in tree.leaves() {
            lp.add_constraint(
                format!("ugonce_l{id}_n{leaf}"),
                "ug-irreversible",
                paths[leaf].iter().map(|&m| (alpha[l][m], 1.0)).collect(),
                Sense::Le,
                1.0,
            );
        }
        for n in 0..nn {
            let mut row: Vec<(usize, f64)> = paths[n].iter().map(|&m| (alpha[l][m], 1.0)).collect();
            row.push((beta[l][n], 1.0));
            lp.add_constraint(format!("ugvm_l{id}_n{n}"), "ug-vm-coupling", row, Sense::Le, 1.0);
        }
    }

    let vm_terms: Vec<(usize, f64)> = (0..nl)
        .flat_map(|l| (0..nn).map(move |n| (l, n)))
        .map(|(l, n)| (beta[l][n], w[n] * inst.length_mi[l] * inst.ic_vm[l][n]))
        .filter(|&(_, a)| a != 0.0)
        .collect();
    lp.add_constraint("vm_budget", "vm-budget", vm_terms, Sense::Le, params.budget_vm);

    for l in 0..nl {
        let id = inst.line_ids[l];
        lp.add_constraint(
            format!("revonce_l{id}"),
            "revision-once",
            r[l].iter().map(|&j| (j, 1.0)).collect(),
            Sense::Eq,
            1.0,
        );
        for t in 1..=horizon {
            let stage = tree.stage_nodes(t).expect("stage in range");
            for pair in stage.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let s = common_stage(tree, a, b);
                for (sign, tag) in [(1.0, "u"), (-1.0, "d")] {
                    let mut row = vec![(alpha[l][a], sign), (alpha[l][b], -sign)];
                    row.extend((s + 1..=t).map(|k| (r[l][k - 1], -1.0)));
                    lp.add_constraint(
                        format!("rev{tag}_l{id}_n{a}_n{b}"),
                        "revision-structure",
                        row,
                        Sense::Le,
                        0.0,
                    );
                }
            }
        }
    }

    Ok(HardeningModel { lp, alpha, beta, r, params: params.clone() })
}

/// A fixed hardening plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    /// `alpha[l][n]`: line `l` is undergrounded at node `n`.
    pub alpha: Vec<Vec<bool>>,
    pub beta: Vec<Vec<f64>>,
    /// Revision stage per line (1-based).
    pub revision: Vec<usize>,
}

impl Plan {
    /// No undergrounding, no vegetation management, revision at stage 1.
    pub fn empty(inst: &Instance) -> Self {
        let nl = inst.num_lines();
        let nn = inst.tree.len();
        Self {
            alpha: vec![vec![false; nn]; nl],
            beta: vec![vec![0.0; nn]; nl],
            revision: vec![1; nl],
        }
    }

    /// Line ids undergrounded at some node.
    pub fn ug_lines(&self, inst: &Instance) -> Vec<usize> {
        (0..inst.num_lines())
            .filter(|&l| self.alpha[l].iter().any(|&a| a))
            .map(|l| inst.line_ids[l])
            .collect()
    }

    /// Whether line `l` is underground at or before node `n`.
    fn cumulative(&self, inst: &Instance, l: usize, n: usize) -> usize {
        inst.tree
            .ancestors(n)
            .expect("node exists")
            .iter()
            .filter(|&&m| self.alpha[l][m])
            .count()
    }

    pub fn to_vector(&self, model: &HardeningModel) -> Vec<f64> {
        let mut x = vec![0.0; model.lp.num_vars()];
        for l in 0..self.alpha.len() {
            for n in 0..self.alpha[l].len() {
                x[model.alpha[l][n]] = f64::from(u8::from(self.alpha[l][n]));
                x[model.beta[l][n]] = self.beta[l][n];
            }
            x[model.r[l][self.revision[l] - 1]] = 1.0;
        }
        x
    }
}

/// Cost decomposition of a plan; every entry is weighted by `w_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Breakdown {
    pub q_ug: f64,
    pub q_vm: f64,
    pub vm_spend: f64,
    pub ug_spend: f64,
    /// Wind and residual vegetation costs still borne by overhead lines.
    pub c_oh: f64,
}

impl Breakdown {
    pub fn objective(&self) -> f64 {
        self.q_ug + self.q_vm
    }
}

fn violation(tag: &'static str, inst: &Instance, l: usize, node: usize, detail: String) -> HardeningError {
    HardeningError::Violation { tag, line: inst.line_ids[l], node, detail }
}

/// Check the plan-level rules (irreversibility, coupling, vegetation caps,
/// revision structure) that hold independently of budgets.
pub fn check_plan(inst: &Instance, plan: &Plan) -> Result<(), HardeningError> {
    let nl = inst.num_lines();
    let nn = inst.tree.len();
    let horizon = inst.tree.horizon();
    if plan.alpha.len() != nl || plan.beta.len() != nl || plan.revision.len() != nl {
        return Err(HardeningError::Shape("plan does not match the instance".into()));
    }
    for l in 0..nl {
        if plan.alpha[l].len() != nn || plan.beta[l].len() != nn {
            return Err(HardeningError::Shape("plan does not match the instance".into()));
        }
        let t_star = plan.revision[l];
        if !(1..=horizon).contains(&t_star) {
            return Err(violation("revision-once", inst, l, 0, format!("revision stage {t_star}")));
        }
        for n in 0..nn {
            let cum = plan.cumulative(inst, l, n);
            if cum > 1 {
                return Err(violation("ug-irreversible", inst, l, n, format!("{cum} adoptions on path")));
            }
            let b = plan.beta[l][n];
            if cum as f64 + b > 1.0 + CHECK_TOL {
                return Err(violation("ug-vm-coupling", inst, l, n, format!("beta {b} on an underground line")));
            }
            let cap = inst.costs.delta_vm[l][n] * inst.veg[l][n];
            if b < -CHECK_TOL || b > cap + CHECK_TOL {
                return Err(violation("vm-cap", inst, l, n, format!("beta {b} outside [0, {cap}]")));
            }
        }
        for t in 1..=horizon {
            let stage = inst.tree.stage_nodes(t).expect("stage in range");
            for pair in stage.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let s = common_stage(&inst.tree, a, b);
                let may_differ = s < t_star && t_star <= t;
                if !may_differ && plan.alpha[l][a] != plan.alpha[l][b] {
                    return Err(violation(
                        "revision-structure",
                        inst,
                        l,
                        b,
                        format!("differs from node {a} with revision at stage {t_star}"),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Evaluate the objective terms of a plan.
pub fn evaluate_plan(inst: &Instance, plan: &Plan) -> Result<Breakdown, HardeningError> {
    check_plan(inst, plan)?;
    let w = inst.weights();
    let c = &inst.costs;
    let (iw, ieq, ivm) = (Hazard::Wind.index(), Hazard::Earthquake.index(), Hazard::Vegetation.index());
    let mut out = Breakdown { q_ug: 0.0, q_vm: 0.0, vm_spend: 0.0, ug_spend: 0.0, c_oh: 0.0 };
    for l in 0..inst.num_lines() {
        let mu = inst.length_mi[l];
        for n in 0..inst.tree.len() {
            let a = f64::from(u8::from(plan.alpha[l][n]));
            let cum = plan.cumulative(inst, l, n) as f64;
            let b = plan.beta[l][n];
            let ug_invest = mu * inst.ic_ug[l][n];
            let direct = ug_invest + c.tc[ieq][l][n] - c.tc[iw][l][n] - c.tc[ivm][l][n];
            let wind_left = (1.0 - cum) * c.c[iw][l][n];
            let veg_left = (1.0 - b - cum) * c.c[ivm][l][n];
            out.q_ug += w[n] * (a * direct + wind_left);
            out.q_vm += w[n] * (b * mu * inst.ic_vm[l][n] + veg_left);
            out.vm_spend += w[n] * b * mu * inst.ic_vm[l][n];
            out.ug_spend += w[n] * a * ug_invest;
            out.c_oh += w[n] * (wind_left + veg_left);
        }
    }
    Ok(out)
}

/// Decoded solution with recomputed objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardeningSolution {
    pub plan: Plan,
    pub objective: f64,
    pub breakdown: Breakdown,
}

/// Solver round-off on a vegetation fraction: values within `BETA_SNAP` of
/// zero or of the cap are moved onto it, so spend reports carry no dust.
fn snap_beta(v: f64, cap: f64) -> f64 {
    if v <= BETA_SNAP {
        0.0
    } else if (v - cap).abs() <= BETA_SNAP {
        cap
    } else {
        v
    }
}

pub fn decode_solution(inst: &Instance, model: &HardeningModel, x: &[f64]) -> Result<HardeningSolution, HardeningError> {
    if x.len() != model.lp.num_vars() {
        return Err(HardeningError::Shape(format!(
            "point has {} values, model has {} variables",
            x.len(),
            model.lp.num_vars()
        )));
    }
    let binary = |j: usize| -> Result<bool, HardeningError> {
        let v = x[j];
        if (v - v.round()).abs() >= CHECK_TOL || !(v.round() == 0.0 || v.round() == 1.0) {
            return Err(HardeningError::NonIntegral { name: model.lp.variables[j].name.clone(), value: v });
        }
        Ok(v.round() == 1.0)
    };
    let nl = inst.num_lines();
    let mut plan = Plan::empty(inst);
    for l in 0..nl {
        for n in 0..inst.tree.len() {
            plan.alpha[l][n] = binary(model.alpha[l][n])?;
            plan.beta[l][n] = snap_beta(x[model.beta[l][n]], inst.costs.delta_vm[l][n] * inst.veg[l][n]);
        }
        let chosen: Vec<usize> = (0..model.r[l].len())
            .filter_map(|k| binary(model.r[l][k]).map(|b| b.then_some(k + 1)).transpose())
            .collect::<Result<_, _>>()?;
        match chosen.as_slice() {
            [t] => plan.revision[l] = *t,
            _ => {
                return Err(violation("revision-once", inst, l, 0, format!("{} revision stages set", chosen.len())))
            }
        }
        if model.params.mode == Mode::Ts && plan.revision[l] != 1 {
            return Err(violation("revision-once", inst, l, 0, "two-stage mode requires stage 1".into()));
        }
    }
    check_plan(inst, &plan)?;
    let breakdown = evaluate_plan(inst, &plan)?;
    let budget_tol = |b: f64| CHECK_TOL * b.abs().max(1.0);
    if breakdown.ug_spend > model.params.budget_ug + budget_tol(model.params.budget_ug) {
        return Err(violation("ug-budget", inst, 0, 0, format!("spend {}", breakdown.ug_spend)));
    }
    if breakdown.vm_spend > model.params.budget_vm + budget_tol(model.params.budget_vm) {
        return Err(violation("vm-budget", inst, 0, 0, format!("spend {}", breakdown.vm_spend)));
    }
    if let Some(cap) = model.params.max_ug_per_node {
        for n in 0..inst.tree.len() {
            let k = (0..nl).filter(|&l| plan.alpha[l][n]).count();
            if k > cap {
                return Err(violation("ug-count-limit", inst, 0, n, format!("{k} lines")));
            }
        }
    }
    Ok(HardeningSolution { plan, objective: breakdown.objective(), breakdown })
}

/// Build, solve and decode. The search starts from the cheaper of the
/// do-nothing plan and `start` (a plan known to be feasible for `params`,
/// e.g. the optimum of a tighter budget or of the two-stage restriction), so
/// the returned objective never exceeds either.
pub fn solve_hardening(
    inst: &Instance,
    params: &PlanningParams,
    opts: &MilpOptions,
    start: Option<&Plan>,
) -> Result<(HardeningSolution, SolveReport), HardeningError> {
    let model = build_milp(inst, params)?;
    let mut opts = opts.clone();
    let mut x0 = Plan::empty(inst).to_vector(&model);
    if let Some(plan) = start {
        check_plan(inst, plan)?;
        let x = plan.to_vector(&model);
        if model.lp.objective_value(&x) < model.lp.objective_value(&x0) {
            x0 = x;
        }
    }
    opts.initial_incumbent = Some(x0);
    let report = solve_milp(&model.lp, &opts)?;
    if !report.has_solution() || !matches!(report.status, Status::Optimal) {
        return Err(HardeningError::Status { status: report.status, report: Box::new(report) });
    }
    let sol = decode_solution(inst, &model, &report.x)?;
    Ok((sol, report))
}

/// `(v_ts - v_ats) / v_ts * 100`.
pub fn relative_gain(v_ts: f64, v_ats: f64) -> Result<f64, HardeningError> {
    if !(v_ts > 0.0) {
        return Err(HardeningError::Param(format!("relative gain needs v_ts > 0, got {v_ts}")));
    }
    Ok((v_ts - v_ats) / v_ts * 100.0)
}
