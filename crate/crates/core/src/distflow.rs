//! Daily load-shedding cost of line outages on the DistFlow branch-flow model.
//!
//! One LP covers all 24 hours (they are coupled by microturbine ramping).
//! Variables per hour: line flows `P`, `Q`, squared current `l`, squared bus
//! voltage `v`, shed `s` at load buses and microturbine output `g`, `q`.
//! Everything is per-unit on the network base except the objective, which is
//! `sum(s) * base_mva * c_ens` in $/day.
//!
//! The relaxed cone `P^2 + Q^2 <= l v` is imposed by cutting planes. For a
//! violated point the cut is the tangent hyperplane of `P^2 + Q^2 - l v` at
//! `(P0, Q0, (P0^2 + Q0^2) / v0, v0)`, the cone boundary point straight
//! above the iterate. That hyperplane supports the whole cone (by
//! Cauchy-Schwarz and AM-GM) and separates the iterate; the plain gradient
//! cut at the iterate itself is not valid for this nonconvex function.

use std::collections::BTreeSet;
use std::fmt;

use gridharden_milp::{
    solve_with_cuts, Constraint, CutLoopOptions, LinearProgram, LpOptions, MilpError, Sense,
    Separation, Status, VarKind,
};
use log::debug;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::network::{Network, NetworkError, HOURS};
use crate::scenario_tree::Hazard;

#[derive(Debug, Error)]
pub enum DistFlowError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("invalid outage case: {0}")]
    InvalidCase(String),
    #[error("c_ens must be positive, got {0}")]
    BadPrice(f64),
    #[error(transparent)]
    Solver(#[from] MilpError),
    #[error("dispatch LP ended with status {0}")]
    Status(Status),
    #[error("case {case}: {source}")]
    Case {
        case: String,
        #[source]
        source: Box<DistFlowError>,
    },
}

/// Set of de-energized lines (by line id).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct OutageCase {
    pub out_lines: BTreeSet<usize>,
    pub event_tag: Option<Hazard>,
}

impl OutageCase {
    pub fn new(lines: impl IntoIterator<Item = usize>) -> Self {
        Self {
            out_lines: lines.into_iter().collect(),
            event_tag: None,
        }
    }

    /// Line ids joined by `;`, used as the CSV key.
    pub fn label(&self) -> String {
        self.out_lines
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl fmt::Display for OutageCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "outage {{{}}}", self.label())
    }
}

/// One case per line, in file order.
pub fn single_line_cases(net: &Network) -> Vec<OutageCase> {
    net.lines.iter().map(|l| OutageCase::new([l.id])).collect()
}

/// Parse a cases file: one comma-separated set of line ids per row.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_cases(text: &str) -> Result<Vec<OutageCase>, DistFlowError> {
    let mut cases = Vec::new();
    for (k, row) in text.lines().enumerate() {
        let row = row.trim();
        if row.is_empty() || row.starts_with('#') {
            continue;
        }
        let ids = row
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| DistFlowError::InvalidCase(format!("row {}: {e}", k + 1)))?;
        cases.push(OutageCase::new(ids));
    }
    Ok(cases)
}

#[derive(Debug, Clone)]
pub struct DispatchOptions {
    /// Value of energy not served in $/MWh.
    pub c_ens: f64,
    /// Price on line losses in $/MWh. A small positive value keeps the
    /// relaxation on the cone boundary; it is not part of the reported cost.
    pub loss_price: f64,
    pub cone_tol: f64,
    pub max_rounds: usize,
    pub lp: LpOptions,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        let lp = LpOptions::default();
        Self {
            c_ens: 10_000.0,
            loss_price: 1.0,
            cone_tol: lp.tolerances.cone,
            max_rounds: 200,
            lp,
        }
    }
}

/// Optimal dispatch for one outage case. Arrays are indexed `[line or bus
/// position][hour]`; flows, voltages and injections are per-unit, shed and
/// microturbine output in MW.
#[derive(Debug, Clone, Serialize)]
pub struct DispatchSolution {
    pub objective_usd: f64,
    pub p_line: Vec<Vec<f64>>,
    pub q_line: Vec<Vec<f64>>,
    pub l_line: Vec<Vec<f64>>,
    pub v_bus: Vec<Vec<f64>>,
    pub p_inj: Vec<Vec<f64>>,
    pub q_inj: Vec<Vec<f64>>,
    pub shed_mw: Vec<Vec<f64>>,
    pub mt_mw: Vec<Vec<f64>>,
    pub cut_rounds: usize,
    pub cuts_added: usize,
    /// Largest `P^2 + Q^2 - l v` over in-service lines and hours.
    pub max_cone_residual: f64,
}

/// Variable indices of the dispatch LP.
struct Layout {
    p: Vec<[usize; HOURS]>,
    q: Vec<[usize; HOURS]>,
    l: Vec<[usize; HOURS]>,
    v: Vec<[usize; HOURS]>,
    s: Vec<Option<[usize; HOURS]>>,
    g: Vec<Option<[usize; HOURS]>>,
    gq: Vec<Option<[usize; HOURS]>>,
}

fn build(net: &Network, out: &[bool], c_ens: f64, loss_price: f64) -> (LinearProgram, Layout) {
    let base = net.base_mva();
    let mut lp = LinearProgram::new("dispatch");
    let nl = net.num_lines();
    let nb = net.num_buses();
    let mut lay = Layout {
        p: vec![[0; HOURS]; nl],
        q: vec![[0; HOURS]; nl],
        l: vec![[0; HOURS]; nl],
        v: vec![[0; HOURS]; nb],
        s: vec![None; nb],
        g: vec![None; nb],
        gq: vec![None; nb],
    };
    for (k, line) in net.lines.iter().enumerate() {
        // |P|, |Q| <= sqrt(l_max v_max) is implied by the cone; the box keeps early LPs bounded.
        let cap = (line.ampacity_sq_pu * net.v_hi()).sqrt();
        let (lo, hi, lmax) = if out[k] { (0.0, 0.0, 0.0) } else { (-cap, cap, line.ampacity_sq_pu) };
        for h in 0..HOURS {
            lay.p[k][h] = lp.add_variable(format!("P_l{}_h{h}", line.id), VarKind::Continuous, lo, hi, 0.0);
            lay.q[k][h] = lp.add_variable(format!("Q_l{}_h{h}", line.id), VarKind::Continuous, lo, hi, 0.0);
            let loss = loss_price * line.r_pu * base;
            lay.l[k][h] = lp.add_variable(format!("L_l{}_h{h}", line.id), VarKind::Continuous, 0.0, lmax, loss);
        }
    }
    for (b, bus) in net.buses.iter().enumerate() {
        let (lo, hi) = if b == net.root() { (1.0, 1.0) } else { (net.v_lo(), net.v_hi()) };
        for h in 0..HOURS {
            lay.v[b][h] = lp.add_variable(format!("v_b{}_h{h}", bus.id), VarKind::Continuous, lo, hi, 0.0);
        }
        if b != net.root() && bus.has_load() {
            let mut idx = [0; HOURS];
            for (h, slot) in idx.iter_mut().enumerate() {
                let cap = bus.demand_mw(h) / base;
                *slot = lp.add_variable(
                    format!("s_b{}_h{h}", bus.id),
                    VarKind::Continuous,
                    0.0,
                    cap,
                    base * c_ens,
                );
            }
            lay.s[b] = Some(idx);
        }
        if let Some(mt) = net.microturbine_at(b) {
            let cap = mt.p_max_mw / base;
            let mut gi = [0; HOURS];
            let mut qi = [0; HOURS];
            for h in 0..HOURS {
                gi[h] = lp.add_variable(format!("g_b{}_h{h}", bus.id), VarKind::Continuous, 0.0, cap, 0.0);
                qi[h] = lp.add_variable(format!("gq_b{}_h{h}", bus.id), VarKind::Continuous, -cap, cap, 0.0);
            }
            lay.g[b] = Some(gi);
            lay.gq[b] = Some(qi);
        }
    }

    for (b, bus) in net.buses.iter().enumerate() {
        if b == net.root() {
            continue;
        }
        let pl = net.parent_line(b).expect("non-root bus has a feeding line");
        let line = &net.lines[pl];
        let ratio = bus.q_ratio();
        for h in 0..HOURS {
            let demand = bus.demand_mw(h) / base;
            // children P - P_parent + r l - s - g = -P_load
            let mut pr: Vec<(usize, f64)> = net.child_lines(b).iter().map(|&c| (lay.p[c][h], 1.0)).collect();
            pr.push((lay.p[pl][h], -1.0));
            pr.push((lay.l[pl][h], line.r_pu));
            let mut qr: Vec<(usize, f64)> = net.child_lines(b).iter().map(|&c| (lay.q[c][h], 1.0)).collect();
            qr.push((lay.q[pl][h], -1.0));
            qr.push((lay.l[pl][h], line.x_pu));
            if let Some(s) = lay.s[b] {
                pr.push((s[h], -1.0));
                if ratio > 0.0 {
                    qr.push((s[h], -ratio));
                }
            }
            if let (Some(g), Some(gq)) = (lay.g[b], lay.gq[b]) {
                pr.push((g[h], -1.0));
                qr.push((gq[h], -1.0));
            }
            lp.add_constraint(format!("pbal_b{}_h{h}", bus.id), "active-balance", pr, Sense::Eq, -demand);
            lp.add_constraint(format!("qbal_b{}_h{h}", bus.id), "reactive-balance", qr, Sense::Eq, -ratio * demand);
        }
    }
    for (k, line) in net.lines.iter().enumerate() {
        if out[k] {
            continue;
        }
        let (i, j) = net.endpoints(k);
        let z2 = line.r_pu * line.r_pu + line.x_pu * line.x_pu;
        for h in 0..HOURS {
            lp.add_constraint(
                format!("vdrop_l{}_h{h}", line.id),
                "voltage-drop",
                vec![
                    (lay.v[j][h], 1.0),
                    (lay.v[i][h], -1.0),
                    (lay.p[k][h], 2.0 * line.r_pu),
                    (lay.q[k][h], 2.0 * line.x_pu),
                    (lay.l[k][h], -z2),
                ],
                Sense::Eq,
                0.0,
            );
        }
    }
    for (b, bus) in net.buses.iter().enumerate() {
        let (Some(mt), Some(g)) = (net.microturbine_at(b), lay.g[b]) else { continue };
        for h in 0..HOURS - 1 {
            lp.add_constraint(
                format!("ramp_b{}_h{h}", bus.id),
                "ramping",
                vec![(g[h + 1], 1.0), (g[h], -1.0)],
                Sense::Le,
                mt.ramp_up_mw / base,
            );
            lp.add_constraint(
                format!("rampdn_b{}_h{h}", bus.id),
                "ramping",
                vec![(g[h + 1], 1.0), (g[h], -1.0)],
                Sense::Ge,
                mt.ramp_down_mw / base,
            );
        }
    }
    (lp, lay)
}

fn cone_residual(x: &[f64], lay: &Layout, net: &Network, k: usize, h: usize) -> f64 {
    let (_, j) = net.endpoints(k);
    let (p, q, l, v) = (x[lay.p[k][h]], x[lay.q[k][h]], x[lay.l[k][h]], x[lay.v[j][h]]);
    p * p + q * q - l * v
}

pub fn solve_dispatch(
    net: &Network,
    case: &OutageCase,
    opts: &DispatchOptions,
) -> Result<DispatchSolution, DistFlowError> {
    if !(opts.c_ens.is_finite() && opts.c_ens > 0.0) {
        return Err(DistFlowError::BadPrice(opts.c_ens));
    }
    let mut out = vec![false; net.num_lines()];
    for &id in &case.out_lines {
        out[net.line_position(id)?] = true;
    }
    if !(opts.loss_price.is_finite() && opts.loss_price >= 0.0) {
        return Err(DistFlowError::BadPrice(opts.loss_price));
    }
    let (lp, lay) = build(net, &out, opts.c_ens, opts.loss_price);
    let in_service: Vec<usize> = (0..net.num_lines()).filter(|&k| !out[k]).collect();

    let mut round = 0usize;
    let mut oracle = |x: &[f64]| {
        let mut cuts = Vec::new();
        let mut worst = 0.0f64;
        for &k in &in_service {
            let (_, j) = net.endpoints(k);
            for h in 0..HOURS {
                let res = cone_residual(x, &lay, net, k, h);
                worst = worst.max(res);
                if res <= opts.cone_tol {
                    continue;
                }
                let (p0, q0, v0) = (x[lay.p[k][h]], x[lay.q[k][h]], x[lay.v[j][h]]);
                let l_star = (p0 * p0 + q0 * q0) / v0;
                cuts.push(Constraint {
                    name: format!("cone_l{}_h{h}_r{round}", net.lines[k].id),
                    tag: "cone".into(),
                    coeffs: vec![
                        (lay.p[k][h], 2.0 * p0),
                        (lay.q[k][h], 2.0 * q0),
                        (lay.l[k][h], -v0),
                        (lay.v[j][h], -l_star),
                    ],
                    sense: Sense::Le,
                    rhs: 0.0,
                });
            }
        }
        round += 1;
        Separation { cuts, max_violation: worst }
    };
    let loop_opts = CutLoopOptions {
        tol: opts.cone_tol,
        max_rounds: opts.max_rounds,
        lp: opts.lp.clone(),
    };
    let res = solve_with_cuts(lp, &mut oracle, &loop_opts)?;
    if res.report.status != Status::Optimal {
        return Err(DistFlowError::Status(res.report.status));
    }
    debug!(
        "{case}: objective {:.6} after {} rounds, {} cuts",
        res.report.objective, res.rounds, res.cuts_added
    );

    let x = &res.report.x;
    let base = net.base_mva();
    let take = |idx: &[usize; HOURS], scale: f64| idx.iter().map(|&j| x[j] * scale).collect::<Vec<f64>>();
    let zeros = || vec![0.0; HOURS];
    let shed_mw: Vec<Vec<f64>> = lay.s.iter().map(|s| s.as_ref().map_or_else(zeros, |i| take(i, base))).collect();
    let mt_mw: Vec<Vec<f64>> = lay.g.iter().map(|g| g.as_ref().map_or_else(zeros, |i| take(i, base))).collect();
    let p_line: Vec<Vec<f64>> = lay.p.iter().map(|i| take(i, 1.0)).collect();
    let q_line: Vec<Vec<f64>> = lay.q.iter().map(|i| take(i, 1.0)).collect();
    let l_line: Vec<Vec<f64>> = lay.l.iter().map(|i| take(i, 1.0)).collect();
    let v_bus: Vec<Vec<f64>> = lay.v.iter().map(|i| take(i, 1.0)).collect();

    // Net injections: generation minus served demand; the root supplies its feeders.
    let mut p_inj = vec![vec![0.0; HOURS]; net.num_buses()];
    let mut q_inj = vec![vec![0.0; HOURS]; net.num_buses()];
    for (b, bus) in net.buses.iter().enumerate() {
        for h in 0..HOURS {
            if b == net.root() {
                p_inj[b][h] = net.child_lines(b).iter().map(|&c| p_line[c][h]).sum();
                q_inj[b][h] = net.child_lines(b).iter().map(|&c| q_line[c][h]).sum();
                continue;
            }
            let served = (bus.demand_mw(h) - shed_mw[b][h]) / base;
            let gq = lay.gq[b].map_or(0.0, |i| x[i[h]]);
            p_inj[b][h] = mt_mw[b][h] / base - served;
            q_inj[b][h] = gq - bus.q_ratio() * served;
        }
    }
    let objective_usd: f64 = lay
        .s
        .iter()
        .flatten()
        .flat_map(|idx| idx.iter())
        .map(|&j| x[j] * base * opts.c_ens)
        .sum();
    let mut max_res = 0.0f64;
    for &k in &in_service {
        for h in 0..HOURS {
            max_res = max_res.max(cone_residual(x, &lay, net, k, h));
        }
    }

    Ok(DispatchSolution {
        objective_usd,
        p_line,
        q_line,
        l_line,
        v_bus,
        p_inj,
        q_inj,
        shed_mw,
        mt_mw,
        cut_rounds: res.rounds,
        cuts_added: res.cuts_added,
        max_cone_residual: max_res,
    })
}

/// Shedding cost with every line in `lines` out of service at once.
pub fn multi_outage_cost(
    net: &Network,
    lines: impl IntoIterator<Item = usize>,
    opts: &DispatchOptions,
) -> Result<f64, DistFlowError> {
    solve_dispatch(net, &OutageCase::new(lines), opts).map(|s| s.objective_usd)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LsEntry {
    pub out_lines: Vec<usize>,
    pub cls_usd_per_day: f64,
    pub lcf: f64,
}

/// Per-case daily shedding cost and its normalization by the largest cost.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadSheddingTable {
    pub entries: Vec<LsEntry>,
}

impl LoadSheddingTable {
    pub fn from_costs(cases: &[OutageCase], costs: &[f64]) -> Self {
        let max = costs.iter().copied().fold(0.0, f64::max);
        let entries = cases
            .iter()
            .zip(costs)
            .map(|(c, &cls)| LsEntry {
                out_lines: c.out_lines.iter().copied().collect(),
                cls_usd_per_day: cls,
                lcf: if max > 0.0 { cls / max } else { 0.0 },
            })
            .collect();
        Self { entries }
    }

    /// Cost of the single-line case for `line_id`, if present.
    pub fn cls(&self, line_id: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.out_lines == [line_id])
            .map(|e| e.cls_usd_per_day)
    }

    pub fn lcf(&self, line_id: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.out_lines == [line_id]).map(|e| e.lcf)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["line_id", "cls_usd_per_day", "lcf"]).expect("in-memory write");
        for e in &self.entries {
            let key = e.out_lines.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";");
            w.write_record([key, e.cls_usd_per_day.to_string(), e.lcf.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self, DistFlowError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let bad = |m: String| DistFlowError::InvalidCase(format!("table row {}: {m}", k + 1));
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != 3 {
                return Err(bad(format!("expected 3 fields, got {}", rec.len())));
            }
            let out_lines = rec[0]
                .split(';')
                .map(|t| t.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            let cls: f64 = rec[1].trim().parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
            let lcf: f64 = rec[2].trim().parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
            entries.push(LsEntry { out_lines, cls_usd_per_day: cls, lcf });
        }
        Ok(Self { entries })
    }
}

/// Solve every case (in parallel) and assemble the table in case order.
pub fn ls_cost_table(
    net: &Network,
    cases: &[OutageCase],
    opts: &DispatchOptions,
) -> Result<LoadSheddingTable, DistFlowError> {
    if cases.is_empty() {
        return Err(DistFlowError::InvalidCase("no outage cases given".into()));
    }
    let costs = cases
        .par_iter()
        .map(|c| {
            solve_dispatch(net, c, opts)
                .map(|s| s.objective_usd)
                .map_err(|e| DistFlowError::Case {
                    case: c.label(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(LoadSheddingTable::from_costs(cases, &costs))
}
