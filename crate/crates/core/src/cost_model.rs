//! Outage, event and subtree-expected costs, criticality factors and the
//! discount factor.
//!
//! Tables are indexed `[line position][node id]`, per hazard where relevant.

use std::collections::HashMap;

use serde::Deserialize;
use thiserror::Error;

use crate::network::Network;
use crate::scenario_tree::{Hazard, ScenarioTree};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("negative or non-finite input to {0}")]
    BadInput(&'static str),
    #[error("failure probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("node {0} has zero probability")]
    ZeroProbability(usize),
    #[error("cost vector has {got} entries, tree has {want} nodes")]
    Shape { got: usize, want: usize },
    #[error("discount rate must exceed -1, got {0}")]
    BadRate(f64),
    #[error("hazard file row {row}: {message}")]
    HazardFile { row: usize, message: String },
    #[error("no hazard data for line {0}")]
    MissingLine(usize),
    #[error("no load-shedding cost for line {0}")]
    MissingCls(usize),
}

/// Daily shedding cost times failure probability, duration (days) and count.
pub fn outage_cost(cls: f64, failp: f64, duration: f64, count: f64) -> Result<f64, CostError> {
    if [cls, failp, duration, count].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(CostError::BadInput("outage_cost"));
    }
    if failp > 1.0 {
        return Err(CostError::BadProbability(failp));
    }
    Ok(cls * failp * duration * count)
}

pub fn event_cost(oc: f64, rc: f64) -> Result<f64, CostError> {
    if !(oc.is_finite() && rc.is_finite() && oc >= 0.0 && rc >= 0.0) {
        return Err(CostError::BadInput("event_cost"));
    }
    Ok(oc + rc)
}

pub fn discount_factor(f: f64, d: f64) -> Result<f64, CostError> {
    if !(d > -1.0) || !f.is_finite() || !d.is_finite() {
        return Err(CostError::BadRate(d));
    }
    Ok((1.0 + f) / (1.0 + d))
}

/// `TC_n = sum_{m in T(n)} (p_m / p_n) C_m`, in one bottom-up pass.
pub fn subtree_cost(tree: &ScenarioTree, c: &[f64]) -> Result<Vec<f64>, CostError> {
    if c.len() != tree.len() {
        return Err(CostError::Shape { got: c.len(), want: tree.len() });
    }
    let nodes = tree.nodes();
    let mut tc = c.to_vec();
    for t in (1..tree.horizon()).rev() {
        for &n in tree.stage_nodes(t).expect("stage in range") {
            let p = nodes[n].prob;
            if p <= 0.0 {
                return Err(CostError::ZeroProbability(n));
            }
            let below: f64 = nodes[n].children.iter().map(|&k| nodes[k].prob * tc[k]).sum();
            tc[n] = c[n] + below / p;
        }
    }
    Ok(tc)
}

/// Per-line, per-node factor table.
pub type FactorTable = Vec<Vec<f64>>;

/// Returns `(delta_vm, delta_ug)`, each `[line][node]`. `delta_vm` is 0 at
/// nodes where no line has vegetation cost; `delta_ug` is `f64::INFINITY`
/// where the wind denominator vanishes.
pub fn criticality_factors(
    tree: &ScenarioTree,
    c_vm: &[Vec<f64>],
    c_eq: &[Vec<f64>],
    c_w: &[Vec<f64>],
) -> Result<(FactorTable, FactorTable), CostError> {
    let weighted = |c: &[Vec<f64>]| -> Result<Vec<Vec<f64>>, CostError> {
        c.iter()
            .map(|row| {
                let tc = subtree_cost(tree, row)?;
                Ok(tc.iter().zip(tree.nodes()).map(|(t, n)| t * n.prob).collect())
            })
            .collect()
    };
    let s_vm = weighted(c_vm)?;
    let s_eq = weighted(c_eq)?;
    let s_w = weighted(c_w)?;
    let nl = c_vm.len();
    let nn = tree.len();
    let mut d_vm = vec![vec![0.0; nn]; nl];
    let mut d_ug = vec![vec![0.0; nn]; nl];
    for n in 0..nn {
        let max = (0..nl).map(|l| s_vm[l][n]).fold(0.0, f64::max);
        for l in 0..nl {
            d_vm[l][n] = if max > 0.0 { s_vm[l][n] / max } else { 0.0 };
            d_ug[l][n] = if s_w[l][n] > 0.0 { s_eq[l][n] / s_w[l][n] } else { f64::INFINITY };
        }
    }
    Ok((d_vm, d_ug))
}

/// Per-line hazard and cost parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LineHazard {
    pub line_id: usize,
    /// Failure probability per hazard, indexed by [`Hazard::index`].
    pub failp: [f64; 3],
    /// Repair cost per hazard in $.
    pub repair: [f64; 3],
    pub veg_fraction: f64,
    pub ic_ug_per_mi: f64,
    pub ic_vm_per_mi: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HazardRow {
    line_id: usize,
    #[serde(default)]
    node: Option<usize>,
    rho_w: f64,
    rho_eq: f64,
    rho_vm: f64,
    rc_w_usd: f64,
    rc_eq_usd: f64,
    rc_vm_usd: f64,
    veg_fraction: f64,
    ic_ug_usd_per_mi: f64,
    ic_vm_usd_per_mi: f64,
}

/// Hazard parameters per line (network line order), with optional
/// per-node overrides.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HazardData {
    pub lines: Vec<LineHazard>,
    pub overrides: HashMap<(usize, usize), LineHazard>,
}

impl HazardData {
    pub fn from_csv(text: &str, net: &Network) -> Result<Self, CostError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut base: HashMap<usize, LineHazard> = HashMap::new();
        let mut overrides = HashMap::new();
        for (k, row) in reader.deserialize::<HazardRow>().enumerate() {
            let row_no = k + 1;
            let err = |message: String| CostError::HazardFile { row: row_no, message };
            let row = row.map_err(|e| err(e.to_string()))?;
            net.line_position(row.line_id).map_err(|e| err(e.to_string()))?;
            let h = LineHazard {
                line_id: row.line_id,
                failp: [row.rho_w, row.rho_eq, row.rho_vm],
                repair: [row.rc_w_usd, row.rc_eq_usd, row.rc_vm_usd],
                veg_fraction: row.veg_fraction,
                ic_ug_per_mi: row.ic_ug_usd_per_mi,
                ic_vm_per_mi: row.ic_vm_usd_per_mi,
            };
            validate_line(&h).map_err(err)?;
            let dup = match row.node {
                None => base.insert(row.line_id, h).is_some(),
                Some(n) => overrides.insert((row.line_id, n), h).is_some(),
            };
            if dup {
                return Err(err(format!("duplicate entry for line {}", row.line_id)));
            }
        }
        let lines = net
            .lines
            .iter()
            .map(|l| base.remove(&l.id).ok_or(CostError::MissingLine(l.id)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { lines, overrides })
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = [
            "line_id", "node", "rho_w", "rho_eq", "rho_vm", "rc_w_usd", "rc_eq_usd", "rc_vm_usd",
            "veg_fraction", "ic_ug_usd_per_mi", "ic_vm_usd_per_mi",
        ];
        w.write_record(header).expect("in-memory write");
        let mut rows: Vec<(Option<usize>, &LineHazard)> = self.lines.iter().map(|h| (None, h)).collect();
        let mut extra: Vec<_> = self.overrides.iter().collect();
        extra.sort_by_key(|((l, n), _)| (*l, *n));
        rows.extend(extra.into_iter().map(|((_, n), h)| (Some(*n), h)));
        for (node, h) in rows {
            let mut rec = vec![h.line_id.to_string(), node.map_or(String::new(), |n| n.to_string())];
            rec.extend(h.failp.iter().chain(&h.repair).map(|v| v.to_string()));
            rec.extend([h.veg_fraction, h.ic_ug_per_mi, h.ic_vm_per_mi].iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Parameters for the line at `line_pos` at tree node `node`.
    pub fn at(&self, line_pos: usize, node: usize) -> &LineHazard {
        let base = &self.lines[line_pos];
        self.overrides.get(&(base.line_id, node)).unwrap_or(base)
    }

    /// Copy with one hazard's failure probability and repair cost zeroed,
    /// so its outage and repair costs vanish while the model keeps its shape.
    pub fn without(&self, hazard: Hazard) -> Self {
        let mut out = self.clone();
        let i = hazard.index();
        for h in out.lines.iter_mut().chain(out.overrides.values_mut()) {
            h.failp[i] = 0.0;
            h.repair[i] = 0.0;
        }
        out
    }
}

fn validate_line(h: &LineHazard) -> Result<(), String> {
    for (v, what) in h.failp.iter().zip(["rho_w", "rho_eq", "rho_vm"]) {
        if !(0.0..=1.0).contains(v) {
            return Err(format!("{what} = {v} outside [0, 1]"));
        }
    }
    if !(0.0..=1.0).contains(&h.veg_fraction) {
        return Err(format!("veg_fraction = {} outside [0, 1]", h.veg_fraction));
    }
    let costs = h.repair.iter().chain([&h.ic_ug_per_mi, &h.ic_vm_per_mi]);
    if costs.into_iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err("costs must be finite and >= 0".into());
    }
    Ok(())
}

/// All per-node cost tables of a hardening instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTables {
    /// `[hazard][line][node]`.
    pub oc: [Vec<Vec<f64>>; 3],
    pub c: [Vec<Vec<f64>>; 3],
    pub tc: [Vec<Vec<f64>>; 3],
    pub delta_vm: Vec<Vec<f64>>,
    pub delta_ug: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl CostTables {
    /// Assemble from event costs `c[hazard][line][node]` (outage costs are
    /// kept for reporting only).
    pub fn from_event_costs(
        tree: &ScenarioTree,
        oc: [Vec<Vec<f64>>; 3],
        c: [Vec<Vec<f64>>; 3],
        gamma: f64,
    ) -> Result<Self, CostError> {
        let tc_of = |tab: &Vec<Vec<f64>>| -> Result<Vec<Vec<f64>>, CostError> {
            tab.iter().map(|row| subtree_cost(tree, row)).collect()
        };
        let tc = [tc_of(&c[0])?, tc_of(&c[1])?, tc_of(&c[2])?];
        let (delta_vm, delta_ug) = criticality_factors(
            tree,
            &c[Hazard::Vegetation.index()],
            &c[Hazard::Earthquake.index()],
            &c[Hazard::Wind.index()],
        )?;
        Ok(Self { oc, c, tc, delta_vm, delta_ug, gamma })
    }

    /// `cls[line position]` is the daily shedding cost used for every hazard.
    pub fn build(tree: &ScenarioTree, hazard: &HazardData, cls: &[f64], gamma: f64) -> Result<Self, CostError> {
        let nl = hazard.lines.len();
        let nn = tree.len();
        let mut oc: [Vec<Vec<f64>>; 3] = std::array::from_fn(|_| vec![vec![0.0; nn]; nl]);
        let mut c: [Vec<Vec<f64>>; 3] = std::array::from_fn(|_| vec![vec![0.0; nn]; nl]);
        for l in 0..nl {
            let cls_l = *cls.get(l).ok_or(CostError::MissingCls(hazard.lines[l].line_id))?;
            for (n, node) in tree.nodes().iter().enumerate() {
                let h = hazard.at(l, n);
                for e in Hazard::ALL {
                    let i = e.index();
                    let r = &node.realization;
                    oc[i][l][n] = outage_cost(cls_l, h.failp[i], r.xi[i], r.count[i] as f64)?;
                    c[i][l][n] = event_cost(oc[i][l][n], h.repair[i])?;
                }
            }
        }
        Self::from_event_costs(tree, oc, c, gamma)
    }

    pub fn num_lines(&self) -> usize {
        self.delta_vm.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_examples() {
        assert_eq!(outage_cost(100.0, 0.5, 2.0, 3.0).unwrap(), 300.0);
        assert_eq!(outage_cost(240_000.0, 1.0, 20.0, 1.0).unwrap(), 4_800_000.0);
        assert!(outage_cost(1.0, 1.5, 1.0, 1.0).is_err());
        assert!(outage_cost(-1.0, 0.5, 1.0, 1.0).is_err());
        assert_eq!(event_cost(300.0, 200.0).unwrap(), 500.0);
        assert!(event_cost(-1.0, 0.0).is_err());
        assert_eq!(discount_factor(0.03, 0.02).unwrap(), 1.03 / 1.02);
        assert_eq!(discount_factor(0.04, 0.04).unwrap(), 1.0);
        assert!((discount_factor(0.0, 0.05).unwrap() - 0.952381).abs() < 1e-6);
        assert!(discount_factor(0.0, -1.0).is_err());
    }
}
