//! Shared fixtures and oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use gridharden_core::cost_model::CostTables;
use gridharden_core::distflow::LoadSheddingTable;
use gridharden_core::hardening::{check_plan, evaluate_plan, Instance, Mode, Plan, PlanningParams};
use gridharden_core::network::{Bus, BusKind, Header, Line, Microturbine, Network, HOURS};
use gridharden_core::scenario_tree::{HazardParams, Node, Realization, ScenarioTree};
use gridharden_core::study::{Inputs, RunConfig};
use gridharden_core::cost_model::HazardData;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn feeder() -> Network {
    Network::load(fixture("feeder22.json")).unwrap()
}

/// Feeder inputs with the cached load-shedding table (checked against a
/// fresh computation in the DistFlow tests).
pub fn feeder_inputs() -> Inputs {
    let net = feeder();
    let hazard = HazardData::from_csv(&std::fs::read_to_string(fixture("feeder22_hazard.csv")).unwrap(), &net).unwrap();
    let table = LoadSheddingTable::from_csv(&std::fs::read_to_string(fixture("feeder22_ls.csv")).unwrap()).unwrap();
    Inputs::from_parts(net, hazard, table).unwrap()
}

/// The feeder with every microturbine removed, so islands carry no local
/// generation.
pub fn without_microturbines(net: &Network) -> Network {
    let buses = net
        .buses
        .iter()
        .map(|b| {
            let mut b = b.clone();
            if b.kind == BusKind::Microturbine {
                b.kind = if b.has_load() { BusKind::Load } else { BusKind::Junction };
            }
            b
        })
        .collect();
    Network::from_parts(net.header.clone(), buses, net.lines.clone(), Vec::new()).unwrap()
}

/// Config pointing at the feeder fixtures.
pub fn feeder_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.paths.network = Some(fixture("feeder22.json"));
    cfg.paths.hazard = Some(fixture("feeder22_hazard.csv"));
    cfg.paths.ls_table = Some(fixture("feeder22_ls.csv"));
    cfg
}

pub fn flat(mw: f64) -> Option<Vec<f64>> {
    Some(vec![mw; HOURS])
}

pub fn bus(id: usize, kind: BusKind, load: Option<Vec<f64>>) -> Bus {
    Bus { id, kind, load_profile: load, reactive_ratio: None }
}

/// Line with generous ampacity and small impedance.
pub fn line(id: usize, from: usize, to: usize) -> Line {
    Line { id, from, to, r_pu: 0.01, x_pu: 0.02, length_mi: 1.0, ampacity_sq_pu: 100.0 }
}

pub fn header() -> Header {
    Header { base_mva: 10.0, v_min_pu: 0.9, v_max_pu: 1.1 }
}

/// Root 0 and one load bus 1 with `load` MW.
pub fn two_bus(load: f64) -> Network {
    Network::from_parts(
        header(),
        vec![bus(0, BusKind::SubstationRoot, None), bus(1, BusKind::Load, flat(load))],
        vec![line(1, 0, 1)],
        vec![],
    )
    .unwrap()
}

/// Root 0 - A 1 - B 2; lines 1 (root-A) and 2 (A-B); 1 MW at B, optional MT at B.
pub fn chain(mt_mw: Option<f64>) -> Network {
    let kind_b = if mt_mw.is_some() { BusKind::Microturbine } else { BusKind::Load };
    let mts = mt_mw
        .map(|p| vec![Microturbine { bus: 2, p_max_mw: p, ramp_up_mw: p, ramp_down_mw: -p }])
        .unwrap_or_default();
    Network::from_parts(
        header(),
        vec![bus(0, BusKind::SubstationRoot, None), bus(1, BusKind::Junction, None), bus(2, kind_b, flat(1.0))],
        vec![line(1, 0, 1), line(2, 1, 2)],
        mts,
    )
    .unwrap()
}

/// Root 0 with three identical 1 MW leaves 1, 2, 3 on lines 1, 2, 3.
pub fn star() -> Network {
    Network::from_parts(
        header(),
        (0..4)
            .map(|i| if i == 0 { bus(0, BusKind::SubstationRoot, None) } else { bus(i, BusKind::Load, flat(1.0)) })
            .collect(),
        (1..4).map(|i| line(i, 0, i)).collect(),
        vec![],
    )
    .unwrap()
}

/// Random tree with every leaf on the last stage, nodes numbered stage by
/// stage, random branching in `1..=3` and random child probabilities.
pub fn random_tree(rng: &mut ChaCha8Rng, horizon: usize) -> ScenarioTree {
    let mut nodes = vec![Node {
        id: 0,
        stage: 1,
        parent: None,
        children: Vec::new(),
        prob: 1.0,
        realization: Realization::default(),
    }];
    let mut level = vec![0usize];
    for t in 2..=horizon {
        let mut next = Vec::new();
        for &p in &level {
            let k = rng.random_range(1..=3);
            let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = weights.iter().sum();
            for w in weights {
                let id = nodes.len();
                let prob = nodes[p].prob * w / total;
                nodes.push(Node { id, stage: t, parent: Some(p), children: Vec::new(), prob, realization: Realization::default() });
                nodes[p].children.push(id);
                next.push(id);
            }
        }
        level = next;
    }
    ScenarioTree::from_nodes(nodes).unwrap()
}

/// Small random planning instance with synthetic per-node costs.
pub fn random_instance(seed: u64, lines: usize, horizon: usize, branching: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = ScenarioTree::build_full(horizon, branching, &HazardParams::default(), seed, 10_000).unwrap();
    let nn = tree.len();
    let table = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<Vec<f64>> {
        (0..lines).map(|_| (0..nn).map(|_| rng.random_range(lo..hi)).collect()).collect()
    };
    let c_w = table(&mut rng, 0.0, 4e5);
    let c_eq = table(&mut rng, 0.0, 2e5);
    let c_vm = table(&mut rng, 0.0, 2e5);
    let oc = [c_w.clone(), c_eq.clone(), c_vm.clone()];
    let costs = CostTables::from_event_costs(&tree, oc, [c_w, c_eq, c_vm], 1.03 / 1.02).unwrap();
    Instance {
        line_ids: (1..=lines).collect(),
        length_mi: (0..lines).map(|_| rng.random_range(0.5..2.0)).collect(),
        ic_ug: table(&mut rng, 1e5, 8e5),
        ic_vm: table(&mut rng, 1e3, 8e4),
        veg: table(&mut rng, 0.2, 0.9),
        tree,
        costs,
    }
}

/// Random budgets that sometimes bind.
pub fn random_params(seed: u64, inst: &Instance, mode: Mode) -> PlanningParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = inst.weights();
    let mut ug_all = 0.0;
    let mut vm_all = 0.0;
    for l in 0..inst.num_lines() {
        for n in 0..inst.tree.len() {
            ug_all += w[n] * inst.length_mi[l] * inst.ic_ug[l][n];
            vm_all += w[n] * inst.length_mi[l] * inst.ic_vm[l][n];
        }
    }
    PlanningParams {
        budget_ug: ug_all * rng.random_range(0.0..0.6),
        budget_vm: vm_all * rng.random_range(0.0..0.3),
        max_ug_per_node: None,
        mode,
        ug_only: rng.random_bool(0.2),
    }
}

/// Best vegetation fractions for fixed undergrounding: a fractional
/// knapsack over the VM budget, filled greedily by saving per dollar.
fn best_beta(inst: &Instance, params: &PlanningParams, plan: &mut Plan) {
    let w = inst.weights();
    let ivm = 2;
    let mut items = Vec::new();
    for l in 0..inst.num_lines() {
        for n in 0..inst.tree.len() {
            plan.beta[l][n] = 0.0;
            let under = inst.tree.ancestors(n).unwrap().iter().any(|&m| plan.alpha[l][m]);
            let cap = if params.ug_only || under { 0.0 } else { inst.costs.delta_vm[l][n] * inst.veg[l][n] };
            let spend = w[n] * inst.length_mi[l] * inst.ic_vm[l][n];
            let value = w[n] * (inst.length_mi[l] * inst.ic_vm[l][n] - inst.costs.c[ivm][l][n]);
            if cap > 0.0 && value < 0.0 {
                items.push((value / spend, l, n, cap, spend));
            }
        }
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut left = params.budget_vm;
    for (_, l, n, cap, spend) in items {
        let take = cap.min(left / spend).max(0.0);
        plan.beta[l][n] = take;
        left -= take * spend;
    }
}

/// Exhaustive optimum over undergrounding decisions and revision stages,
/// with the vegetation fractions solved exactly for each choice.
pub fn enumerate_optimum(inst: &Instance, params: &PlanningParams) -> f64 {
    let nl = inst.num_lines();
    let nn = inst.tree.len();
    let horizon = inst.tree.horizon();
    let w = inst.weights();
    let bits = nl * nn;
    assert!(bits <= 16, "enumeration too large");
    let stages: Vec<usize> = match params.mode {
        Mode::Ats => (1..=horizon).collect(),
        Mode::Ts => vec![1],
    };
    let mut best = f64::INFINITY;
    let mut plan = Plan::empty(inst);
    for mask in 0u32..(1 << bits) {
        for l in 0..nl {
            for n in 0..nn {
                plan.alpha[l][n] = (mask >> (l * nn + n)) & 1 == 1;
            }
        }
        let spend: f64 = (0..nl)
            .flat_map(|l| (0..nn).map(move |n| (l, n)))
            .filter(|&(l, n)| plan.alpha[l][n])
            .map(|(l, n)| w[n] * inst.length_mi[l] * inst.ic_ug[l][n])
            .sum();
        if spend > params.budget_ug * (1.0 + 1e-12) {
            continue;
        }
        // Revision stages per line, as a mixed-radix counter.
        let combos = stages.len().pow(nl as u32);
        for mut code in 0..combos {
            for l in 0..nl {
                plan.revision[l] = stages[code % stages.len()];
                code /= stages.len();
            }
            for row in plan.beta.iter_mut() {
                row.iter_mut().for_each(|b| *b = 0.0);
            }
            if check_plan(inst, &plan).is_err() {
                continue;
            }
            best_beta(inst, params, &mut plan);
            let v = evaluate_plan(inst, &plan).unwrap().objective();
            best = best.min(v);
        }
    }
    best
}
