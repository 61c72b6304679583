//! Scenario trees of multi-hazard realizations and their reduction.
//!
//! Node ids are assigned breadth-first with children in left-to-right order,
//! so every stage list is ordered left to right and each subtree occupies a
//! contiguous block of its stage list. Per-node sampling uses a ChaCha stream
//! selected by node id, which makes draws independent of construction order.

use std::cmp::Ordering;
use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_NODE_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("invalid distribution parameters: {0}")]
    BadParams(String),
    #[error("tree would have {nodes} nodes, above the cap of {cap}")]
    TooLarge { nodes: u128, cap: usize },
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("empty scenario fan")]
    EmptyFan,
    #[error("invalid tree: {0}")]
    Invalid(String),
    #[error("target count {k} out of range 1..={n}")]
    OutOfRange { k: usize, n: usize },
    #[error("tree file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hazard {
    Wind,
    Earthquake,
    Vegetation,
}

impl Hazard {
    pub const ALL: [Hazard; 3] = [Hazard::Wind, Hazard::Earthquake, Hazard::Vegetation];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            Hazard::Wind => "W",
            Hazard::Earthquake => "EQ",
            Hazard::Vegetation => "VM",
        }
    }
}

/// Hazard outcome at one node: outage durations in days and yearly event
/// counts, indexed by [`Hazard::index`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Realization {
    pub xi: [f64; 3],
    pub count: [u64; 3],
}

impl Realization {
    /// Bitwise equality, used to merge scenario prefixes.
    pub fn same_as(&self, other: &Self) -> bool {
        self.count == other.count && self.xi.iter().zip(&other.xi).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    fn features(&self) -> [f64; 6] {
        [
            self.xi[0],
            self.xi[1],
            self.xi[2],
            self.count[0] as f64,
            self.count[1] as f64,
            self.count[2] as f64,
        ]
    }
}

/// Lognormal durations (given by mean and underlying-normal sigma) and
/// Poisson counts with rate `rate0 * (1 + trend)^(year - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HazardParams {
    pub mean_days: [f64; 3],
    pub sigma: [f64; 3],
    pub rate0: [f64; 3],
    pub trend: [f64; 3],
}

impl Default for HazardParams {
    fn default() -> Self {
        Self {
            mean_days: [25.5 / 24.0, 20.0, 3.0 / 24.0],
            sigma: [0.5; 3],
            rate0: [2.0, 0.1, 4.0],
            trend: [0.03, 0.0, 0.0],
        }
    }
}

impl HazardParams {
    pub fn validate(&self) -> Result<(), TreeError> {
        for e in Hazard::ALL {
            let i = e.index();
            let (m, s, r, g) = (self.mean_days[i], self.sigma[i], self.rate0[i], self.trend[i]);
            if !(m.is_finite() && m > 0.0) {
                return Err(TreeError::BadParams(format!("{} mean must be > 0, got {m}", e.code())));
            }
            if !(s.is_finite() && s >= 0.0) {
                return Err(TreeError::BadParams(format!("{} sigma must be >= 0, got {s}", e.code())));
            }
            if !(r.is_finite() && r >= 0.0) {
                return Err(TreeError::BadParams(format!("{} rate must be >= 0, got {r}", e.code())));
            }
            if !(g.is_finite() && g > -1.0) {
                return Err(TreeError::BadParams(format!("{} trend must be > -1, got {g}", e.code())));
            }
        }
        Ok(())
    }

    pub fn rate(&self, hazard: Hazard, year: usize) -> f64 {
        let i = hazard.index();
        self.rate0[i] * (1.0 + self.trend[i]).powi(year as i32 - 1)
    }
}

pub fn sample_realization<R: Rng + ?Sized>(
    year: usize,
    params: &HazardParams,
    rng: &mut R,
) -> Result<Realization, TreeError> {
    if year == 0 {
        return Err(TreeError::BadParams("year is 1-based".into()));
    }
    params.validate()?;
    let mut out = Realization::default();
    for e in Hazard::ALL {
        let i = e.index();
        let (mean, sigma) = (params.mean_days[i], params.sigma[i]);
        out.xi[i] = if sigma == 0.0 {
            mean
        } else {
            let mu = mean.ln() - 0.5 * sigma * sigma;
            LogNormal::new(mu, sigma)
                .map_err(|err| TreeError::BadParams(err.to_string()))?
                .sample(rng)
        };
        let rate = params.rate(e, year);
        out.count[i] = if rate == 0.0 {
            0
        } else {
            let d: Poisson<f64> = Poisson::new(rate).map_err(|err| TreeError::BadParams(err.to_string()))?;
            d.sample(rng) as u64
        };
    }
    Ok(out)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub stage: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub prob: f64,
    pub realization: Realization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    nodes: Vec<Node>,
    /// `stages[t - 1]` lists S_t left to right.
    stages: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub prob: f64,
    pub path: Vec<Realization>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioFan {
    pub scenarios: Vec<Scenario>,
}

const PROB_TOL: f64 = 1e-9;

impl ScenarioFan {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.scenarios.first().map_or(0, |s| s.path.len())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.prob).collect()
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        let t = self.horizon();
        if self.scenarios.is_empty() {
            return Err(TreeError::EmptyFan);
        }
        if t == 0 || self.scenarios.iter().any(|s| s.path.len() != t) {
            return Err(TreeError::Invalid("scenario paths must share one nonzero length".into()));
        }
        if self.scenarios.iter().any(|s| !(s.prob.is_finite() && s.prob >= 0.0)) {
            return Err(TreeError::Invalid("scenario probabilities must be >= 0".into()));
        }
        let total: f64 = self.scenarios.iter().map(|s| s.prob).sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(TreeError::Invalid(format!("scenario probabilities sum to {total}")));
        }
        Ok(())
    }

    /// `count` independent paths sharing the stage-1 realization, each with
    /// probability `1 / count`.
    pub fn sample(
        horizon: usize,
        count: usize,
        params: &HazardParams,
        seed: u64,
    ) -> Result<Self, TreeError> {
        if horizon == 0 || count == 0 {
            return Err(TreeError::Invalid("horizon and path count must be >= 1".into()));
        }
        let root = sample_realization(1, params, &mut stream_rng(seed, 0))?;
        let mut scenarios = Vec::with_capacity(count);
        for s in 0..count {
            let mut path = Vec::with_capacity(horizon);
            path.push(root);
            for t in 2..=horizon {
                let stream = ((s as u64 + 1) << 20) | t as u64;
                path.push(sample_realization(t, params, &mut stream_rng(seed, stream))?);
            }
            scenarios.push(Scenario { prob: 1.0 / count as f64, path });
        }
        Ok(Self { scenarios })
    }
}

impl ScenarioTree {
    /// Complete `branching`-ary tree over `horizon` stages with equiprobable
    /// children and independently sampled node realizations.
    pub fn build_full(
        horizon: usize,
        branching: usize,
        params: &HazardParams,
        seed: u64,
        node_cap: usize,
    ) -> Result<Self, TreeError> {
        if horizon == 0 || branching == 0 {
            return Err(TreeError::Invalid("horizon and branching must be >= 1".into()));
        }
        params.validate()?;
        let mut total: u128 = 0;
        let mut width: u128 = 1;
        for _ in 0..horizon {
            total += width;
            if total > node_cap as u128 {
                return Err(TreeError::TooLarge { nodes: total, cap: node_cap });
            }
            width *= branching as u128;
        }
        let total = total as usize;
        let mut nodes: Vec<Node> = Vec::with_capacity(total);
        let mut stages = vec![vec![0usize]];
        nodes.push(Node {
            id: 0,
            stage: 1,
            parent: None,
            children: Vec::new(),
            prob: 1.0,
            realization: sample_realization(1, params, &mut stream_rng(seed, 0))?,
        });
        for t in 2..=horizon {
            let mut level = Vec::new();
            for &p in &stages[t - 2] {
                for _ in 0..branching {
                    let id = nodes.len();
                    let prob = nodes[p].prob / branching as f64;
                    let realization = sample_realization(t, params, &mut stream_rng(seed, id as u64))?;
                    nodes.push(Node { id, stage: t, parent: Some(p), children: Vec::new(), prob, realization });
                    nodes[p].children.push(id);
                    level.push(id);
                }
            }
            stages.push(level);
        }
        Ok(Self { nodes, stages })
    }

    /// Build from explicit node records (ids `0..n`, parents listed), checking
    /// every structural and probability invariant.
    pub fn from_nodes(mut nodes: Vec<Node>) -> Result<Self, TreeError> {
        if nodes.is_empty() {
            return Err(TreeError::Invalid("no nodes".into()));
        }
        for (k, n) in nodes.iter().enumerate() {
            if n.id != k {
                return Err(TreeError::Invalid(format!("node ids must be 0..n in order; found {} at {k}", n.id)));
            }
        }
        for n in nodes.iter_mut() {
            n.children.clear();
        }
        let mut root = None;
        for k in 0..nodes.len() {
            match nodes[k].parent {
                None => {
                    if root.replace(k).is_some() {
                        return Err(TreeError::Invalid("more than one root".into()));
                    }
                }
                Some(p) => {
                    if p >= nodes.len() || p == k {
                        return Err(TreeError::Invalid(format!("node {k} has bad parent {p}")));
                    }
                    nodes[p].children.push(k);
                }
            }
        }
        let root = root.ok_or_else(|| TreeError::Invalid("no root".into()))?;
        if nodes[root].stage != 1 || (nodes[root].prob - 1.0).abs() > PROB_TOL {
            return Err(TreeError::Invalid("root must have stage 1 and probability 1".into()));
        }
        let mut stages: Vec<Vec<usize>> = Vec::new();
        let mut queue = VecDeque::from([root]);
        let mut seen = 0;
        while let Some(k) = queue.pop_front() {
            seen += 1;
            let t = nodes[k].stage;
            if stages.len() < t {
                stages.resize(t, Vec::new());
            }
            stages[t - 1].push(k);
            let kids = nodes[k].children.clone();
            let mut sum = 0.0;
            for &c in &kids {
                if nodes[c].stage != t + 1 {
                    return Err(TreeError::Invalid(format!("node {c} stage must be {}", t + 1)));
                }
                if !(nodes[c].prob > 0.0) {
                    return Err(TreeError::Invalid(format!("node {c} has nonpositive probability")));
                }
                sum += nodes[c].prob;
                queue.push_back(c);
            }
            if !kids.is_empty() && (sum - nodes[k].prob).abs() > PROB_TOL {
                return Err(TreeError::Invalid(format!(
                    "children of node {k} sum to {sum}, parent has {}",
                    nodes[k].prob
                )));
            }
        }
        if seen != nodes.len() {
            return Err(TreeError::Invalid("nodes unreachable from the root (cycle)".into()));
        }
        let horizon = stages.len();
        if nodes.iter().any(|n| n.children.is_empty() && n.stage != horizon) {
            return Err(TreeError::Invalid("every leaf must sit at the last stage".into()));
        }
        let tree = Self { nodes, stages };
        for (t, s) in tree.stage_probability_sums().iter().enumerate() {
            if (s - 1.0).abs() > PROB_TOL {
                return Err(TreeError::Invalid(format!("stage {} probabilities sum to {s}", t + 1)));
            }
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn root(&self) -> usize {
        self.stages[0][0]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, n: usize) -> Result<&Node, TreeError> {
        self.nodes.get(n).ok_or(TreeError::UnknownNode(n))
    }

    pub fn parent(&self, n: usize) -> Result<Option<usize>, TreeError> {
        Ok(self.node(n)?.parent)
    }

    pub fn children(&self, n: usize) -> Result<&[usize], TreeError> {
        Ok(&self.node(n)?.children)
    }

    /// Path from the root down to `n`, both included.
    pub fn ancestors(&self, n: usize) -> Result<Vec<usize>, TreeError> {
        let mut path = vec![n];
        let mut cur = self.node(n)?.parent;
        while let Some(p) = cur {
            path.push(p);
            cur = self.nodes[p].parent;
        }
        path.reverse();
        Ok(path)
    }

    /// `n` and all its descendants in preorder.
    pub fn subtree(&self, n: usize) -> Result<Vec<usize>, TreeError> {
        self.node(n)?;
        let mut out = Vec::new();
        let mut stack = vec![n];
        while let Some(k) = stack.pop() {
            out.push(k);
            stack.extend(self.nodes[k].children.iter().rev());
        }
        Ok(out)
    }

    /// S_t, left to right. Stages are 1-based.
    pub fn stage_nodes(&self, t: usize) -> Result<&[usize], TreeError> {
        if t == 0 || t > self.horizon() {
            return Err(TreeError::Invalid(format!("stage {t} outside 1..={}", self.horizon())));
        }
        Ok(&self.stages[t - 1])
    }

    pub fn leaves(&self) -> &[usize] {
        self.stages.last().expect("nonempty tree")
    }

    pub fn stage_probability_sums(&self) -> Vec<f64> {
        self.stages
            .iter()
            .map(|s| s.iter().map(|&n| self.nodes[n].prob).sum())
            .collect()
    }

    pub fn to_fan(&self) -> ScenarioFan {
        let scenarios = self
            .leaves()
            .iter()
            .map(|&leaf| Scenario {
                prob: self.nodes[leaf].prob,
                path: self
                    .ancestors(leaf)
                    .expect("leaf exists")
                    .into_iter()
                    .map(|n| self.nodes[n].realization)
                    .collect(),
            })
            .collect();
        ScenarioFan { scenarios }
    }

    /// Merge scenario prefixes with bitwise-identical realizations into a tree.
    pub fn rebuild(fan: &ScenarioFan) -> Result<Self, TreeError> {
        fan.validate()?;
        let first = &fan.scenarios[0].path[0];
        if fan.scenarios.iter().any(|s| !s.path[0].same_as(first)) {
            return Err(TreeError::Invalid("scenarios disagree at stage 1; a tree needs one root".into()));
        }
        let horizon = fan.horizon();
        let mut nodes = vec![Node {
            id: 0,
            stage: 1,
            parent: None,
            children: Vec::new(),
            prob: 0.0,
            realization: *first,
        }];
        // Groups of scenario indices per node of the current stage.
        let mut groups: Vec<(usize, Vec<usize>)> = vec![(0, (0..fan.len()).collect())];
        let mut stages = vec![vec![0]];
        for t in 1..horizon {
            let mut next = Vec::new();
            let mut level = Vec::new();
            for (node, members) in &groups {
                let mut split: Vec<(Realization, Vec<usize>)> = Vec::new();
                for &s in members {
                    let r = fan.scenarios[s].path[t];
                    match split.iter_mut().find(|(x, _)| x.same_as(&r)) {
                        Some((_, v)) => v.push(s),
                        None => split.push((r, vec![s])),
                    }
                }
                for (r, v) in split {
                    let id = nodes.len();
                    nodes.push(Node {
                        id,
                        stage: t + 1,
                        parent: Some(*node),
                        children: Vec::new(),
                        prob: 0.0,
                        realization: r,
                    });
                    nodes[*node].children.push(id);
                    level.push(id);
                    next.push((id, v));
                }
            }
            groups = next;
            stages.push(level);
        }
        for (leaf, members) in &groups {
            nodes[*leaf].prob = members.iter().map(|&s| fan.scenarios[s].prob).sum();
        }
        for t in (0..horizon.saturating_sub(1)).rev() {
            for &n in &stages[t] {
                nodes[n].prob = nodes[n].children.iter().map(|&c| nodes[c].prob).sum();
            }
        }
        Ok(Self { nodes, stages })
    }

    pub fn to_json(&self) -> String {
        let records: Vec<NodeRecord> = self
            .nodes
            .iter()
            .map(|n| NodeRecord {
                id: n.id,
                stage: n.stage,
                parent: n.parent,
                prob: n.prob,
                xi_w: n.realization.xi[0],
                xi_eq: n.realization.xi[1],
                xi_vm: n.realization.xi[2],
                n_w: n.realization.count[0],
                n_eq: n.realization.count[1],
                n_vm: n.realization.count[2],
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&TreeFile { nodes: records }).expect("tree serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let file: TreeFile = serde_json::from_str(text).map_err(|e| TreeError::Parse(e.to_string()))?;
        let nodes = file
            .nodes
            .into_iter()
            .map(|r| Node {
                id: r.id,
                stage: r.stage,
                parent: r.parent,
                children: Vec::new(),
                prob: r.prob,
                realization: Realization {
                    xi: [r.xi_w, r.xi_eq, r.xi_vm],
                    count: [r.n_w, r.n_eq, r.n_vm],
                },
            })
            .collect();
        Self::from_nodes(nodes)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: usize,
    stage: usize,
    parent: Option<usize>,
    prob: f64,
    xi_w: f64,
    xi_eq: f64,
    xi_vm: f64,
    n_w: u64,
    n_eq: u64,
    n_vm: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    nodes: Vec<NodeRecord>,
}

/// Scenario distance: sum over stages of the Euclidean distance between the
/// six realization fields, optionally standardized per field over the fan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Standardized,
    Raw,
}

pub fn distance_matrix(fan: &ScenarioFan, metric: Metric) -> Vec<Vec<f64>> {
    let n = fan.len();
    let t = fan.horizon();
    let mut scale = [1.0f64; 6];
    let mut shift = [0.0f64; 6];
    if metric == Metric::Standardized {
        let count = (n * t) as f64;
        for f in 0..6 {
            let vals = fan.scenarios.iter().flat_map(|s| s.path.iter().map(move |r| r.features()[f]));
            let mean = vals.clone().sum::<f64>() / count;
            let var = vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
            shift[f] = mean;
            // Constant fields carry no information; drop them.
            scale[f] = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
        }
    }
    let z: Vec<Vec<[f64; 6]>> = fan
        .scenarios
        .iter()
        .map(|s| {
            s.path
                .iter()
                .map(|r| {
                    let mut f = r.features();
                    for k in 0..6 {
                        f[k] = (f[k] - shift[k]) * scale[k];
                    }
                    f
                })
                .collect()
        })
        .collect();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = z[i]
                .iter()
                .zip(&z[j])
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                .sum();
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Outcome of a reduction over `n` scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionPlan {
    /// Surviving scenario indices, ascending.
    pub kept: Vec<usize>,
    /// Final probabilities of the survivors, aligned with `kept`.
    pub probs: Vec<f64>,
    /// For every original scenario, the survivor that received its mass.
    pub assignment: Vec<usize>,
    /// Sum of the per-step costs the greedy rule minimized (for backward
    /// reduction: current probability times distance at deletion time).
    pub greedy_cost: f64,
}

impl ReductionPlan {
    /// Cost of moving every original scenario's mass to its assigned survivor.
    pub fn transport_cost(&self, probs: &[f64], dist: &[Vec<f64>]) -> f64 {
        self.assignment
            .iter()
            .enumerate()
            .map(|(j, &i)| probs[j] * dist[j][i])
            .sum()
    }
}

fn nearest(j: usize, alive: &[bool], dist: &[Vec<f64>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in 0..alive.len() {
        if i == j || !alive[i] {
            continue;
        }
        if best.is_none_or(|b| dist[j][i] < dist[j][b]) {
            best = Some(i);
        }
    }
    best
}

fn check_k(k: usize, n: usize) -> Result<(), TreeError> {
    if k == 0 || k > n {
        return Err(TreeError::OutOfRange { k, n });
    }
    Ok(())
}

/// Greedy single-deletion backward reduction. Each step deletes the survivor
/// minimizing `p_j * min_i d(i, j)` and moves its mass to that nearest
/// survivor. On ties the higher index is deleted, so lower indices survive;
/// nearest-survivor ties go to the lower index.
pub fn backward_reduction(probs: &[f64], dist: &[Vec<f64>], k: usize) -> Result<ReductionPlan, TreeError> {
    let n = probs.len();
    check_k(k, n)?;
    let mut p = probs.to_vec();
    let mut alive = vec![true; n];
    let mut nn: Vec<Option<usize>> = (0..n).map(|j| nearest(j, &alive, dist)).collect();
    let mut target: Vec<usize> = (0..n).collect();
    let mut greedy_cost = 0.0;
    for _ in k..n {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..n {
            let (true, Some(i)) = (alive[j], nn[j]) else { continue };
            let cost = p[j] * dist[j][i];
            let better = match best {
                None => true,
                Some((c, b)) => match cost.total_cmp(&c) {
                    Ordering::Less => true,
                    Ordering::Equal => j > b,
                    Ordering::Greater => false,
                },
            };
            if better {
                best = Some((cost, j));
            }
        }
        let (cost, j) = best.expect("at least two survivors while deleting");
        let i = nn[j].expect("nearest survivor exists");
        greedy_cost += cost;
        alive[j] = false;
        p[i] += p[j];
        p[j] = 0.0;
        for t in target.iter_mut() {
            if *t == j {
                *t = i;
            }
        }
        for m in 0..n {
            if alive[m] && nn[m] == Some(j) {
                nn[m] = nearest(m, &alive, dist);
            }
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&j| alive[j]).collect();
    let probs = kept.iter().map(|&j| p[j]).collect();
    Ok(ReductionPlan { kept, probs, assignment: target, greedy_cost })
}

/// Greedy forward selection: repeatedly add the scenario that most lowers
/// `sum_j p_j min_{i in selected} d(i, j)`, lowest index on ties; unselected
/// mass then moves to its nearest selected scenario.
pub fn forward_selection(probs: &[f64], dist: &[Vec<f64>], k: usize) -> Result<ReductionPlan, TreeError> {
    let n = probs.len();
    check_k(k, n)?;
    let mut selected = vec![false; n];
    let mut md = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            if selected[i] {
                continue;
            }
            let cost: f64 = (0..n)
                .filter(|&j| !selected[j] && j != i)
                .map(|j| probs[j] * md[j].min(dist[j][i]))
                .sum();
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, i));
            }
        }
        let (_, i) = best.expect("unselected scenario exists");
        selected[i] = true;
        for j in 0..n {
            md[j] = md[j].min(dist[j][i]);
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&j| selected[j]).collect();
    let mut assignment: Vec<usize> = (0..n).collect();
    let mut greedy_cost = 0.0;
    for j in 0..n {
        if selected[j] {
            continue;
        }
        let mut best = kept[0];
        for &i in &kept[1..] {
            if dist[j][i] < dist[j][best] {
                best = i;
            }
        }
        assignment[j] = best;
        greedy_cost += probs[j] * dist[j][best];
    }
    let mut p = vec![0.0; n];
    for j in 0..n {
        p[assignment[j]] += probs[j];
    }
    let probs = kept.iter().map(|&i| p[i]).collect();
    Ok(ReductionPlan { kept, probs, assignment, greedy_cost })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pruning {
    Backward,
    Forward,
    None,
}

fn apply_plan(fan: &ScenarioFan, plan: &ReductionPlan) -> ScenarioFan {
    ScenarioFan {
        scenarios: plan
            .kept
            .iter()
            .zip(&plan.probs)
            .map(|(&i, &p)| Scenario { prob: p, path: fan.scenarios[i].path.clone() })
            .collect(),
    }
}

pub fn backward_reduce(fan: &ScenarioFan, k: usize, metric: Metric) -> Result<(ScenarioFan, ReductionPlan), TreeError> {
    fan.validate()?;
    let plan = backward_reduction(&fan.probabilities(), &distance_matrix(fan, metric), k)?;
    Ok((apply_plan(fan, &plan), plan))
}

pub fn forward_select(fan: &ScenarioFan, k: usize, metric: Metric) -> Result<(ScenarioFan, ReductionPlan), TreeError> {
    fan.validate()?;
    let plan = forward_selection(&fan.probabilities(), &distance_matrix(fan, metric), k)?;
    Ok((apply_plan(fan, &plan), plan))
}

/// Reduce with the chosen method (`None` returns the fan unchanged).
pub fn reduce(fan: &ScenarioFan, k: usize, method: Pruning, metric: Metric) -> Result<ScenarioFan, TreeError> {
    match method {
        Pruning::Backward => backward_reduce(fan, k, metric).map(|r| r.0),
        Pruning::Forward => forward_select(fan, k, metric).map(|r| r.0),
        Pruning::None => {
            fan.validate()?;
            Ok(fan.clone())
        }
    }
}
