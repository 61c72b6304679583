//! Study runner: configuration, the end-to-end pipeline (network and hazard
//! data, load-shedding table, scenario tree, cost tables, MILP) and the
//! comparison studies built on it.
//!
//! Chained runs reuse earlier optima as starting incumbents: the two-stage
//! plan seeds the adaptive run, a smaller budget's plan seeds the next
//! budget, the UG-only plan seeds the joint run and the wind-only plan seeds
//! the multi-hazard run. Each seed is feasible for the run it starts, so the
//! dominance relations the studies report hold regardless of the relative
//! optimality gap. Independent runs execute in parallel; results are
//! assembled in configuration order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gridharden_milp::{MilpOptions, Status};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost_model::{discount_factor, CostError, CostTables, HazardData};
use crate::distflow::{
    ls_cost_table, parse_cases, single_line_cases, DispatchOptions, DistFlowError, LoadSheddingTable,
};
use crate::hardening::{
    evaluate_plan, relative_gain, solve_hardening, Breakdown, HardeningError, Instance, Mode, Plan,
    PlanningParams,
};
use crate::network::{Network, NetworkError};
use crate::scenario_tree::{reduce, Hazard, HazardParams, Metric, Pruning, ScenarioFan, ScenarioTree, TreeError};

/// Smallest vegetation fraction listed per line in reports.
const VM_REPORT_MIN: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("network: {0}")]
    Network(#[from] NetworkError),
    #[error("scenario tree: {0}")]
    Tree(#[from] TreeError),
    #[error("cost model: {0}")]
    Cost(#[from] CostError),
    #[error("load shedding: {0}")]
    DistFlow(#[from] DistFlowError),
    #[error("run {run}: {source}")]
    Hardening { run: String, source: HardeningError },
}

impl StudyError {
    /// The solver stopped on a time, node or iteration limit.
    pub fn is_solver_limit(&self) -> bool {
        matches!(
            self,
            StudyError::Hardening { source: HardeningError::Status { status, .. }, .. } if status.is_limit()
        )
    }

    /// Bad configuration or unreadable/invalid input data.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            StudyError::Config(_)
                | StudyError::Io { .. }
                | StudyError::Toml(_)
                | StudyError::Network(_)
                | StudyError::Cost(CostError::HazardFile { .. } | CostError::MissingLine(_))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Single,
    BudgetSweep,
    TsVsAts,
    HazardAblation,
    StrategyAblation,
    TreeSize,
    PruningCompare,
    FullVsPruned,
}

impl StudyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyKind::Single => "single",
            StudyKind::BudgetSweep => "budget-sweep",
            StudyKind::TsVsAts => "ts-vs-ats",
            StudyKind::HazardAblation => "hazard-ablation",
            StudyKind::StrategyAblation => "strategy-ablation",
            StudyKind::TreeSize => "tree-size",
            StudyKind::PruningCompare => "pruning-compare",
            StudyKind::FullVsPruned => "full-vs-pruned",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub network: Option<PathBuf>,
    pub hazard: Option<PathBuf>,
    /// Outage cases file; single-line cases are used when absent.
    pub cases: Option<PathBuf>,
    /// Precomputed load-shedding table (as written by `lscost`).
    pub ls_table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Economics {
    /// Value of energy not served, $/MWh.
    pub c_ens: f64,
    /// Inflation rate.
    pub f: f64,
    /// Discount rate.
    pub d: f64,
}

impl Default for Economics {
    fn default() -> Self {
        Self { c_ens: 10_000.0, f: 0.03, d: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    /// Undergrounding budgets in $; single runs use the first entry.
    pub ug: Vec<f64>,
    pub vm: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { ug: vec![27e6, 31e6, 35e6, 39e6, 43e6], vm: 430_000.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeKind {
    /// Independent sampled paths sharing the root, then reduced.
    Fan,
    /// Complete `branching`-ary tree, reduced when `scenarios` is smaller
    /// than its leaf count.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeConfig {
    pub kind: TreeKind,
    pub branching: usize,
    /// Paths sampled before reduction (fan trees only).
    pub source_scenarios: usize,
    /// Scenario count after reduction.
    pub scenarios: usize,
    pub pruning: Pruning,
    pub metric: Metric,
    pub seed: u64,
    pub node_cap: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            kind: TreeKind::Fan,
            branching: 2,
            source_scenarios: 64,
            scenarios: 16,
            pruning: Pruning::Backward,
            metric: Metric::Standardized,
            seed: 1,
            node_cap: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub gap: f64,
    /// Per-run wall-clock limit in seconds.
    pub time_limit_s: Option<f64>,
    pub node_limit: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { gap: 1e-4, time_limit_s: None, node_limit: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeSizeConfig {
    pub scenario_counts: Vec<usize>,
}

impl Default for TreeSizeConfig {
    fn default() -> Self {
        Self { scenario_counts: vec![4, 8, 12, 16] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FullVsPrunedConfig {
    pub horizons: Vec<usize>,
    /// Branching of the larger full tree that is pruned down to the leaf
    /// count of the `tree.branching`-ary tree.
    pub source_branching: usize,
}

impl Default for FullVsPrunedConfig {
    fn default() -> Self {
        Self { horizons: vec![6, 7, 8, 9], source_branching: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub study: StudyKind,
    pub paths: Paths,
    pub economics: Economics,
    pub budgets: Budgets,
    pub horizon: usize,
    pub tree: TreeConfig,
    /// Planning modes; studies with a single mode column use the first.
    pub modes: Vec<Mode>,
    pub max_ug_per_node: Option<usize>,
    pub solver: SolverConfig,
    pub hazard_params: HazardParams,
    pub tree_size: TreeSizeConfig,
    pub full_vs_pruned: FullVsPrunedConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            study: StudyKind::Single,
            paths: Paths::default(),
            economics: Economics::default(),
            budgets: Budgets::default(),
            horizon: 30,
            tree: TreeConfig::default(),
            modes: vec![Mode::Ats, Mode::Ts],
            max_ug_per_node: None,
            solver: SolverConfig::default(),
            hazard_params: HazardParams::default(),
            tree_size: TreeSizeConfig::default(),
            full_vs_pruned: FullVsPrunedConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse TOML and resolve relative input paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, StudyError> {
        let mut cfg: RunConfig = toml::from_str(text)?;
        for p in [&mut cfg.paths.network, &mut cfg.paths.hazard, &mut cfg.paths.cases, &mut cfg.paths.ls_table]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, StudyError> {
        let text = read(path)?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        let bad = |m: &str| Err(StudyError::Config(m.into()));
        let e = &self.economics;
        if !(e.c_ens.is_finite() && e.c_ens >= 0.0) {
            return bad("economics.c_ens must be finite and >= 0");
        }
        if self.budgets.ug.is_empty() {
            return bad("budgets.ug must list at least one budget");
        }
        if self.budgets.ug.iter().chain([&self.budgets.vm]).any(|b| !(b.is_finite() && *b >= 0.0)) {
            return bad("budgets must be finite and >= 0");
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1");
        }
        if self.modes.is_empty() {
            return bad("modes must name at least one of ats, ts");
        }
        let t = &self.tree;
        if t.branching == 0 || t.scenarios == 0 || t.source_scenarios == 0 {
            return bad("tree.branching, tree.scenarios and tree.source_scenarios must be >= 1");
        }
        if !(self.solver.gap.is_finite() && self.solver.gap >= 0.0) {
            return bad("solver.gap must be finite and >= 0");
        }
        if self.solver.time_limit_s.is_some_and(|s| !(s.is_finite() && s > 0.0)) {
            return bad("solver.time_limit_s must be > 0");
        }
        if self.tree_size.scenario_counts.contains(&0) {
            return bad("tree_size.scenario_counts must be >= 1");
        }
        if self.full_vs_pruned.horizons.contains(&0) || self.full_vs_pruned.source_branching == 0 {
            return bad("full_vs_pruned horizons and source_branching must be >= 1");
        }
        self.hazard_params.validate()?;
        Ok(())
    }

    pub fn milp_options(&self) -> MilpOptions {
        let mut opts = MilpOptions { gap_tol: self.solver.gap, ..Default::default() };
        opts.time_limit = self.solver.time_limit_s.map(Duration::from_secs_f64);
        if let Some(n) = self.solver.node_limit {
            opts.node_limit = n;
        }
        opts
    }

    pub fn gamma(&self) -> Result<f64, StudyError> {
        Ok(discount_factor(self.economics.f, self.economics.d)?)
    }

    fn params(&self, mode: Mode, budget_ug: f64) -> PlanningParams {
        PlanningParams {
            budget_ug,
            budget_vm: self.budgets.vm,
            max_ug_per_node: self.max_ug_per_node,
            mode,
            ug_only: false,
        }
    }
}

fn read(path: &Path) -> Result<String, StudyError> {
    std::fs::read_to_string(path).map_err(|source| StudyError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<(), StudyError> {
    std::fs::write(path, text).map_err(|source| StudyError::Io { path: path.to_path_buf(), source })
}

/// Build the scenario tree described by `tc` over `horizon` stages.
pub fn build_tree(tc: &TreeConfig, horizon: usize, params: &HazardParams) -> Result<ScenarioTree, TreeError> {
    match tc.kind {
        TreeKind::Fan => {
            let fan = ScenarioFan::sample(horizon, tc.source_scenarios, params, tc.seed)?;
            let k = tc.scenarios.min(fan.len());
            ScenarioTree::rebuild(&reduce(&fan, k, tc.pruning, tc.metric)?)
        }
        TreeKind::Full => {
            let full = ScenarioTree::build_full(horizon, tc.branching, params, tc.seed, tc.node_cap)?;
            if tc.pruning == Pruning::None || tc.scenarios >= full.leaves().len() {
                return Ok(full);
            }
            ScenarioTree::rebuild(&reduce(&full.to_fan(), tc.scenarios, tc.pruning, tc.metric)?)
        }
    }
}

/// Network, hazard data and per-line daily shedding costs.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub net: Network,
    pub hazard: HazardData,
    pub ls_table: LoadSheddingTable,
    /// Daily shedding cost per line, in network line order.
    pub cls: Vec<f64>,
}

impl Inputs {
    pub fn from_parts(net: Network, hazard: HazardData, ls_table: LoadSheddingTable) -> Result<Self, StudyError> {
        let cls = net
            .lines
            .iter()
            .map(|l| {
                ls_table
                    .cls(l.id)
                    .ok_or_else(|| StudyError::Config(format!("load-shedding table has no entry for line {}", l.id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { net, hazard, ls_table, cls })
    }

    /// Read the configured files, computing the shedding table when no
    /// precomputed one is given.
    pub fn load(cfg: &RunConfig) -> Result<Self, StudyError> {
        let need = |p: &Option<PathBuf>, what: &str| {
            p.clone().ok_or_else(|| StudyError::Config(format!("paths.{what} is required")))
        };
        let net = Network::from_json(&read(&need(&cfg.paths.network, "network")?)?)?;
        let hazard = HazardData::from_csv(&read(&need(&cfg.paths.hazard, "hazard")?)?, &net)?;
        let ls_table = match &cfg.paths.ls_table {
            Some(p) => LoadSheddingTable::from_csv(&read(p)?)?,
            None => {
                let cases = match &cfg.paths.cases {
                    Some(p) => parse_cases(&read(p)?)?,
                    None => single_line_cases(&net),
                };
                let opts = DispatchOptions { c_ens: cfg.economics.c_ens, ..Default::default() };
                ls_cost_table(&net, &cases, &opts)?
            }
        };
        Self::from_parts(net, hazard, ls_table)
    }

    pub fn instance(&self, tree: ScenarioTree, hazard: &HazardData, gamma: f64) -> Result<Instance, StudyError> {
        let costs = CostTables::build(&tree, hazard, &self.cls, gamma)?;
        Instance::new(tree, &self.net, hazard, costs).map_err(|source| StudyError::Hardening { run: "instance".into(), source })
    }
}

/// Decisions on one line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineDecision {
    pub line_id: usize,
    /// Tree nodes at which the line is undergrounded.
    pub ug_nodes: Vec<usize>,
    pub revision_year: usize,
    /// `(node, beta)` for every node with vegetation management.
    pub vm: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSummary {
    pub status: String,
    pub nodes: usize,
    pub iterations: usize,
    pub best_bound: f64,
    pub gap: f64,
}

/// One planning run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub label: String,
    pub mode: Mode,
    pub budget_ug: f64,
    pub budget_vm: f64,
    pub ug_only: bool,
    /// `all` or `no-earthquake` (the hazard set used for planning).
    pub hazards: String,
    pub horizon: usize,
    pub tree_nodes: usize,
    pub tree_scenarios: usize,
    pub objective_usd: f64,
    pub breakdown: Breakdown,
    /// Objective of this plan under the full (all-hazard) costs, when the
    /// run planned with a reduced hazard set.
    pub evaluated_full_usd: Option<f64>,
    pub ug_lines: Vec<usize>,
    pub per_line: Vec<LineDecision>,
    pub solver: SolverSummary,
    #[serde(skip)]
    pub seconds: f64,
    #[serde(skip)]
    pub plan: Plan,
}

/// Study table; timing columns go to the CSV and text outputs only so that
/// the JSON report is reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    #[serde(skip)]
    pub time_columns: Vec<String>,
    #[serde(skip)]
    pub time_rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&str], time_columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            time_columns: time_columns.iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        }
    }

    fn push(&mut self, row: Vec<String>, times: Vec<f64>) {
        self.rows.push(row);
        self.time_rows.push(times);
    }

    fn full_rows(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = self.columns.iter().chain(&self.time_columns).cloned().collect();
        let rows = self
            .rows
            .iter()
            .zip(&self.time_rows)
            .map(|(r, t)| r.iter().cloned().chain(t.iter().map(|s| format!("{s:.3}"))).collect())
            .collect();
        (header, rows)
    }

    pub fn to_csv(&self) -> String {
        let (header, rows) = self.full_rows();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header).expect("in-memory write");
        for r in rows {
            w.write_record(&r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let (header, rows) = self.full_rows();
        let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for r in &rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            let parts: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &header);
        line(&mut out, &width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
        for r in &rows {
            line(&mut out, r);
        }
        out
    }
}

/// A qualitative property evaluated on the study output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub study: StudyKind,
    pub config: RunConfig,
    pub runs: Vec<RunRecord>,
    pub table: Table,
    pub checks: Vec<Check>,
    /// Set when the study stopped early; the other fields hold what finished.
    pub error: Option<String>,
}

impl StudyReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn timings_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "seconds"]).expect("in-memory write");
        for r in &self.runs {
            w.write_record([r.label.clone(), format!("{:.3}", r.seconds)]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Write `report.json`, `<study>.csv`, `<study>.txt` and `timings.csv`.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>, StudyError> {
        std::fs::create_dir_all(dir).map_err(|source| StudyError::Io { path: dir.to_path_buf(), source })?;
        let name = self.study.as_str();
        let files = [
            ("report.json".to_string(), self.to_json()),
            (format!("{name}.csv"), self.table.to_csv()),
            (format!("{name}.txt"), self.table.to_text()),
            ("timings.csv".to_string(), self.timings_csv()),
        ];
        let mut out = Vec::new();
        for (file, text) in files {
            let path = dir.join(file);
            write(&path, &text)?;
            out.push(path);
        }
        Ok(out)
    }
}

/// A study that stopped early, with everything completed before the error.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct StudyFailure {
    pub partial: Box<StudyReport>,
    #[source]
    pub error: StudyError,
}

fn usd(v: f64) -> String {
    format!("{v:.2}")
}

fn pct(v: f64) -> String {
    format!("{v:.4}")
}

fn line_set(ids: &[usize]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.contains(x))
}

/// `|(vm_br - vm_fs) / vm_br| * 100`; `None` when `vm_br` is zero and the two differ.
pub fn relative_vm_difference(vm_br: f64, vm_fs: f64) -> Option<f64> {
    if vm_br == vm_fs {
        return Some(0.0);
    }
    (vm_br != 0.0).then(|| ((vm_br - vm_fs) / vm_br).abs() * 100.0)
}

/// Solve one run and package it.
pub fn solve_run(
    label: &str,
    inst: &Instance,
    params: &PlanningParams,
    opts: &MilpOptions,
    start: Option<&Plan>,
) -> Result<RunRecord, StudyError> {
    let started = Instant::now();
    let (sol, report) =
        solve_hardening(inst, params, opts, start).map_err(|source| StudyError::Hardening { run: label.into(), source })?;
    let seconds = started.elapsed().as_secs_f64();
    let per_line = (0..inst.num_lines())
        .map(|l| LineDecision {
            line_id: inst.line_ids[l],
            ug_nodes: (0..inst.tree.len()).filter(|&n| sol.plan.alpha[l][n]).collect(),
            revision_year: sol.plan.revision[l],
            vm: (0..inst.tree.len())
                .filter(|&n| sol.plan.beta[l][n] > VM_REPORT_MIN)
                .map(|n| (n, sol.plan.beta[l][n]))
                .collect(),
        })
        .collect();
    Ok(RunRecord {
        label: label.into(),
        mode: params.mode,
        budget_ug: params.budget_ug,
        budget_vm: params.budget_vm,
        ug_only: params.ug_only,
        hazards: "all".into(),
        horizon: inst.tree.horizon(),
        tree_nodes: inst.tree.len(),
        tree_scenarios: inst.tree.leaves().len(),
        objective_usd: sol.objective,
        breakdown: sol.breakdown,
        evaluated_full_usd: None,
        ug_lines: sol.plan.ug_lines(inst),
        per_line,
        solver: SolverSummary {
            status: Status::Optimal.as_str().into(),
            nodes: report.nodes,
            iterations: report.iterations,
            best_bound: report.best_bound,
            gap: report.gap,
        },
        seconds,
        plan: sol.plan,
    })
}

/// Solve TS first when both modes are requested, so the ATS run can start
/// from the TS plan. Returns records in the order of `modes`.
fn solve_modes(
    label: &str,
    cfg: &RunConfig,
    inst: &Instance,
    modes: &[Mode],
    budget: f64,
) -> Result<Vec<RunRecord>, StudyError> {
    let opts = cfg.milp_options();
    let mut ts: Option<RunRecord> = None;
    if modes.contains(&Mode::Ts) {
        ts = Some(solve_run(&format!("{label}/ts"), inst, &cfg.params(Mode::Ts, budget), &opts, None)?);
    }
    let mut out = Vec::new();
    for &mode in modes {
        match mode {
            Mode::Ts => out.push(ts.clone().expect("solved above")),
            Mode::Ats => out.push(solve_run(
                &format!("{label}/ats"),
                inst,
                &cfg.params(Mode::Ats, budget),
                &opts,
                ts.as_ref().map(|r| &r.plan),
            )?),
        }
    }
    Ok(out)
}

/// Collected results of one study, possibly partial.
struct Partial {
    runs: Vec<RunRecord>,
    table: Table,
    checks: Vec<Check>,
    error: Option<StudyError>,
}

impl Partial {
    fn new(table: Table) -> Self {
        Self { runs: Vec::new(), table, checks: Vec::new(), error: None }
    }

    fn check(&mut self, name: &str, holds: bool) {
        self.checks.push(Check { name: name.into(), holds });
    }

    /// Merge independent unit results in order; the first error is kept and
    /// later units are still recorded.
    fn absorb<T>(&mut self, results: Vec<Result<T, StudyError>>, mut each: impl FnMut(&mut Self, T)) {
        for r in results {
            match r {
                Ok(v) => each(self, v),
                Err(e) => {
                    if self.error.is_none() {
                        self.error = Some(e);
                    }
                }
            }
        }
    }
}

/// Run the configured study.
pub fn run_study(cfg: &RunConfig, inputs: &Inputs) -> Result<StudyReport, StudyFailure> {
    let result = (|| -> Result<Partial, StudyError> {
        cfg.validate()?;
        let gamma = cfg.gamma()?;
        Ok(match cfg.study {
            StudyKind::Single => single(cfg, inputs, gamma)?,
            StudyKind::BudgetSweep => budget_sweep(cfg, inputs, gamma)?,
            StudyKind::TsVsAts => ts_vs_ats(cfg, inputs, gamma)?,
            StudyKind::HazardAblation => hazard_ablation(cfg, inputs, gamma)?,
            StudyKind::StrategyAblation => strategy_ablation(cfg, inputs, gamma)?,
            StudyKind::TreeSize => tree_size(cfg, inputs, gamma),
            StudyKind::PruningCompare => pruning_compare(cfg, inputs, gamma)?,
            StudyKind::FullVsPruned => full_vs_pruned(cfg, inputs, gamma),
        })
    })();
    let mut partial = match result {
        Ok(p) => p,
        Err(e) => Partial { error: Some(e), ..Partial::new(Table::default()) },
    };
    let error = partial.error.take();
    let report = StudyReport {
        study: cfg.study,
        config: cfg.clone(),
        runs: partial.runs,
        table: partial.table,
        checks: partial.checks,
        error: error.as_ref().map(|e| e.to_string()),
    };
    match error {
        None => Ok(report),
        Some(error) => Err(StudyFailure { partial: Box::new(report), error }),
    }
}

fn main_instance(cfg: &RunConfig, inputs: &Inputs, gamma: f64) -> Result<Instance, StudyError> {
    let tree = build_tree(&cfg.tree, cfg.horizon, &cfg.hazard_params)?;
    inputs.instance(tree, &inputs.hazard, gamma)
}

fn single(cfg: &RunConfig, inputs: &Inputs, gamma: f64) -> Result<Partial, StudyError> {
    let inst = main_instance(cfg, inputs, gamma)?;
    let budget = cfg.budgets.ug[0];
    let mut p = Partial::new(Table::new(&["mode", "budget", "nodes", "v", "ug_lines", "vm_cost"], &["time_s"]));
    match solve_modes("single", cfg, &inst, &cfg.modes, budget) {
        Ok(runs) => {
            for r in runs {
                p.table.push(
                    vec![
                        r.mode.as_str().into(),
                        usd(budget),
                        r.tree_nodes.to_string(),
                        usd(r.objective_usd),
                        line_set(&r.ug_lines),
                        usd(r.breakdown.vm_spend),
                    ],
                    vec![r.seconds],
                );
                p.runs.push(r);
            }
            if let (Some(ts), Some(ats)) = (
                p.runs.iter().find(|r| r.mode == Mode::Ts),
                p.runs.iter().find(|r| r.mode == Mode::Ats),
            ) {
                let holds = ats.objective_usd <= ts.objective_usd + 1e-6 * ts.objective_usd.abs();
                p.check("ats-not-worse-than-ts", holds);
            }
        }
        Err(e) => p.error = Some(e),
    }
    Ok(p)
}

fn budget_sweep(cfg: &RunConfig, inputs: &Inputs, gamma: f64) -> Result<Partial, StudyError> {
    let inst = main_instance(cfg, inputs, gamma)?;
    let mode = cfg.modes[0];
    let opts = cfg.milp_options();
    let mut p = Partial::new(Table::new(&["budget", "selected_lines", "v", "vm_cost"], &["time_s"]));
    let mut order: Vec<usize> = (0..cfg.budgets.ug.len()).collect();
    order.sort_by(|&a, &b| cfg.budgets.ug[a].total_cmp(&cfg.budgets.ug[b]).then(a.cmp(&b)));
    let mut done: Vec<Option<RunRecord>> = vec![None; order.len()];
    let mut prev: Option<Plan> = None;
    for &k in &order {
        let budget = cfg.budgets.ug[k];
        let label = format!("budget-sweep/{}", usd(budget));
        match solve_run(&label, &inst, &cfg.params(mode, budget), &opts, prev.as_ref()) {
            Ok(r) => {
                prev = Some(r.plan.clone());
                done[k] = Some(r);
            }
            Err(e) => {
                p.error = Some(e);
                break;
            }
        }
    }
    for r in done.iter().flatten() {
        p.table.push(
            vec![usd(r.budget_ug), line_set(&r.ug_lines), usd(r.objective_usd), usd(r.breakdown.vm_spend)],
            vec![r.seconds],
        );
    }
    let sorted: Vec<&RunRecord> = order.iter().filter_map(|&k| done[k].as_ref()).collect();
    let pairs = || sorted.windows(2).map(|w| (w[0], w[1]));
    p.check("objective-non-increasing", pairs().all(|(a, b)| b.objective_usd <= a.objective_usd));
    p.check("ug-sets-nested", pairs().all(|(a, b)| is_subset(&a.ug_lines, &b.ug_lines)));
    p.check(
        "vm-cost-non-increasing",
        pairs().all(|(a, b)| b.breakdown.vm_spend <= a.breakdown.vm_spend * (1.0 + 1e-9) + 1e-6),
    );
    p.runs = done.into_iter().flatten().collect();
    Ok(p)
}

fn ts_vs_ats(cfg: &RunConfig, inputs: &Inputs, gamma: f64) -> Result<Partial, StudyError> {
    let inst = main_instance(cfg, inputs, gamma)?;
    let results: Vec<_> = cfg
        .budgets
        .ug
        .par_iter()
        .map(|&b| solve_modes(&format!("ts-vs-ats/{}", usd(b)), cfg, &inst, &[Mode::Ts, Mode::Ats], b))
        .collect();
    let mut p = Partial::new(Table::new(
        &["budget", "nodes", "v_ts", "v_ats", "g_rel_pct"],
        &["time_ts_s", "time_ats_s"],
    ));
    let mut all_hold = true;
    p.absorb(results, |p, runs| {
        let (ts, ats) = (&runs[0], &runs[1]);
        let g = relative_gain(ts.objective_usd, ats.objective_usd).ok();
        all_hold &= ats.objective_usd <= ts.objective_usd + 1e-6 * ts.objective_usd.abs() && g.is_none_or(|g| g >= 0.0);
        p.table.push(
            vec![
                usd(ts.budget_ug),
                ts.tree_nodes.to_string(),
                usd(ts.objective_usd),
                usd(ats.objective_usd),
                g.map_or(String::new(), pct),
            ],
            vec![ts.seconds, ats.seconds],
        );
        p.runs.extend(runs);
    });
    p.check("g-rel-non-negative", all_hold);
    Ok(p)
}

fn hazard_ablation(cfg: &RunConfig, inputs: &Inputs, gamma: f64) -> Result<Partial, StudyError> {
    let tree = build_tree(&cfg.tree, cfg.horizon, &cfg.hazard_params)?;
    let full = inputs.instance(tree.clone(), &inputs.hazard, gamma)?;
    let wind = inputs.instance(tree, &inputs.hazard.without(Hazard::Earthquake), gamma)?;
    let mode = cfg.modes[0];
    let opts = cfg.milp_options();
    let results: Vec<_> = cfg
        .budgets
        .ug
        .par_iter()
        .map(|&b| -> Result<(RunRecord, RunRecord), StudyError> {
            let label = format!("hazard-ablation/{}", usd(b));
            let params = cfg.params(mode, b);
            let mut sh = solve_run(&format!("{label}/wind-only"), &wind, &params, &opts, None)?;
            sh.hazards = "no-earthquake".into();
            let eval = evaluate_plan(&full, &sh.plan)
                .map_err(|source| StudyError::Hardening { run: sh.label.clone(), source })?;
            sh.evaluated_full_usd = Some(eval.objective());
            let mh = solve_run(&format!("{label}/multi-hazard"), &full, &params, &opts, Some(&sh.plan))?;
            Ok((sh, mh))
        })
        .collect();
    let mut p = Partial::new(Table::new(
        &["budget", "v_multi_hazard", "v_wind_only_planned", "v_wind_only_full_costs", "saving_pct"],
        &["time_wind_only_s", "time_multi_hazard_s"],
    ));
    let mut holds = true;
    p.absorb(results, |p, (sh, mh)| {
        let sh_full = sh.evaluated_full_usd.expect("set above");
        holds &= mh.objective_usd <= sh_full;
        let saving = relative_gain(sh_full, mh.objective_usd).ok();
        p.table.push(
            vec![
                usd(mh.budget_ug),
                usd(mh.objective_usd),
                usd(sh.objective_usd),
                usd(sh_full),
                saving.map_or(String::new(), pct),
            ],
            vec![sh.seconds, mh.seconds],
        );
        p.runs.push(sh);
        p.runs.push(mh);
    });
    p.check("multi-hazard-not-worse", holds);
    Ok(p)
}

fn strategy_ablation(cfg: &RunConfig, inputs: &Inputs, gamma: f64) -> Result<Partial, StudyError> {
    let inst = main_instance(cfg, inputs, gamma)?;
    let mode = cfg.modes[0];
    let opts = cfg.milp_options();
    let results: Vec<_> = cfg
        .budgets
        .ug
        .par_iter()
        .map(|&b| -> Result<(RunRecord, RunRecord), StudyError> {
            let label = format!("strategy-ablation/{}", usd(b));
            let single = PlanningParams { ug_only: true, ..cfg.params(mode, b) };
            let ug = solve_run(&format!("{label}/ug-only"), &inst, &single, &opts, None)?;
            let joint = solve_run(&format!("{label}/joint"), &inst, &cfg.params(mode, b), &opts, Some(&ug.plan))?;
            Ok((ug, joint))
        })
        .collect();
    let mut p = Partial::new(Table::new(
        &["budget", "v_joint", "v_ug_only", "saving_pct"],
        &["time_ug_only_s", "time_joint_s"],
    ));
    let mut holds = true;
    p.absorb(results, |p, (ug, joint)| {
        holds &= joint.objective_usd <= ug.objective_usd;
        let saving = relative_gain(ug.objective_usd, joint.objective_usd).ok();
        p.table.push(
            vec![usd(joint.budget_ug), usd(joint.objective_usd), usd(ug.objective_usd), saving.map_or(String::new(), pct)],
            vec![ug.seconds, joint.seconds],
        );
        p.runs.push(ug);
        p.runs.push(joint);
    });
    p.check("joint-not-worse", holds);
    Ok(p)
}

fn tree_size(cfg: &RunConfig, inputs: &Inputs, gamma: f64) -> Partial {
    let budget = cfg.budgets.ug[0];
    let results: Vec<_> = cfg
        .tree_size
        .scenario_counts
        .par_iter()
        .map(|&k| -> Result<Vec<RunRecord>, StudyError> {
            let tc = TreeConfig { scenarios: k, ..cfg.tree.clone() };
            let inst = inputs.instance(build_tree(&tc, cfg.horizon, &cfg.hazard_params)?, &inputs.hazard, gamma)?;
            solve_modes(&format!("tree-size/{k}"), cfg, &inst, &cfg.modes, budget)
        })
        .collect();
    let mut p = Partial::new(Table::new(&["scenarios", "nodes", "mode", "v"], &["time_s"]));
    p.absorb(results, |p, runs| {
        for r in runs {
            p.table.push(
                vec![r.tree_scenarios.to_string(), r.tree_nodes.to_string(), r.mode.as_str().into(), usd(r.objective_usd)],
                vec![r.seconds],
            );
            p.runs.push(r);
        }
    });
    p
}

fn pruning_compare(cfg: &RunConfig, inputs: &Inputs, gamma: f64) -> Result<Partial, StudyError> {
    let tc = &cfg.tree;
    let source = match tc.kind {
        TreeKind::Fan => ScenarioFan::sample(cfg.horizon, tc.source_scenarios, &cfg.hazard_params, tc.seed)?,
        TreeKind::Full => ScenarioTree::build_full(cfg.horizon, tc.branching, &cfg.hazard_params, tc.seed, tc.node_cap)?.to_fan(),
    };
    let k = tc.scenarios.min(source.len());
    let br = inputs.instance(ScenarioTree::rebuild(&reduce(&source, k, Pruning::Backward, tc.metric)?)?, &inputs.hazard, gamma)?;
    let fs = inputs.instance(ScenarioTree::rebuild(&reduce(&source, k, Pruning::Forward, tc.metric)?)?, &inputs.hazard, gamma)?;
    let mode = cfg.modes[0];
    let opts = cfg.milp_options();
    let results: Vec<_> = cfg
        .budgets
        .ug
        .par_iter()
        .map(|&b| -> Result<(RunRecord, RunRecord), StudyError> {
            let label = format!("pruning-compare/{}", usd(b));
            let params = cfg.params(mode, b);
            let r_br = solve_run(&format!("{label}/backward"), &br, &params, &opts, None)?;
            let r_fs = solve_run(&format!("{label}/forward"), &fs, &params, &opts, None)?;
            Ok((r_br, r_fs))
        })
        .collect();
    let mut p = Partial::new(Table::new(
        &["budget", "lines_br", "lines_fs", "vm_br", "vm_fs", "d_rel_pct"],
        &["time_br_s", "time_fs_s"],
    ));
    p.absorb(results, |p, (r_br, r_fs)| {
        let d = relative_vm_difference(r_br.breakdown.vm_spend, r_fs.breakdown.vm_spend);
        p.table.push(
            vec![
                usd(r_br.budget_ug),
                line_set(&r_br.ug_lines),
                line_set(&r_fs.ug_lines),
                usd(r_br.breakdown.vm_spend),
                usd(r_fs.breakdown.vm_spend),
                d.map_or(String::new(), pct),
            ],
            vec![r_br.seconds, r_fs.seconds],
        );
        p.runs.push(r_br);
        p.runs.push(r_fs);
    });
    Ok(p)
}

/// Full `tree.branching`-ary tree and a tree with the same leaf count pruned
/// from a full `source_branching`-ary tree over the same horizon.
pub fn full_and_pruned(cfg: &RunConfig, horizon: usize) -> Result<(ScenarioTree, ScenarioTree), StudyError> {
    let tc = &cfg.tree;
    if tc.pruning == Pruning::None {
        return Err(StudyError::Config("full-vs-pruned needs tree.pruning = backward or forward".into()));
    }
    let full = ScenarioTree::build_full(horizon, tc.branching, &cfg.hazard_params, tc.seed, tc.node_cap)?;
    let fv = &cfg.full_vs_pruned;
    let source = ScenarioTree::build_full(horizon, fv.source_branching, &cfg.hazard_params, tc.seed, tc.node_cap)?;
    let k = full.leaves().len().min(source.leaves().len());
    let pruned = ScenarioTree::rebuild(&reduce(&source.to_fan(), k, tc.pruning, tc.metric)?)?;
    Ok((full, pruned))
}

fn full_vs_pruned(cfg: &RunConfig, inputs: &Inputs, gamma: f64) -> Partial {
    let budget = cfg.budgets.ug[0];
    let mode = cfg.modes[0];
    let opts = cfg.milp_options();
    let results: Vec<_> = cfg
        .full_vs_pruned
        .horizons
        .par_iter()
        .map(|&t| -> Result<(RunRecord, RunRecord), StudyError> {
            let (full, pruned) = full_and_pruned(cfg, t)?;
            let params = cfg.params(mode, budget);
            let full_inst = inputs.instance(full, &inputs.hazard, gamma)?;
            let pruned_inst = inputs.instance(pruned, &inputs.hazard, gamma)?;
            let a = solve_run(&format!("full-vs-pruned/{t}/full"), &full_inst, &params, &opts, None)?;
            let b = solve_run(&format!("full-vs-pruned/{t}/pruned"), &pruned_inst, &params, &opts, None)?;
            Ok((a, b))
        })
        .collect();
    let mut p = Partial::new(Table::new(
        &["horizon", "nodes_full", "leaves_full", "v_full", "nodes_pruned", "leaves_pruned", "v_pruned", "gap_pct"],
        &["time_full_s", "time_pruned_s", "time_reduction_pct"],
    ));
    p.absorb(results, |p, (a, b)| {
        let gap = ((b.objective_usd - a.objective_usd) / a.objective_usd).abs() * 100.0;
        let reduction = (a.seconds - b.seconds) / a.seconds * 100.0;
        p.table.push(
            vec![
                a.horizon.to_string(),
                a.tree_nodes.to_string(),
                a.tree_scenarios.to_string(),
                usd(a.objective_usd),
                b.tree_nodes.to_string(),
                b.tree_scenarios.to_string(),
                usd(b.objective_usd),
                pct(gap),
            ],
            vec![a.seconds, b.seconds, reduction],
        );
        p.runs.push(a);
        p.runs.push(b);
    });
    p
}
