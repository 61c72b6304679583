//! `gridharden` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 solver limit
//! reached, 1 any other failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridharden_core::distflow::{ls_cost_table, parse_cases, single_line_cases, DispatchOptions};
use gridharden_core::hardening::{build_milp, Mode, PlanningParams};
use gridharden_core::network::Network;
use gridharden_core::scenario_tree::{Metric, Pruning, ScenarioTree};
use gridharden_core::study::{
    build_tree, run_study, solve_run, Inputs, RunConfig, StudyError, TreeConfig, TreeKind,
};
use gridharden_milp::lp_format;

#[derive(Parser)]
#[command(name = "gridharden", version, about = "Adaptive two-stage grid hardening studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the study described by a TOML config and write its tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Compute the per-line daily load-shedding cost table (CSV).
    Lscost {
        #[arg(long)]
        network: PathBuf,
        /// Outage cases, one comma-separated line-id list per row.
        #[arg(long)]
        cases: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000.0)]
        c_ens: f64,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build (and optionally prune) a scenario tree and write it as JSON.
    Tree {
        #[command(flatten)]
        tree: TreeFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one hardening problem and print the solution report (JSON).
    Solve(SolveArgs),
}

#[derive(Args, Clone)]
struct SolverFlags {
    /// Wall-clock limit per MILP, seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Relative optimality gap.
    #[arg(long)]
    gap: Option<f64>,
}

impl SolverFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(t) = self.time_limit {
            cfg.solver.time_limit_s = Some(t);
        }
        if let Some(g) = self.gap {
            cfg.solver.gap = g;
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PruningArg {
    Backward,
    Forward,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Fan,
    Full,
}

#[derive(Args, Clone)]
struct TreeFlags {
    #[arg(long, default_value_t = 30)]
    horizon: usize,
    #[arg(long, value_enum, default_value = "fan")]
    kind: KindArg,
    #[arg(long, default_value_t = 2)]
    branching: usize,
    /// Paths sampled before reduction (fan trees).
    #[arg(long, default_value_t = 64)]
    source_scenarios: usize,
    /// Scenario count after pruning.
    #[arg(long, default_value_t = 16)]
    scenarios: usize,
    #[arg(long, value_enum, default_value = "backward")]
    pruning: PruningArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl TreeFlags {
    fn config(&self) -> TreeConfig {
        TreeConfig {
            kind: match self.kind {
                KindArg::Fan => TreeKind::Fan,
                KindArg::Full => TreeKind::Full,
            },
            branching: self.branching,
            source_scenarios: self.source_scenarios,
            scenarios: self.scenarios,
            pruning: match self.pruning {
                PruningArg::Backward => Pruning::Backward,
                PruningArg::Forward => Pruning::Forward,
                PruningArg::None => Pruning::None,
            },
            metric: Metric::Standardized,
            seed: self.seed,
            ..TreeConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Ats,
    Ts,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Config supplying paths, economics and tree settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    hazard: Option<PathBuf>,
    /// Precomputed load-shedding table; computed when absent.
    #[arg(long)]
    ls_table: Option<PathBuf>,
    /// Scenario tree JSON (as written by `tree`); built from the config when absent.
    #[arg(long)]
    tree: Option<PathBuf>,
    #[arg(long)]
    budget_ug: Option<f64>,
    #[arg(long)]
    budget_vm: Option<f64>,
    #[arg(long)]
    max_ug_per_node: Option<usize>,
    /// Disable vegetation management.
    #[arg(long)]
    ug_only: bool,
    /// Also write the assembled MILP in LP format.
    #[arg(long)]
    dump_model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self { code: 2, message: message.to_string() }
    }

    fn other(message: impl ToString) -> Self {
        Self { code: 1, message: message.to_string() }
    }
}

impl From<StudyError> for Failure {
    fn from(e: StudyError) -> Self {
        let code = if e.is_solver_limit() {
            3
        } else if e.is_input_error() {
            2
        } else {
            1
        };
        Self { code, message: e.to_string() }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::other(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(config: &Path, out: &Path, solver: &SolverFlags) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(config)?;
    solver.apply(&mut cfg);
    cfg.validate()?;
    let inputs = Inputs::load(&cfg)?;
    match run_study(&cfg, &inputs) {
        Ok(report) => {
            report.write_outputs(out)?;
            print!("{}", report.table.to_text());
            for c in &report.checks {
                println!("check {}: {}", c.name, if c.holds { "holds" } else { "violated" });
            }
            Ok(())
        }
        Err(failure) => {
            failure.partial.write_outputs(out)?;
            Err(failure.error.into())
        }
    }
}

fn cmd_lscost(network: &Path, cases: Option<&Path>, c_ens: f64, out: Option<&Path>) -> Result<(), Failure> {
    let net = Network::from_json(&read(network)?).map_err(Failure::input)?;
    let cases = match cases {
        Some(p) => parse_cases(&read(p)?).map_err(Failure::input)?,
        None => single_line_cases(&net),
    };
    if !(c_ens.is_finite() && c_ens >= 0.0) {
        return Err(Failure::input("--c-ens must be finite and >= 0"));
    }
    let opts = DispatchOptions { c_ens, ..Default::default() };
    let table = ls_cost_table(&net, &cases, &opts).map_err(Failure::other)?;
    emit(out, &table.to_csv())
}

fn cmd_tree(flags: &TreeFlags, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = RunConfig { horizon: flags.horizon, tree: flags.config(), ..RunConfig::default() };
    cfg.validate()?;
    let tree = build_tree(&cfg.tree, cfg.horizon, &cfg.hazard_params).map_err(Failure::input)?;
    emit(out, &tree.to_json())
}

fn cmd_solve(args: &SolveArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cwd = PathBuf::from(".");
    let paths = &mut cfg.paths;
    for (slot, flag) in [
        (&mut paths.network, &args.network),
        (&mut paths.hazard, &args.hazard),
        (&mut paths.ls_table, &args.ls_table),
    ] {
        if let Some(p) = flag {
            *slot = Some(cwd.join(p));
        }
    }
    if let Some(b) = args.budget_ug {
        cfg.budgets.ug = vec![b];
    }
    if let Some(b) = args.budget_vm {
        cfg.budgets.vm = b;
    }
    if args.max_ug_per_node.is_some() {
        cfg.max_ug_per_node = args.max_ug_per_node;
    }
    args.solver.apply(&mut cfg);
    cfg.validate()?;

    let inputs = Inputs::load(&cfg)?;
    let tree = match &args.tree {
        Some(p) => ScenarioTree::from_json(&read(p)?).map_err(Failure::input)?,
        None => build_tree(&cfg.tree, cfg.horizon, &cfg.hazard_params).map_err(Failure::input)?,
    };
    let inst = inputs.instance(tree, &inputs.hazard, cfg.gamma()?)?;
    let params = PlanningParams {
        budget_ug: cfg.budgets.ug[0],
        budget_vm: cfg.budgets.vm,
        max_ug_per_node: cfg.max_ug_per_node,
        mode: match args.model {
            ModelArg::Ats => Mode::Ats,
            ModelArg::Ts => Mode::Ts,
        },
        ug_only: args.ug_only,
    };
    if let Some(path) = &args.dump_model {
        let model = build_milp(&inst, &params).map_err(Failure::input)?;
        let text = lp_format::write(&model.lp).map_err(Failure::other)?;
        emit(Some(path), &text)?;
    }
    let record = solve_run("solve", &inst, &params, &cfg.milp_options(), None)?;
    let mut json = serde_json::to_string_pretty(&record).map_err(Failure::other)?;
    json.push('\n');
    emit(args.out.as_deref(), &json)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, solver } => cmd_run(config, out, solver),
        Command::Lscost { network, cases, c_ens, out } => cmd_lscost(network, cases.as_deref(), *c_ens, out.as_deref()),
        Command::Tree { tree, out } => cmd_tree(tree, out.as_deref()),
        Command::Solve(args) => cmd_solve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
