use crate::branch::NodeTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::IterationLimit => "iteration-limit",
            Status::TimeLimit => "time-limit",
        }
    }

    pub fn is_limit(self) -> bool {
        matches!(self, Status::IterationLimit | Status::TimeLimit)
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of an LP or MILP solve.
///
/// For LPs `best_bound == objective` at optimality and `duals` /
/// `reduced_costs` are populated. For MILPs `x` is the incumbent (empty when
/// none was found) and `best_bound` the smallest open-node bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals: Option<Vec<f64>>,
    pub reduced_costs: Option<Vec<f64>>,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub iterations: usize,
    pub trace: Vec<NodeTrace>,
}

impl SolveReport {
    pub(crate) fn empty(status: Status) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective: f64::INFINITY,
            duals: None,
            reduced_costs: None,
            best_bound: f64::NEG_INFINITY,
            gap: f64::INFINITY,
            nodes: 0,
            iterations: 0,
            trace: Vec::new(),
        }
    }

    pub fn has_solution(&self) -> bool {
        !self.x.is_empty()
    }
}
